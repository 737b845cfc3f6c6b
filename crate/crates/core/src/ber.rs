//! Closed-form bit-error rates for a fixed decision rule, and the BER
//! derivative with respect to the detection interval.

use serde::{Deserialize, Serialize};

use crate::arrival::{
    binomial_support, conv_point_ln, ChannelState, CountModel, GaussianMixture, IsiState, LogSeq,
};
use crate::channel::LinkConfig;
use crate::detector::{location_bounds, rule_for_state, rule_from_log_likelihoods, Bit, DecisionRule};
use crate::error::{Error, Result};
use crate::numerics::{gamma_p, gamma_q, ln_binomial_pmf, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Known,
    UnknownLocation,
    Isi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerValue {
    pub value: f64,
    pub model: CountModel,
    pub scenario: Scenario,
}

impl BerValue {
    fn new(value: f64, model: CountModel, scenario: Scenario) -> Result<Self> {
        if !value.is_finite() || value < -1e-12 || value > 0.5 + 1e-9 {
            return Err(Error::NumericFailure(format!("BER evaluated to {value}")));
        }
        Ok(BerValue {
            value: value.clamp(0.0, 0.5),
            model,
            scenario,
        })
    }
}

fn check_discrete(rule: &DecisionRule, y_max: usize) -> Result<()> {
    match rule.y_max() {
        Some(m) if m == y_max => Ok(()),
        Some(m) => Err(Error::LengthMismatch {
            what: "decision rule support",
            left: m + 1,
            right: y_max + 1,
        }),
        None => Err(Error::Domain("discrete BER needs a discrete rule".into())),
    }
}

/// Mass of `seq` on the counts the rule labels `want`.
fn mass_on(seq: &LogSeq, rule: &DecisionRule, want: Bit) -> CompensatedSum {
    let mut s = CompensatedSum::new();
    for (i, &lv) in seq.v.iter().enumerate() {
        let y = seq.off + i;
        let label = if rule.in_zero_set(y) { Bit::Zero } else { Bit::One };
        if label == want {
            s.add(lv.exp());
        }
    }
    s
}

/// BER of a no-ISI snapshot under a fixed rule.
pub fn ber_for_state(state: &ChannelState, model: CountModel, rule: &DecisionRule) -> Result<f64> {
    if model == CountModel::Gaussian {
        if rule.is_degenerate() {
            return Ok(0.5);
        }
        return ber_gaussian_mixtures(
            &state.gaussian_mixture(state.low_count)?,
            &state.gaussian_mixture(state.high_count)?,
            rule,
        );
    }
    check_discrete(rule, state.y_max())?;
    if model == CountModel::Binomial {
        return Ok(ber_binomial_runs(state, rule));
    }
    let comps0 = state.component_logs(model, state.low_count);
    let comps1 = state.component_logs(model, state.high_count);
    Ok(ber_from_components(state, model, rule, &comps0, &comps1))
}

/// Maximal runs `[a, b]` of counts in `0..=y_max` that the rule labels `want`.
fn runs_of(rule: &DecisionRule, y_max: usize, want: Bit) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for y in 0..=y_max {
        let hit = rule.in_zero_set(y) == (want == Bit::Zero);
        match (hit, start) {
            (true, None) => start = Some(y),
            (false, Some(a)) => {
                out.push((a, y - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        out.push((a, y_max));
    }
    out
}

// Binomial mass more than this many nats below the mode is dropped from
// fixed-rule BER sums.
const WINDOW_DEPTH: f64 = 80.0;

/// Binomial pmf in linear space with prefix and suffix sums, so interval
/// masses on either side of the mode are differences of small numbers.
struct TailSums {
    off: usize,
    mode: usize,
    pre: Vec<f64>,
    suf: Vec<f64>,
}

impl TailSums {
    fn binomial(n: u64, p: f64) -> Self {
        let seq = LogSeq::binomial_window(n, p, WINDOW_DEPTH);
        let probs: Vec<f64> = seq.v.iter().map(|v| v.exp()).collect();
        let mode = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |m, (i, &v)| if v > m.1 { (i, v) } else { m })
            .0;
        let mut pre = Vec::with_capacity(probs.len() + 1);
        let mut acc = CompensatedSum::new();
        pre.push(0.0);
        for &v in &probs {
            acc.add(v);
            pre.push(acc.value());
        }
        let mut suf = vec![0.0; probs.len() + 1];
        let mut acc = CompensatedSum::new();
        for (i, &v) in probs.iter().enumerate().rev() {
            acc.add(v);
            suf[i] = acc.value();
        }
        TailSums {
            off: seq.off,
            mode,
            pre,
            suf,
        }
    }

    /// Mass on the inclusive count range `[a, b]`.
    fn mass(&self, a: i64, b: i64) -> f64 {
        let len = self.pre.len() as i64 - 1;
        let (a, b) = ((a - self.off as i64).max(0), (b - self.off as i64).min(len - 1));
        if a > b {
            return 0.0;
        }
        let (a, b) = (a as usize, b as usize);
        if a > self.mode {
            self.suf[a] - self.suf[b + 1]
        } else {
            self.pre[b + 1] - self.pre[a]
        }
    }
}

/// Mass of X + Y on `runs`, X ~ B(nx, px), Y given by its tail sums.
fn sum_mass_on_runs(nx: u64, px: f64, y: &TailSums, runs: &[(usize, usize)]) -> f64 {
    let xs = LogSeq::binomial_window(nx, px, WINDOW_DEPTH);
    let mut s = CompensatedSum::new();
    for k in xs.off..xs.end() {
        let w = xs.get(k).exp();
        let k = k as i64;
        let mut inner = CompensatedSum::new();
        for &(a, b) in runs {
            inner.add(y.mass(a as i64 - k, b as i64 - k));
        }
        s.add(w * inner.value());
    }
    s.value()
}

// Fixed-rule binomial BER without forming the full count distributions.
fn ber_binomial_runs(state: &ChannelState, rule: &DecisionRule) -> f64 {
    let y_max = state.y_max();
    let z0 = runs_of(rule, y_max, Bit::Zero);
    let z1 = runs_of(rule, y_max, Bit::One);
    let mut total = CompensatedSum::new();
    for node in &state.interferers {
        for x_i in state.counts() {
            let ys = TailSums::binomial(x_i as u64, node.p);
            let w = 0.25 * node.weight;
            total.add(w * sum_mass_on_runs(state.high_count as u64, state.p_tx, &ys, &z0));
            total.add(w * sum_mass_on_runs(state.low_count as u64, state.p_tx, &ys, &z1));
        }
    }
    total.value()
}

/// Rule and BER at one snapshot, sharing the likelihood computation.
pub fn rule_and_ber(state: &ChannelState, model: CountModel) -> Result<(DecisionRule, f64)> {
    if model == CountModel::Gaussian {
        let rule = rule_for_state(state, model)?;
        let ber = ber_for_state(state, model, &rule)?;
        return Ok((rule, ber));
    }
    let comps0 = state.component_logs(model, state.low_count);
    let comps1 = state.component_logs(model, state.high_count);
    let rule = rule_from_log_likelihoods(&state.mixture_log(&comps0), &state.mixture_log(&comps1))?;
    let ber = ber_from_components(state, model, &rule, &comps0, &comps1);
    Ok((rule, ber))
}

fn ber_from_components(
    state: &ChannelState,
    model: CountModel,
    rule: &DecisionRule,
    comps0: &[[LogSeq; 2]],
    comps1: &[[LogSeq; 2]],
) -> f64 {
    let y_max = state.y_max();
    let mut total = CompensatedSum::new();
    for (k, node) in state.interferers.iter().enumerate() {
        for (j, x_i) in state.counts().into_iter().enumerate() {
            let w = 0.25 * node.weight;
            // sent N1, decided bit0
            total.add(w * mass_on(&comps1[k][j], rule, Bit::Zero).value());
            // sent N0, decided bit1 (including the Poisson tail beyond y_max)
            let mut miss = mass_on(&comps0[k][j], rule, Bit::One);
            if model == CountModel::Poisson {
                let lambda = state.low_count as f64 * state.p_tx + x_i as f64 * node.p;
                miss.add(gamma_p(y_max as f64 + 1.0, lambda));
            }
            total.add(w * miss.value());
        }
    }
    total.value()
}

pub(crate) fn ber_gaussian_mixtures(
    f0: &GaussianMixture,
    f1: &GaussianMixture,
    rule: &DecisionRule,
) -> Result<f64> {
    let DecisionRule::Continuous {
        boundaries,
        leftmost,
        degenerate,
    } = rule
    else {
        return Err(Error::Domain("Gaussian BER needs a continuous rule".into()));
    };
    if *degenerate {
        return Ok(0.5);
    }
    let mut edges = Vec::with_capacity(boundaries.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend_from_slice(boundaries);
    edges.push(f64::INFINITY);
    let mut label = *leftmost;
    let mut total = CompensatedSum::new();
    for w in edges.windows(2) {
        let p = match label {
            Bit::Zero => f1.interval_prob(w[0], w[1]),
            Bit::One => f0.interval_prob(w[0], w[1]),
        };
        total.add(0.5 * p);
        label = label.flip();
    }
    Ok(total.value())
}

/// Exact BER under the Binomial count model.
pub fn ber_binomial(config: &LinkConfig, t_r: f64, rule: &DecisionRule) -> Result<BerValue> {
    let st = ChannelState::known(config, t_r)?;
    BerValue::new(ber_for_state(&st, CountModel::Binomial, rule)?, CountModel::Binomial, Scenario::Known)
}

/// BER under the Poisson approximation; the unbounded Z1 tail is evaluated
/// with the regularized incomplete gamma function.
pub fn ber_poisson(config: &LinkConfig, t_r: f64, rule: &DecisionRule) -> Result<BerValue> {
    let st = ChannelState::known(config, t_r)?;
    BerValue::new(ber_for_state(&st, CountModel::Poisson, rule)?, CountModel::Poisson, Scenario::Known)
}

/// P(Poisson(lambda) <= k) = Q(k + 1, lambda); zero for negative k.
fn poisson_cdf(k: i64, lambda: f64) -> f64 {
    if k < 0 {
        0.0
    } else {
        gamma_q(k as f64 + 1.0, lambda)
    }
}

/// Poisson BER of the single-threshold rule Z0 = {0..=γ} in incomplete-gamma form.
pub fn ber_poisson_gamma_form(config: &LinkConfig, t_r: f64, gamma_th: i64) -> Result<BerValue> {
    let st = ChannelState::known(config, t_r)?;
    BerValue::new(poisson_gamma_form_state(&st, gamma_th), CountModel::Poisson, Scenario::Known)
}

pub(crate) fn poisson_gamma_form_state(st: &ChannelState, gamma_th: i64) -> f64 {
    let (n0, n1) = (st.low_count as f64, st.high_count as f64);
    let (p, q) = (st.p_tx, st.interferers[0].p);
    let c = |lambda: f64| poisson_cdf(gamma_th, lambda);
    0.5 + 0.25 * (c(n1 * p + n0 * q) + c(n1 * p + n1 * q) - c(n0 * p + n0 * q) - c(n0 * p + n1 * q))
}

/// BER under the Gaussian approximation for a continuous rule.
pub fn ber_gaussian(config: &LinkConfig, t_r: f64, rule: &DecisionRule) -> Result<BerValue> {
    let st = ChannelState::known(config, t_r)?;
    BerValue::new(ber_for_state(&st, CountModel::Gaussian, rule)?, CountModel::Gaussian, Scenario::Known)
}

/// BER averaged over an interferer uniformly located in the configured
/// bounds, with the rule held fixed.
pub fn ber_unknown_location(
    config: &LinkConfig,
    model: CountModel,
    t_r: f64,
    rule: &DecisionRule,
    quadrature_nodes: usize,
) -> Result<BerValue> {
    let st = ChannelState::unknown_location(config, t_r, location_bounds(config)?, quadrature_nodes)?;
    BerValue::new(ber_for_state(&st, model, rule)?, model, Scenario::UnknownLocation)
}

/// BER of an ISI snapshot under a fixed rule.
pub fn ber_for_isi_state(state: &IsiState, model: CountModel, rule: &DecisionRule) -> Result<f64> {
    if model == CountModel::Gaussian {
        if rule.is_degenerate() {
            return Ok(0.5);
        }
        return ber_gaussian_mixtures(
            &state.gaussian_mixture(state.low_count)?,
            &state.gaussian_mixture(state.high_count)?,
            rule,
        );
    }
    let y_max = state.y_max();
    check_discrete(rule, y_max)?;
    let l0 = state.log_likelihood(model, state.low_count);
    let l1 = state.log_likelihood(model, state.high_count);
    let mut wrong1 = CompensatedSum::new();
    let mut right0 = CompensatedSum::new();
    let mut wrong0 = CompensatedSum::new();
    for y in 0..=y_max {
        if rule.in_zero_set(y) {
            wrong1.add(l1[y].exp());
            right0.add(l0[y].exp());
        } else {
            wrong0.add(l0[y].exp());
        }
    }
    let miss0 = match model {
        CountModel::Poisson => 1.0 - right0.value(),
        _ => wrong0.value(),
    };
    Ok(0.5 * wrong1.value() + 0.5 * miss0)
}

/// Binomial BER with ISI memory `config.isi_memory`.
pub fn ber_isi(config: &LinkConfig, t_r: f64, rule: &DecisionRule) -> Result<BerValue> {
    ber_isi_model(config, CountModel::Binomial, t_r, rule)
}

pub fn ber_isi_model(
    config: &LinkConfig,
    model: CountModel,
    t_r: f64,
    rule: &DecisionRule,
) -> Result<BerValue> {
    if config.isi_memory == 1 && model != CountModel::Gaussian {
        let st = ChannelState::known(config, t_r)?;
        return BerValue::new(ber_for_state(&st, model, rule)?, model, Scenario::Isi);
    }
    let st = IsiState::new(config, t_r)?;
    BerValue::new(ber_for_isi_state(&st, model, rule)?, model, Scenario::Isi)
}

// Counts z where 1[z+1 ∈ Z0] - 1[z ∈ Z0] is nonzero, with that sign.
fn zero_set_edges(rule: &DecisionRule, y_max: usize) -> Vec<(usize, f64)> {
    (0..=y_max)
        .filter_map(|z| {
            let coef = rule.in_zero_set(z + 1) as i32 - rule.in_zero_set(z) as i32;
            (coef != 0).then_some((z, coef as f64))
        })
        .collect()
}

// Same sum as `zero_set_step` for D = B(a) * B(b), evaluated only at the edges.
fn boundary_step(a: (u64, f64), b: (u64, f64), edges: &[(usize, f64)]) -> f64 {
    let mut s = CompensatedSum::new();
    for &(z, coef) in edges {
        let ln = conv_point_ln(
            |k| ln_binomial_pmf(a.0, a.1, k as u64),
            binomial_support(a.0, a.1),
            |k| ln_binomial_pmf(b.0, b.1, k as u64),
            binomial_support(b.0, b.1),
            z,
        );
        s.add(coef * ln.exp());
    }
    s.value()
}

// Σ_{y ∈ Z0} [D(y-1) - D(y)] = Σ_z D(z) (1[z+1 ∈ Z0] - 1[z ∈ Z0]).
fn zero_set_step(seq: &LogSeq, rule: &DecisionRule) -> f64 {
    let mut s = CompensatedSum::new();
    for (i, &lv) in seq.v.iter().enumerate() {
        let z = seq.off + i;
        let coef = rule.in_zero_set(z + 1) as i32 - rule.in_zero_set(z) as i32;
        if coef != 0 {
            s.add(coef as f64 * lv.exp());
        }
    }
    s.value()
}

/// dBER/dT_r with the rule held fixed, for a snapshot carrying hit-rate
/// derivatives.
pub fn ber_gradient_for_state(
    state: &ChannelState,
    model: CountModel,
    rule: &DecisionRule,
) -> Result<f64> {
    if model == CountModel::Gaussian {
        return Err(Error::Domain("analytic gradient covers discrete models only".into()));
    }
    check_discrete(rule, state.y_max())?;
    // dBER = ½ Σ_{Z0} dP(y|N1) − ½ Σ_{Z0} dP(y|N0)
    let edges = zero_set_edges(rule, state.y_max());
    let mut total = CompensatedSum::new();
    for (sign, x_t) in [(1.0, state.high_count), (-1.0, state.low_count)] {
        for node in &state.interferers {
            for x_i in state.counts() {
                let w = sign * 0.25 * node.weight;
                match model {
                    CountModel::Poisson => {
                        let lambda = x_t as f64 * state.p_tx + x_i as f64 * node.p;
                        let dl = x_t as f64 * state.dp_tx + x_i as f64 * node.dp;
                        let seq = LogSeq::poisson(lambda, state.y_max() + 1);
                        total.add(w * dl * zero_set_step(&seq, rule));
                    }
                    _ => {
                        if x_t > 0 && state.dp_tx != 0.0 {
                            let step = boundary_step(
                                (x_t as u64 - 1, state.p_tx),
                                (x_i as u64, node.p),
                                &edges,
                            );
                            total.add(w * x_t as f64 * state.dp_tx * step);
                        }
                        if x_i > 0 && node.dp != 0.0 {
                            let step = boundary_step(
                                (x_t as u64, state.p_tx),
                                (x_i as u64 - 1, node.p),
                                &edges,
                            );
                            total.add(w * x_i as f64 * node.dp * step);
                        }
                    }
                }
            }
        }
    }
    let g = total.value();
    if !g.is_finite() {
        return Err(Error::NumericFailure(format!("gradient evaluated to {g}")));
    }
    Ok(g)
}

/// dBER/dT_r for a known interferer location, rule held fixed.
pub fn ber_gradient(
    config: &LinkConfig,
    model: CountModel,
    t_r: f64,
    rule: &DecisionRule,
) -> Result<f64> {
    ber_gradient_for_state(&ChannelState::known(config, t_r)?, model, rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{build_rule_discrete, build_rule_gaussian};

    #[test]
    fn zero_window_is_guessing() {
        for cfg in [LinkConfig::table1_1d(), LinkConfig::table1_3d()] {
            let r = build_rule_discrete(&cfg, CountModel::Binomial, 0.0).unwrap();
            assert!((ber_binomial(&cfg, 0.0, &r).unwrap().value - 0.5).abs() < 1e-15);
            let r = build_rule_discrete(&cfg, CountModel::Poisson, 0.0).unwrap();
            assert!((ber_poisson(&cfg, 0.0, &r).unwrap().value - 0.5).abs() < 1e-15);
            let r = build_rule_gaussian(&cfg, 0.0).unwrap();
            assert_eq!(ber_gaussian(&cfg, 0.0, &r).unwrap().value, 0.5);
        }
    }

    #[test]
    fn indistinguishable_interferer_quarter() {
        let cfg = LinkConfig::table1_1d().with_ix_ratio(1.0);
        for frac in [0.1, 0.5, 1.0] {
            let t_r = frac * cfg.symbol_interval;
            let r = build_rule_discrete(&cfg, CountModel::Binomial, t_r).unwrap();
            let b = ber_binomial(&cfg, t_r, &r).unwrap().value;
            assert!((b - 0.25).abs() < 0.01, "{frac}: {b}");
        }
    }

    #[test]
    fn small_case_matches_enumeration() {
        // N0=1, N1=2, p_d=0.5, p_dI=0.25: errors enumerated by hand-written loops
        let st = ChannelState::from_probs(1, 2, 0.5, 0.25).unwrap();
        let rule = rule_for_state(&st, CountModel::Binomial).unwrap();
        let binom = |n: u32, p: f64, k: u32| -> f64 {
            if k > n {
                return 0.0;
            }
            let c = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
            c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
        };
        let mut want = 0.0;
        for x_t in [1u32, 2] {
            for x_i in [1u32, 2] {
                for a in 0..=x_t {
                    for b in 0..=x_i {
                        let pr = 0.25 * binom(x_t, 0.5, a) * binom(x_i, 0.25, b);
                        let decided = crate::detector::detect((a + b) as u64, &rule);
                        let sent = if x_t == 1 { Bit::Zero } else { Bit::One };
                        if decided != sent {
                            want += pr;
                        }
                    }
                }
            }
        }
        let got = ber_for_state(&st, CountModel::Binomial, &rule).unwrap();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn poisson_gamma_identity() {
        let cfg = LinkConfig::table1_3d();
        for k in 1..=20 {
            let t_r = cfg.symbol_interval * k as f64 / 20.0;
            let rule = build_rule_discrete(&cfg, CountModel::Poisson, t_r).unwrap();
            let g = rule.single_threshold().expect("single threshold");
            let a = ber_poisson(&cfg, t_r, &rule).unwrap().value;
            let b = ber_poisson_gamma_form(&cfg, t_r, g).unwrap().value;
            assert!((a - b).abs() < 1e-10, "{t_r}: {a} vs {b}");
        }
        let t_r = cfg.symbol_interval / 3.0;
        assert!((ber_poisson_gamma_form(&cfg, t_r, -1).unwrap().value - 0.5).abs() < 1e-15);
        assert!((ber_poisson_gamma_form(&cfg, t_r, 1_000_000).unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fig2_minimum_neighbourhood() {
        let cfg = LinkConfig::table1_3d();
        let t_r = 0.2 * cfg.symbol_interval;
        let r = build_rule_discrete(&cfg, CountModel::Binomial, t_r).unwrap();
        let b = ber_binomial(&cfg, t_r, &r).unwrap().value;
        assert!(b > 1e-3 && b < 4e-3, "{b}");
        let r = build_rule_discrete(&cfg, CountModel::Poisson, t_r).unwrap();
        let p = ber_poisson(&cfg, t_r, &r).unwrap().value;
        assert!(p > 1e-3 && p < 4e-3, "{p}");
    }

    #[test]
    fn gaussian_tracks_binomial() {
        let cfg = LinkConfig::table1_3d();
        for k in 1..=10 {
            let t_r = cfg.symbol_interval * k as f64 / 10.0;
            let rb = build_rule_discrete(&cfg, CountModel::Binomial, t_r).unwrap();
            let rg = build_rule_gaussian(&cfg, t_r).unwrap();
            let b = ber_binomial(&cfg, t_r, &rb).unwrap().value;
            let g = ber_gaussian(&cfg, t_r, &rg).unwrap().value;
            assert!(((g - b) / b).abs() < 0.1, "T_r/T_b={}: {g} vs {b}", k as f64 / 10.0);
        }
    }

    #[test]
    fn gaussian_matches_density_quadrature() {
        // BER = ½ ∫ min(f0, f1) dy for the ML rule, checked by Simpson's rule
        let st = ChannelState::from_probs(1000, 2000, 0.05, 0.0).unwrap();
        let rule = rule_for_state(&st, CountModel::Gaussian).unwrap();
        let got = ber_for_state(&st, CountModel::Gaussian, &rule).unwrap();
        let f0 = st.gaussian_mixture(1000).unwrap();
        let f1 = st.gaussian_mixture(2000).unwrap();
        let (lo, hi, n) = (-100.0, 260.0, 200_000);
        let h = (hi - lo) / n as f64;
        let f = |y: f64| f0.ln_pdf(y).exp().min(f1.ln_pdf(y).exp());
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        let want = 0.5 * s * h / 3.0;
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (cfg, model) in [
            (LinkConfig::table1_3d(), CountModel::Binomial),
            (LinkConfig::table1_3d(), CountModel::Poisson),
            (LinkConfig::table1_1d(), CountModel::Binomial),
            (LinkConfig::table1_1d(), CountModel::Poisson),
        ] {
            for frac in [0.05, 0.15, 0.3, 0.6, 0.9] {
                let t = frac * cfg.symbol_interval;
                let rule = build_rule_discrete(&cfg, model, t).unwrap();
                let f = |t: f64| {
                    ber_for_state(&ChannelState::known(&cfg, t).unwrap(), model, &rule).unwrap()
                };
                let h = 1e-5 * t;
                let fd = (8.0 * (f(t + h) - f(t - h)) - (f(t + 2.0 * h) - f(t - 2.0 * h))) / (12.0 * h);
                let g = ber_gradient(&cfg, model, t, &rule).unwrap();
                assert!(((g - fd) / g).abs() < 1e-5, "{model:?} {frac}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn run_sums_match_full_distributions() {
        let cases = [
            (LinkConfig::table1_3d(), 0.2),
            (LinkConfig::table1_3d().with_ix_ratio(0.8), 0.6),
            (LinkConfig::table1_1d().with_ix_ratio(2.0), 0.05),
        ];
        for (cfg, frac) in cases {
            let st = ChannelState::known(&cfg, frac * cfg.symbol_interval).unwrap();
            let (rule, full) = rule_and_ber(&st, CountModel::Binomial).unwrap();
            let runs = ber_for_state(&st, CountModel::Binomial, &rule).unwrap();
            assert!(((runs - full) / full).abs() < 1e-12, "{runs} vs {full}");
            // a rule unrelated to the likelihoods, many runs
            let y_max = st.y_max();
            let membership = (0..=y_max)
                .map(|y| if (y / 7) % 3 == 0 { Bit::Zero } else { Bit::One })
                .collect();
            let odd = DecisionRule::Discrete { membership };
            let comps0 = st.component_logs(CountModel::Binomial, st.low_count);
            let comps1 = st.component_logs(CountModel::Binomial, st.high_count);
            let full = ber_from_components(&st, CountModel::Binomial, &odd, &comps0, &comps1);
            let runs = ber_for_state(&st, CountModel::Binomial, &odd).unwrap();
            assert!(((runs - full) / full).abs() < 1e-12, "{runs} vs {full}");
        }
    }

    #[test]
    fn gradient_negative_near_zero() {
        let cfg = LinkConfig::table1_3d();
        let t = 1e-3 * cfg.symbol_interval;
        let rule = build_rule_discrete(&cfg, CountModel::Binomial, t).unwrap();
        let g = ber_gradient(&cfg, CountModel::Binomial, t, &rule).unwrap();
        assert!(g < 0.0, "{g}");
    }

    #[test]
    fn rule_size_mismatch_is_reported() {
        let cfg = LinkConfig::table1_1d();
        let rule = DecisionRule::Discrete {
            membership: vec![Bit::Zero; 10],
        };
        assert!(matches!(ber_binomial(&cfg, 1.0, &rule), Err(Error::LengthMismatch { .. })));
    }
}
