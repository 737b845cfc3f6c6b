//! Search for the BER-minimizing detection interval.
//!
//! Both iterative methods work in the normalized variable u = T_r / T_b on
//! [0, 1] and minimize ln P_b, which has the same minimizers as P_b but a
//! gradient scale that does not collapse when the BER is tiny.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrival::{ChannelState, CountModel};
use crate::ber::{ber_for_state, ber_gradient_for_state, rule_and_ber};
use crate::channel::LinkConfig;
use crate::detector::{location_bounds, rule_for_state, Bit, DecisionRule, TIE_TOLERANCE};
use crate::error::{Error, Result};

/// Quadrature nodes used when the interferer location is unknown.
pub const DEFAULT_QUADRATURE_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Alg1,
    Alg2,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alg1Params {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    /// Step-size stopping threshold, relative to T_b.
    pub eps: f64,
    /// First probed detection interval, relative to T_b.
    pub t0: f64,
    /// Probes per symbol interval when scanning for rule changes.
    pub probes: usize,
    /// Width to which rule-change points are bisected, relative to T_b.
    pub bisect_width: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
}

impl Default for Alg1Params {
    fn default() -> Self {
        Alg1Params {
            alpha: 0.5,
            beta: 0.5,
            c: 1e-4,
            eps: 1e-9,
            t0: 1e-6,
            probes: 1000,
            bisect_width: 1e-9,
            max_iterations: 500,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alg2Params {
    /// Initial stencil scale, relative to T_b.
    pub eps0: f64,
    /// Stencil shrink factor.
    pub shrink: f64,
    /// Stop once the stencil scale drops below this, relative to T_b.
    pub tau: f64,
    pub beta: f64,
    /// Sufficient-decrease constant.
    pub c: f64,
    /// Backtracks before the stencil is declared a failure and shrunk.
    pub a_max: usize,
    pub max_iterations_per_level: usize,
    /// Starting point, relative to T_b.
    pub start: f64,
}

impl Default for Alg2Params {
    fn default() -> Self {
        Alg2Params {
            eps0: 0.05,
            shrink: 0.5,
            tau: 1e-6,
            beta: 0.5,
            c: 1e-4,
            a_max: 40,
            max_iterations_per_level: 200,
            start: 1.0,
        }
    }
}

/// Range of detection intervals over which the decision rule is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityInterval {
    pub t_lo: f64,
    pub t_hi: f64,
    pub rule: DecisionRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTrace {
    pub interval: StabilityInterval,
    pub t_opt: f64,
    pub ber_opt: f64,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub t_star: f64,
    pub ber_star: f64,
    pub algorithm: Algorithm,
    pub model: CountModel,
    pub intervals: Vec<IntervalTrace>,
    /// Smallest per-interval minimizer, the literal "min over t_opt" reading.
    pub t_star_time_min: Option<f64>,
    pub iterations: usize,
    pub gradient_evals: usize,
    pub function_evals: usize,
    pub rule_evals: usize,
    /// Objective constant over the whole search range.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Setting {
    Known,
    Unknown { bounds: (f64, f64), nodes: usize },
}

/// BER as a function of the detection interval for one configuration.
#[derive(Debug, Clone)]
pub struct Objective {
    config: LinkConfig,
    model: CountModel,
    setting: Setting,
}

impl Objective {
    /// Known or unknown interferer location, as the config states.
    pub fn new(config: &LinkConfig, model: CountModel) -> Result<Self> {
        Self::with_nodes(config, model, DEFAULT_QUADRATURE_NODES)
    }

    pub fn with_nodes(config: &LinkConfig, model: CountModel, nodes: usize) -> Result<Self> {
        config.validate()?;
        let setting = if config.interference_location_known {
            Setting::Known
        } else {
            Setting::Unknown {
                bounds: location_bounds(config)?,
                nodes,
            }
        };
        Ok(Objective {
            config: config.clone(),
            model,
            setting,
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn model(&self) -> CountModel {
        self.model
    }

    pub fn state(&self, t_r: f64) -> Result<ChannelState> {
        match self.setting {
            Setting::Known => ChannelState::known(&self.config, t_r),
            Setting::Unknown { bounds, nodes } => {
                ChannelState::unknown_location(&self.config, t_r, bounds, nodes)
            }
        }
    }

    pub fn rule(&self, t_r: f64) -> Result<DecisionRule> {
        rule_for_state(&self.state(t_r)?, self.model)
    }

    /// ML rule at `t_r` and the BER it attains.
    pub fn evaluate(&self, t_r: f64) -> Result<(DecisionRule, f64)> {
        rule_and_ber(&self.state(t_r)?, self.model)
    }

    pub fn ber_with(&self, t_r: f64, rule: &DecisionRule) -> Result<f64> {
        ber_for_state(&self.state(t_r)?, self.model, rule)
    }

    pub fn gradient_with(&self, t_r: f64, rule: &DecisionRule) -> Result<f64> {
        ber_gradient_for_state(&self.state(t_r)?, self.model, rule)
    }

    fn label_at(&self, t_r: f64, y: usize) -> Result<Bit> {
        let st = self.state(t_r)?;
        let l0 = st.log_likelihood_at(self.model, st.low_count, y);
        let l1 = st.log_likelihood_at(self.model, st.high_count, y);
        Ok(if l0 > l1 + TIE_TOLERANCE { Bit::Zero } else { Bit::One })
    }
}

#[derive(Default)]
struct Counters {
    rules: usize,
    functions: usize,
    gradients: usize,
    iterations: usize,
}

/// Bisect on the full rule: returns (last point with `old`, first point
/// without, rule there).
fn bisect_full(
    obj: &Objective,
    old: &DecisionRule,
    mut a: f64,
    mut b: f64,
    width: f64,
    n: &mut Counters,
) -> Result<(f64, f64, DecisionRule)> {
    let mut rb = None;
    while b - a > width {
        let m = 0.5 * (a + b);
        n.rules += 1;
        let r = obj.rule(m)?;
        if r == *old {
            a = m;
        } else {
            b = m;
            rb = Some(r);
        }
    }
    let rb = match rb {
        Some(r) => r,
        None => {
            n.rules += 1;
            obj.rule(b)?
        }
    };
    Ok((a, b, rb))
}

// Earliest rule change in (a, b]: labels of the counts that differ between
// the two rules are bisected one at a time with single-count likelihoods,
// then the full rule is checked at the located point.
fn locate_change(
    obj: &Objective,
    old: &DecisionRule,
    new: &DecisionRule,
    a: f64,
    b: f64,
    width: f64,
    n: &mut Counters,
) -> Result<(f64, f64, DecisionRule)> {
    let (DecisionRule::Discrete { membership: mo }, DecisionRule::Discrete { membership: mn }) =
        (old, new)
    else {
        return bisect_full(obj, old, a, b, width, n);
    };
    let diff: Vec<usize> = (0..mo.len()).filter(|&y| mo[y] != mn[y]).collect();
    if diff.is_empty() || diff.len() > 64 {
        return bisect_full(obj, old, a, b, width, n);
    }
    let (mut best_a, mut best_b) = (a, b);
    let mut found = false;
    for &y in &diff {
        if obj.label_at(a, y)? != mo[y] {
            return bisect_full(obj, old, a, b, width, n);
        }
        let (mut lo, mut hi) = (a, best_b);
        if obj.label_at(hi, y)? == mo[y] {
            continue;
        }
        while hi - lo > width {
            let m = 0.5 * (lo + hi);
            if obj.label_at(m, y)? == mo[y] {
                lo = m;
            } else {
                hi = m;
            }
        }
        if !found || hi < best_b {
            best_a = lo;
            best_b = hi;
            found = true;
        }
    }
    if found {
        n.rules += 1;
        let r = obj.rule(best_b)?;
        if r != *old {
            return Ok((best_a, best_b, r));
        }
    }
    bisect_full(obj, old, best_b.min(b), b, width, n)
}

// Decision-rule changes are resolved on a fixed probe grid t0 + k·T_b/probes;
// every change found between two probes is bisected, so the intervals tile
// [t0, T_b] up to gaps of the bisection width.
fn collect_intervals(
    obj: &Objective,
    t0: f64,
    params: &Alg1Params,
    first_only: bool,
    n: &mut Counters,
) -> Result<Vec<StabilityInterval>> {
    let tb = obj.config.symbol_interval;
    let step = tb / params.probes.max(1) as f64;
    let width = params.bisect_width * tb;
    n.rules += 1;
    let mut rule = obj.rule(t0)?;
    let mut lo = t0;
    let mut known = t0;
    let mut out = Vec::new();
    for k in 1.. {
        let tn = (t0 + k as f64 * step).min(tb);
        n.rules += 1;
        let probe = obj.rule(tn)?;
        while probe != rule {
            let (a, b, rb) = locate_change(obj, &rule, &probe, known, tn, width, n)?;
            // two changes closer than the bisection width merge into one
            if a > lo {
                out.push(StabilityInterval {
                    t_lo: lo,
                    t_hi: a,
                    rule,
                });
            }
            if first_only {
                return Ok(out);
            }
            lo = b;
            known = b;
            rule = rb;
        }
        if tn >= tb {
            break;
        }
        known = tn;
    }
    if lo < tb {
        out.push(StabilityInterval {
            t_lo: lo,
            t_hi: tb,
            rule,
        });
    }
    Ok(out)
}

/// Maximal interval [t0, t_hi] on which the probed decision rule stays equal
/// to the rule at `t0`.
pub fn find_stability_interval(
    config: &LinkConfig,
    model: CountModel,
    t0: f64,
) -> Result<StabilityInterval> {
    let obj = Objective::new(config, model)?;
    let tb = config.symbol_interval;
    if !(0.0..tb).contains(&t0) {
        return Err(Error::Domain(format!("t0 = {t0} outside [0, {tb})")));
    }
    let mut n = Counters::default();
    let mut ivs = collect_intervals(&obj, t0, &Alg1Params::default(), true, &mut n)?;
    Ok(ivs.remove(0))
}

/// Every stability interval from `params.t0` up to T_b.
pub fn stability_intervals(obj: &Objective, params: &Alg1Params) -> Result<Vec<StabilityInterval>> {
    let mut n = Counters::default();
    collect_intervals(obj, params.t0 * obj.config.symbol_interval, params, false, &mut n)
}

/// Outcome of a bound-constrained 1D minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub f: f64,
    pub iterations: usize,
    pub function_evals: usize,
    pub gradient_evals: usize,
    pub converged: bool,
}

/// Projected gradient descent on [lo, hi] with Armijo backtracking along
/// x + β^m d, d = Proj(x − α f'(x)) − x. Every accepted step strictly
/// decreases `f`. `df` receives the point and `f` at that point.
pub fn projected_gradient(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut df: impl FnMut(f64, f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    x0: f64,
    params: &Alg1Params,
    eps: f64,
) -> Result<Minimum> {
    let mut x = x0.clamp(lo, hi);
    let mut fx = f(x)?;
    let mut m = Minimum {
        x,
        f: fx,
        iterations: 0,
        function_evals: 1,
        gradient_evals: 0,
        converged: false,
    };
    if fx == f64::NEG_INFINITY {
        m.converged = true;
        return Ok(m);
    }
    for _ in 0..params.max_iterations {
        let g = df(x, fx)?;
        m.gradient_evals += 1;
        if !g.is_finite() {
            return Err(Error::NumericFailure(format!("non-finite gradient at {x}")));
        }
        let d = (x - params.alpha * g).clamp(lo, hi) - x;
        if d.abs() < eps {
            m.converged = true;
            break;
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=params.max_backtracks {
            let xn = (x + scale * d).clamp(lo, hi);
            let fn_ = f(xn)?;
            m.function_evals += 1;
            if fx - fn_ >= -params.c * scale * g * d && fn_ < fx {
                x = xn;
                fx = fn_;
                accepted = true;
                break;
            }
            scale *= params.beta;
        }
        m.iterations += 1;
        if !accepted {
            m.converged = true;
            break;
        }
    }
    m.x = x;
    m.f = fx;
    Ok(m)
}

/// Implicit filtering on [lo, hi]: finite-difference stencil gradients at
/// scale h, projected backtracking, and stencil shrinking until h < tau.
/// Returns the best point visited.
pub fn implicit_filtering(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    params: &Alg2Params,
    scale: f64,
) -> Result<Minimum> {
    let proj = |x: f64| x.clamp(lo, hi);
    let mut x = proj(lo + params.start * (hi - lo));
    let mut fx = f(x)?;
    let mut best = Minimum {
        x,
        f: fx,
        iterations: 0,
        function_evals: 1,
        gradient_evals: 0,
        converged: false,
    };
    let mut h = params.eps0 * scale;
    let tau = params.tau * scale;
    while h >= tau {
        for _ in 0..params.max_iterations_per_level {
            let up = x + h <= hi;
            let down = x - h >= lo;
            let (fu, fd) = (
                if up { Some(f(x + h)?) } else { None },
                if down { Some(f(x - h)?) } else { None },
            );
            best.function_evals += up as usize + down as usize;
            best.gradient_evals += 1;
            for (xs, fs) in [(x + h, fu), (x - h, fd)] {
                if let Some(v) = fs {
                    if v < best.f {
                        best.x = xs;
                        best.f = v;
                    }
                }
            }
            let g = match (fu, fd) {
                (Some(a), Some(b)) => (a - b) / (2.0 * h),
                (Some(a), None) => (a - fx) / h,
                (None, Some(b)) => (fx - b) / h,
                (None, None) => 0.0,
            };
            best.iterations += 1;
            if !g.is_finite() || g.abs() <= h / scale {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..params.a_max {
                let xn = proj(x - step * g * scale * scale);
                let fn_ = f(xn)?;
                best.function_evals += 1;
                if fn_ <= fx - params.c * step * g * g * scale * scale && xn != x {
                    x = xn;
                    fx = fn_;
                    accepted = true;
                    if fn_ < best.f {
                        best.x = xn;
                        best.f = fn_;
                    }
                    break;
                }
                step *= params.beta;
            }
            if !accepted {
                break;
            }
        }
        h *= params.shrink;
    }
    best.converged = true;
    Ok(best)
}

fn ln_ber(b: f64) -> f64 {
    if b > 0.0 {
        b.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Stability-interval projected gradient with explicit parameters on a prepared objective.
pub fn optimize_alg1_with(obj: &Objective, params: &Alg1Params) -> Result<OptimizationReport> {
    if obj.model == CountModel::Gaussian {
        return Err(Error::Domain(
            "the gradient method needs a discrete count model".into(),
        ));
    }
    let tb = obj.config.symbol_interval;
    let mut n = Counters::default();
    let intervals = collect_intervals(obj, params.t0 * tb, params, false, &mut n)?;
    let eps = params.eps;
    let traces: Vec<(IntervalTrace, usize, usize)> = intervals
        .into_par_iter()
        .map(|iv| {
            let (lo, hi) = (iv.t_lo / tb, iv.t_hi / tb);
            let rule = &iv.rule;
            let phi = |u: f64| obj.ber_with(u * tb, rule).map(ln_ber);
            let dphi = |u: f64, ln_b: f64| -> Result<f64> {
                Ok(tb * obj.gradient_with(u * tb, rule)? / ln_b.exp())
            };
            match projected_gradient(phi, dphi, lo, hi, lo, params, eps) {
                Ok(m) => {
                    let ber = m.f.exp();
                    (
                        IntervalTrace {
                            t_opt: m.x * tb,
                            ber_opt: ber,
                            iterations: m.iterations,
                            diagnostic: if m.iterations >= params.max_iterations {
                                Some("iteration cap reached".into())
                            } else {
                                None
                            },
                            interval: iv,
                        },
                        m.function_evals,
                        m.gradient_evals,
                    )
                }
                Err(e) => {
                    // endpoints still compete in the final comparison
                    let fl = obj.ber_with(iv.t_lo, rule).unwrap_or(f64::INFINITY);
                    let fh = obj.ber_with(iv.t_hi, rule).unwrap_or(f64::INFINITY);
                    let (t_opt, ber_opt) = if fh < fl { (iv.t_hi, fh) } else { (iv.t_lo, fl) };
                    (
                        IntervalTrace {
                            t_opt,
                            ber_opt,
                            iterations: 0,
                            diagnostic: Some(e.to_string()),
                            interval: iv,
                        },
                        2,
                        0,
                    )
                }
            }
        })
        .collect();
    let mut intervals = Vec::with_capacity(traces.len());
    for (tr, fe, ge) in traces {
        n.functions += fe;
        n.gradients += ge;
        n.iterations += tr.iterations;
        intervals.push(tr);
    }
    let (_, ber_tb) = obj.evaluate(tb)?;
    n.functions += 1;
    let mut t_star = tb;
    let mut best = ber_tb;
    for tr in &intervals {
        if tr.ber_opt < best {
            best = tr.ber_opt;
            t_star = tr.t_opt;
        }
    }
    let t_star_time_min = intervals
        .iter()
        .map(|tr| tr.t_opt)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
    let (_, ber_star) = obj.evaluate(t_star)?;
    n.functions += 1;
    let degenerate = intervals
        .iter()
        .all(|tr| (tr.ber_opt - 0.5).abs() < 1e-15)
        && (ber_tb - 0.5).abs() < 1e-15;
    Ok(OptimizationReport {
        t_star,
        ber_star,
        algorithm: Algorithm::Alg1,
        model: obj.model,
        intervals,
        t_star_time_min,
        iterations: n.iterations,
        gradient_evals: n.gradients,
        function_evals: n.functions,
        rule_evals: n.rules,
        degenerate,
    })
}

/// Stability-interval decomposition with projected-gradient descent inside
/// each interval; the answer is the best per-interval minimizer.
pub fn optimize_alg1(config: &LinkConfig, model: CountModel) -> Result<OptimizationReport> {
    optimize_alg1_with(&Objective::new(config, model)?, &Alg1Params::default())
}

/// Implicit filtering on the BER with the rule rebuilt at every point.
pub fn optimize_alg2_with(obj: &Objective, params: &Alg2Params) -> Result<OptimizationReport> {
    let tb = obj.config.symbol_interval;
    let mut evals = 0usize;
    let m = implicit_filtering(
        |u| {
            evals += 1;
            obj.evaluate(u * tb).map(|(_, b)| ln_ber(b))
        },
        0.0,
        1.0,
        params,
        1.0,
    )?;
    let t_star = m.x * tb;
    let (_, ber_star) = obj.evaluate(t_star)?;
    Ok(OptimizationReport {
        t_star,
        ber_star,
        algorithm: Algorithm::Alg2,
        model: obj.model,
        intervals: Vec::new(),
        t_star_time_min: None,
        iterations: m.iterations,
        gradient_evals: m.gradient_evals,
        function_evals: evals + 1,
        rule_evals: evals + 1,
        degenerate: false,
    })
}

pub fn optimize_alg2(config: &LinkConfig, model: CountModel) -> Result<OptimizationReport> {
    optimize_alg2_with(&Objective::new(config, model)?, &Alg2Params::default())
}

/// BER at T_r = k·T_b/n for k = 1..=n, with the rule rebuilt at each point.
pub fn grid_values(obj: &Objective, n_points: usize) -> Result<Vec<(f64, f64)>> {
    let tb = obj.config.symbol_interval;
    (1..=n_points)
        .into_par_iter()
        .map(|k| {
            let t = tb * k as f64 / n_points as f64;
            obj.evaluate(t).map(|(_, b)| (t, b))
        })
        .collect()
}

pub fn grid_oracle_with(obj: &Objective, n_points: usize) -> Result<OptimizationReport> {
    if n_points < 2 {
        return Err(Error::Domain(format!("grid needs at least 2 points, got {n_points}")));
    }
    let vals = grid_values(obj, n_points)?;
    let (mut t_star, mut ber_star) = vals[0];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(t, b) in &vals {
        lo = lo.min(b);
        hi = hi.max(b);
        if b < ber_star {
            t_star = t;
            ber_star = b;
        }
    }
    Ok(OptimizationReport {
        t_star,
        ber_star,
        algorithm: Algorithm::Grid,
        model: obj.model,
        intervals: Vec::new(),
        t_star_time_min: None,
        iterations: n_points,
        gradient_evals: 0,
        function_evals: n_points,
        rule_evals: n_points,
        degenerate: hi - lo < 1e-15,
    })
}

/// Exhaustive uniform search over (0, T_b].
pub fn grid_oracle(
    config: &LinkConfig,
    model: CountModel,
    n_points: usize,
) -> Result<OptimizationReport> {
    grid_oracle_with(&Objective::new(config, model)?, n_points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projected_gradient_on_quadratic() {
        let p = Alg1Params::default();
        let m = projected_gradient(|x| Ok((x - 0.3) * (x - 0.3)), |x, _| Ok(2.0 * (x - 0.3)), 0.0, 1.0, 1.0, &p, 1e-12)
            .unwrap();
        assert!((m.x - 0.3).abs() < 1e-9);
        // minimum outside the box projects onto the bound
        let m = projected_gradient(|x| Ok((x - 2.0) * (x - 2.0)), |x, _| Ok(2.0 * (x - 2.0)), 0.0, 1.0, 0.0, &p, 1e-12)
            .unwrap();
        assert_eq!(m.x, 1.0);
    }

    #[test]
    fn implicit_filtering_on_quadratic() {
        let p = Alg2Params::default();
        let m = implicit_filtering(|x| Ok((x - 0.37) * (x - 0.37)), 0.0, 1.0, &p, 1.0).unwrap();
        assert!((m.x - 0.37).abs() < 1e-6, "{}", m.x);
        let m = implicit_filtering(|x| Ok((x + 0.5) * (x + 0.5)), 0.0, 1.0, &p, 1.0).unwrap();
        assert!(m.x.abs() < 1e-6, "{}", m.x);
    }

    #[test]
    fn stability_interval_rebuild_and_tiling() {
        let cfg = LinkConfig::table1_1d().with_ix_ratio(4.0);
        let obj = Objective::new(&cfg, CountModel::Binomial).unwrap();
        let p = Alg1Params::default();
        let ivs = stability_intervals(&obj, &p).unwrap();
        let tb = cfg.symbol_interval;
        assert!((ivs[0].t_lo - p.t0 * tb).abs() < 1e-15);
        assert_eq!(ivs.last().unwrap().t_hi, tb);
        for w in ivs.windows(2) {
            let gap = w[1].t_lo - w[0].t_hi;
            assert!(gap >= 0.0 && gap <= 1.01e-9 * tb, "gap {gap}");
            assert_ne!(w[0].rule, w[1].rule);
        }
        for iv in &ivs {
            let mid = 0.5 * (iv.t_lo + iv.t_hi);
            assert_eq!(obj.rule(mid).unwrap(), iv.rule);
        }
    }

    #[test]
    fn constant_rule_reaches_symbol_interval() {
        let cfg = LinkConfig::table1_1d().with_ix_ratio(1e6);
        let tb = cfg.symbol_interval;
        let iv = find_stability_interval(&cfg, CountModel::Binomial, 0.9 * tb).unwrap();
        assert_eq!(iv.t_hi, tb);
    }

    #[test]
    fn alg1_one_dimensional_agrees_with_grid() {
        let cfg = LinkConfig::table1_1d().with_ix_ratio(4.0);
        let tb = cfg.symbol_interval;
        for model in [CountModel::Binomial, CountModel::Poisson] {
            let a = optimize_alg1(&cfg, model).unwrap();
            let g = grid_oracle(&cfg, model, 2000).unwrap();
            assert!((a.t_star - g.t_star).abs() <= tb / 2000.0, "{model:?}: {} vs {}", a.t_star, g.t_star);
            assert!(a.ber_star <= g.ber_star + 1e-9);
            assert!(a.t_star < tb);
        }
    }

    #[test]
    fn far_interferer_keeps_full_window() {
        let cfg = LinkConfig::table1_1d().with_ix_ratio(1e4);
        let a = optimize_alg1(&cfg, CountModel::Binomial).unwrap();
        assert_eq!(a.t_star, cfg.symbol_interval);
    }

    #[test]
    fn alg2_closer_interferer_shortens_window() {
        let cfg = LinkConfig::table1_1d().with_ix_ratio(0.5);
        let r = optimize_alg2(&cfg, CountModel::Gaussian).unwrap();
        assert!(r.t_star < 0.3 * cfg.symbol_interval, "{}", r.t_star);
    }

    #[test]
    fn flat_grid_is_degenerate() {
        let mut cfg = LinkConfig::table1_1d();
        cfg.distance_tx = 1.0;
        cfg.distance_ix = 1.0;
        let g = grid_oracle(&cfg, CountModel::Binomial, 50).unwrap();
        assert!(g.degenerate);
        assert_eq!(g.t_star, cfg.symbol_interval / 50.0);
        assert_eq!(g.ber_star, 0.5);
    }
}
