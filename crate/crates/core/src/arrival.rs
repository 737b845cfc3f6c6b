//! Conditional distributions of the number of molecules counted in the
//! detection window, with and without interference and ISI.
//!
//! Internally everything is carried as log-masses over a contiguous support
//! ([`LogSeq`]); counts of several thousand molecules put most of the mass
//! far below `f64::MIN_POSITIVE`, and decision rules compare likelihoods
//! across the whole support.

use serde::{Deserialize, Serialize};

use crate::channel::{LinkConfig, Source};
use crate::error::{Error, Result};
use crate::numerics::{
    composite_gauss_legendre, gamma_p, ln_binomial_pmf, ln_normal_pdf, ln_poisson_pmf,
    log_add_exp, normal_interval,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountModel {
    Binomial,
    Poisson,
    Gaussian,
}

impl CountModel {
    pub fn name(self) -> &'static str {
        match self {
            CountModel::Binomial => "binomial",
            CountModel::Poisson => "poisson",
            CountModel::Gaussian => "gaussian",
        }
    }
}

/// Probability mass over counts `0..values.len()`. `truncated_mass` is the
/// mass of the omitted upper tail (zero for finite-support models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPmf {
    pub values: Vec<f64>,
    pub truncated_mass: f64,
}

impl CountPmf {
    pub fn get(&self, y: usize) -> f64 {
        self.values.get(y).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        crate::numerics::compensated_sum(self.values.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        crate::numerics::compensated_sum(self.values.iter().enumerate().map(|(y, p)| y as f64 * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        crate::numerics::compensated_sum(
            self.values.iter().enumerate().map(|(y, p)| (y as f64 - m).powi(2) * p),
        )
    }

    fn from_log(seq: &LogSeq, len: usize, truncated_mass: f64) -> Self {
        CountPmf {
            values: (0..len).map(|y| seq.get(y).exp()).collect(),
            truncated_mass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for c in &self.components {
            if c.weight > 0.0 {
                acc = log_add_exp(acc, c.weight.ln() + ln_normal_pdf(y, c.mean, c.variance));
            }
        }
        acc
    }

    /// Log-density with per-component constants hoisted, for repeated
    /// evaluation on a scan.
    pub fn ln_pdf_evaluator(&self) -> impl Fn(f64) -> f64 + '_ {
        let terms: Vec<(f64, f64, f64)> = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| {
                let k = c.weight.ln() - 0.5 * (2.0 * std::f64::consts::PI * c.variance).ln();
                (k, c.mean, 0.5 / c.variance)
            })
            .collect();
        move |y| {
            let q = |&(k, m, h): &(f64, f64, f64)| k - h * (y - m) * (y - m);
            let top = terms.iter().map(q).fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return top;
            }
            top + terms.iter().map(|t| (q(t) - top).exp()).sum::<f64>().ln()
        }
    }

    pub fn interval_prob(&self, lo: f64, hi: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_interval(lo, hi, c.mean, c.variance.sqrt()))
            .sum()
    }

    /// Bounding span (mean range widened by `k` of the largest deviations).
    pub fn span(&self, other: &GaussianMixture, k: f64) -> (f64, f64) {
        let all = self.components.iter().chain(&other.components);
        let (mut lo, mut hi, mut sd) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64);
        for c in all {
            lo = lo.min(c.mean);
            hi = hi.max(c.mean);
            sd = sd.max(c.variance.sqrt());
        }
        (lo - k * sd, hi + k * sd)
    }

    /// Same components up to ordering, i.e. identical densities.
    pub fn same_density(&self, other: &GaussianMixture) -> bool {
        let key = |m: &GaussianMixture| {
            let mut v: Vec<(f64, f64, f64)> = m
                .components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| (c.mean, c.variance, c.weight))
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite components"));
            v
        };
        let (a, b) = (key(self), key(other));
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                let close = |u: f64, v: f64| (u - v).abs() <= 1e-12 * u.abs().max(v.abs()).max(1e-300);
                close(x.0, y.0) && close(x.1, y.1) && close(x.2, y.2)
            })
    }
}

/// Result of [`conditional_total_pmf`] or [`isi_conditional_pmf`].
#[derive(Debug, Clone, PartialEq)]
pub enum Conditional {
    Pmf(CountPmf),
    Gaussian(GaussianComponent),
}

/// Result of [`mixture_over_interference`].
#[derive(Debug, Clone, PartialEq)]
pub enum Likelihood {
    Pmf(CountPmf),
    Gaussian(GaussianMixture),
}

// ---------------------------------------------------------------------------
// Log-space sequences and convolution kernels.

/// Log-masses `v[i]` at counts `off + i`; `-inf` everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LogSeq {
    pub off: usize,
    pub v: Vec<f64>,
}

impl LogSeq {
    pub fn point(at: usize) -> Self {
        LogSeq { off: at, v: vec![0.0] }
    }

    pub fn get(&self, y: usize) -> f64 {
        if y < self.off {
            return f64::NEG_INFINITY;
        }
        self.v.get(y - self.off).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn end(&self) -> usize {
        self.off + self.v.len()
    }

    pub fn binomial(n: u64, p: f64) -> Self {
        if n == 0 || p == 0.0 {
            return LogSeq::point(0);
        }
        if p == 1.0 {
            return LogSeq::point(n as usize);
        }
        LogSeq {
            off: 0,
            v: (0..=n).map(|k| ln_binomial_pmf(n, p, k)).collect(),
        }
    }

    /// Binomial log-masses on the counts within `depth` nats of the mode.
    pub fn binomial_window(n: u64, p: f64, depth: f64) -> Self {
        if n == 0 || p == 0.0 || p == 1.0 {
            return LogSeq::binomial(n, p);
        }
        let mode = (((n + 1) as f64 * p).floor() as u64).min(n);
        let top = ln_binomial_pmf(n, p, mode);
        let mut lo = mode;
        while lo > 0 && ln_binomial_pmf(n, p, lo - 1) >= top - depth {
            lo -= 1;
        }
        let mut hi = mode;
        while hi < n && ln_binomial_pmf(n, p, hi + 1) >= top - depth {
            hi += 1;
        }
        LogSeq {
            off: lo as usize,
            v: (lo..=hi).map(|k| ln_binomial_pmf(n, p, k)).collect(),
        }
    }

    /// Poisson log-masses on 0..=y_max.
    pub fn poisson(lambda: f64, y_max: usize) -> Self {
        if lambda == 0.0 {
            return LogSeq::point(0);
        }
        LogSeq {
            off: 0,
            v: (0..=y_max as u64).map(|k| ln_poisson_pmf(lambda, k)).collect(),
        }
    }

    pub fn dense(&self, len: usize) -> Vec<f64> {
        (0..len).map(|y| self.get(y)).collect()
    }

    /// Drop entries more than `depth` nats below the peak.
    pub fn pruned(mut self, depth: f64) -> Self {
        let m = self.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let keep = |x: &f64| *x >= m - depth;
        let first = self.v.iter().position(keep).unwrap_or(0);
        let last = self.v.iter().rposition(keep).unwrap_or(0);
        self.v.truncate(last + 1);
        self.v.drain(..first);
        self.off += first;
        self
    }

    pub fn truncated(mut self, y_max: usize) -> Self {
        if self.off > y_max {
            self.v.clear();
            self.v.push(f64::NEG_INFINITY);
            self.off = y_max;
        } else if self.end() > y_max + 1 {
            self.v.truncate(y_max + 1 - self.off);
        }
        self
    }
}

// Difference ratios clamped so their exponentials stay finite.
fn ratios(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut up = Vec::with_capacity(v.len().saturating_sub(1));
    let mut down = Vec::with_capacity(v.len().saturating_sub(1));
    for w in v.windows(2) {
        let d = (w[1] - w[0]).clamp(-700.0, 700.0);
        up.push(d.exp());
        down.push((-d).exp());
    }
    (up, down)
}

/// Exact convolution of two log-concave sequences.
///
/// For fixed output index the summand is log-concave in the split point, so
/// the sum is accumulated outward from its peak until the geometric tail
/// bound falls below 1e-17 of the total.
pub(crate) fn conv_log_concave(a: &LogSeq, b: &LogSeq) -> LogSeq {
    let (na, nb) = (a.v.len(), b.v.len());
    if na == 1 {
        return LogSeq {
            off: a.off + b.off,
            v: b.v.iter().map(|x| x + a.v[0]).collect(),
        };
    }
    if nb == 1 {
        return LogSeq {
            off: a.off + b.off,
            v: a.v.iter().map(|x| x + b.v[0]).collect(),
        };
    }
    let da: Vec<f64> = a.v.windows(2).map(|w| w[1] - w[0]).collect();
    let db: Vec<f64> = b.v.windows(2).map(|w| w[1] - w[0]).collect();
    let (ea_up, ea_down) = ratios(&a.v);
    let (eb_up, eb_down) = ratios(&b.v);
    let len = na + nb - 1;
    let mut out = Vec::with_capacity(len);
    let mut peak = 0;
    for s in 0..len {
        let lo = s.saturating_sub(nb - 1);
        let hi = s.min(na - 1);
        // first i in [lo, hi) whose slope f(i+1) - f(i) is <= 0; it never
        // moves left as s grows
        peak = peak.max(lo);
        while peak < hi && da[peak] - db[s - peak - 1] > 0.0 {
            peak += 1;
        }
        let top = a.v[peak] + b.v[s - peak];
        if top == f64::NEG_INFINITY {
            out.push(top);
            continue;
        }
        let mut sum = 1.0;
        let mut cur = 1.0;
        let mut i = peak;
        while i < hi {
            let r = ea_up[i] * eb_down[s - i - 1];
            cur *= r;
            sum += cur;
            i += 1;
            if r < 1.0 && cur * r < 1e-17 * sum * (1.0 - r) {
                break;
            }
        }
        cur = 1.0;
        i = peak;
        while i > lo {
            let r = ea_down[i - 1] * eb_up[s - i];
            cur *= r;
            sum += cur;
            i -= 1;
            if r < 1.0 && cur * r < 1e-17 * sum * (1.0 - r) {
                break;
            }
        }
        out.push(top + sum.ln());
    }
    LogSeq {
        off: a.off + b.off,
        v: out,
    }
}

/// ln Σ_i e^{f(i) + g(s - i)} for log-concave `f` supported on `fs` and `g`
/// on `gs` (inclusive ranges), computed at a single output index.
pub(crate) fn conv_point_ln(
    f: impl Fn(usize) -> f64,
    fs: (usize, usize),
    g: impl Fn(usize) -> f64,
    gs: (usize, usize),
    s: usize,
) -> f64 {
    if s < fs.0 + gs.0 || s > fs.1 + gs.1 {
        return f64::NEG_INFINITY;
    }
    let lo = fs.0.max(s.saturating_sub(gs.1));
    let hi = fs.1.min(s - gs.0);
    let term = |i: usize| f(i) + g(s - i);
    let (mut l, mut h) = (lo, hi);
    while l < h {
        let mid = (l + h) / 2;
        if term(mid + 1) - term(mid) > 0.0 {
            l = mid + 1;
        } else {
            h = mid;
        }
    }
    let top = term(l);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let mut sum = 1.0;
    for dir in [1i64, -1] {
        let mut i = l as i64;
        let mut prev = 0.0;
        loop {
            i += dir;
            if i < lo as i64 || i > hi as i64 {
                break;
            }
            let rel = term(i as usize) - top;
            let v = rel.exp();
            sum += v;
            // concave in i: once decreasing below 1e-17 of the peak, the rest is negligible
            if rel < -39.0 && rel < prev {
                break;
            }
            prev = rel;
        }
    }
    top + sum.ln()
}

pub(crate) fn binomial_support(n: u64, p: f64) -> (usize, usize) {
    if n == 0 || p == 0.0 {
        (0, 0)
    } else if p == 1.0 {
        (n as usize, n as usize)
    } else {
        (0, n as usize)
    }
}

/// Convolution of arbitrary sequences, done in linear space after scaling
/// each operand by its peak. Mass more than ~700 nats below either peak is lost.
pub(crate) fn conv_log_general(a: &LogSeq, b: &LogSeq) -> LogSeq {
    let ma = a.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mb = b.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xa: Vec<f64> = a.v.iter().map(|x| (x - ma).exp()).collect();
    let xb: Vec<f64> = b.v.iter().map(|x| (x - mb).exp()).collect();
    let mut out = vec![0.0; xa.len() + xb.len() - 1];
    for (i, &u) in xa.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        for (o, &w) in out[i..].iter_mut().zip(&xb) {
            *o += u * w;
        }
    }
    LogSeq {
        off: a.off + b.off,
        v: out.into_iter().map(|x| ma + mb + x.ln()).collect(),
    }
}

/// Weighted mixture `wa * a + wb * b` of two log sequences.
pub(crate) fn mix_log(a: &LogSeq, wa: f64, b: &LogSeq, wb: f64) -> LogSeq {
    let off = a.off.min(b.off);
    let end = a.end().max(b.end());
    let (la, lb) = (wa.ln(), wb.ln());
    LogSeq {
        off,
        v: (off..end)
            .map(|y| log_add_exp(la + a.get(y), lb + b.get(y)))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Public operations.

fn check_prob(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must lie in [0, 1], got {p}")))
    }
}

/// Binomial probability mass C(n,k) p^k (1-p)^(n-k); zero for k > n.
pub fn binomial_pmf(n: u32, p: f64, k: u32) -> Result<f64> {
    check_prob(p, "p")?;
    Ok(ln_binomial_pmf(n as u64, p, k as u64).exp())
}

// Upper support index beyond which a Poisson(lambda) tail is below 1e-17.
fn poisson_support_end(lambda: f64) -> usize {
    let mut y = lambda.ceil() as u64;
    loop {
        let r = lambda / (y as f64 + 1.0);
        let lp = ln_poisson_pmf(lambda, y);
        if r < 1.0 && lp + (r / (1.0 - r)).ln() < -39.0 {
            return y as usize;
        }
        y += 1;
    }
}

fn poisson_pmf_object(lambda: f64, y_end: Option<usize>) -> CountPmf {
    let y_hi = y_end.unwrap_or_else(|| poisson_support_end(lambda));
    let seq = LogSeq::poisson(lambda, y_hi);
    let tail = gamma_p(y_hi as f64 + 1.0, lambda);
    CountPmf::from_log(&seq, y_hi + 1, tail)
}

fn gaussian_component(weight: f64, terms: &[(u32, f64)]) -> Result<GaussianComponent> {
    let mean = terms.iter().map(|&(x, p)| x as f64 * p).sum();
    let variance: f64 = terms.iter().map(|&(x, p)| x as f64 * p * (1.0 - p)).sum();
    if !(variance > 0.0) {
        return Err(Error::Degenerate(format!(
            "Gaussian approximation has zero variance (mean {mean})"
        )));
    }
    Ok(GaussianComponent {
        weight,
        mean,
        variance,
    })
}

/// Distribution of Y_T + Y_I given the transmitted and interfering counts.
pub fn conditional_total_pmf(
    x_t: u32,
    x_i: u32,
    p_d: f64,
    p_di: f64,
    model: CountModel,
) -> Result<Conditional> {
    check_prob(p_d, "p_d")?;
    check_prob(p_di, "p_dI")?;
    Ok(match model {
        CountModel::Binomial => {
            let seq = conv_log_concave(
                &LogSeq::binomial(x_t as u64, p_d),
                &LogSeq::binomial(x_i as u64, p_di),
            );
            Conditional::Pmf(CountPmf::from_log(&seq, (x_t + x_i) as usize + 1, 0.0))
        }
        CountModel::Poisson => Conditional::Pmf(poisson_pmf_object(
            x_t as f64 * p_d + x_i as f64 * p_di,
            None,
        )),
        CountModel::Gaussian => {
            Conditional::Gaussian(gaussian_component(1.0, &[(x_t, p_d), (x_i, p_di)])?)
        }
    })
}

/// Likelihood of the count given the transmitted count, averaged over the
/// two equiprobable interferer counts.
pub fn mixture_over_interference(
    x_t: u32,
    config: &LinkConfig,
    model: CountModel,
    t_r: f64,
) -> Result<Likelihood> {
    let state = ChannelState::known(config, t_r)?;
    state.likelihood(model, x_t)
}

/// First-passage CDF increment over the window of lag `l`.
pub fn isi_tap_probability(config: &LinkConfig, which: Source, l: usize, t_r: f64) -> Result<f64> {
    let tb = config.symbol_interval;
    if !(0.0..=tb).contains(&t_r) {
        return Err(Error::Domain(format!("T_r = {t_r} outside [0, {tb}]")));
    }
    let start = l as f64 * tb;
    let hi = config.hit_prob(which, start + t_r)?;
    let lo = config.hit_prob(which, start)?;
    Ok((hi - lo).max(0.0))
}

fn isi_taps(config: &LinkConfig, which: Source, memory: usize, t_r: f64) -> Result<Vec<f64>> {
    (0..memory)
        .map(|l| isi_tap_probability(config, which, l, t_r))
        .collect()
}

/// Count distribution for one fixed bit history. Index `l` of each slice
/// refers to the symbol `l` positions before the current one.
pub fn isi_conditional_pmf(
    hist_tx: &[u32],
    hist_ix: &[u32],
    taps_tx: &[f64],
    taps_ix: &[f64],
    model: CountModel,
) -> Result<Conditional> {
    let l = hist_tx.len();
    for (what, other) in [
        ("interferer history", hist_ix.len()),
        ("transmitter taps", taps_tx.len()),
        ("interferer taps", taps_ix.len()),
    ] {
        if other != l {
            return Err(Error::LengthMismatch {
                what,
                left: l,
                right: other,
            });
        }
    }
    if l == 0 {
        return Err(Error::Domain("ISI memory must be >= 1".into()));
    }
    for &p in taps_tx.iter().chain(taps_ix) {
        check_prob(p, "tap probability")?;
    }
    let terms: Vec<(u32, f64)> = hist_tx
        .iter()
        .zip(taps_tx)
        .chain(hist_ix.iter().zip(taps_ix))
        .map(|(&x, &p)| (x, p))
        .collect();
    let total: usize = terms.iter().map(|&(x, _)| x as usize).sum();
    Ok(match model {
        CountModel::Binomial => {
            let mut acc = LogSeq::point(0);
            for &(x, p) in &terms {
                acc = conv_log_concave(&acc, &LogSeq::binomial(x as u64, p));
            }
            Conditional::Pmf(CountPmf::from_log(&acc, total + 1, 0.0))
        }
        CountModel::Poisson => {
            let lambda = terms.iter().map(|&(x, p)| x as f64 * p).sum();
            Conditional::Pmf(poisson_pmf_object(lambda, None))
        }
        CountModel::Gaussian => Conditional::Gaussian(gaussian_component(1.0, &terms)?),
    })
}

// ---------------------------------------------------------------------------
// Channel snapshots: everything the detector and BER code need at one T_r.

/// Hit probability (and its time derivative) of one interferer position,
/// carrying its weight in the location average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererNode {
    pub weight: f64,
    pub p: f64,
    pub dp: f64,
}

/// Channel at a fixed detection interval without ISI. A known interferer is
/// a single node of weight one; an unknown location is a quadrature over
/// candidate distances.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub low_count: u32,
    pub high_count: u32,
    pub p_tx: f64,
    pub dp_tx: f64,
    pub interferers: Vec<InterfererNode>,
}

impl ChannelState {
    pub fn known(config: &LinkConfig, t_r: f64) -> Result<Self> {
        config.validate()?;
        DetectionIntervalCheck::check(config, t_r)?;
        Ok(ChannelState {
            low_count: config.low_count,
            high_count: config.high_count,
            p_tx: config.hit_prob(Source::Tx, t_r)?,
            dp_tx: config.hit_rate_at(config.distance_tx, t_r)?,
            interferers: vec![InterfererNode {
                weight: 1.0,
                p: config.hit_prob(Source::Ix, t_r)?,
                dp: config.hit_rate_at(config.distance_ix, t_r)?,
            }],
        })
    }

    /// Interferer uniformly located on `[a, b]`, averaged with `nodes`
    /// Gauss-Legendre points.
    pub fn unknown_location(
        config: &LinkConfig,
        t_r: f64,
        bounds: (f64, f64),
        nodes: usize,
    ) -> Result<Self> {
        let (a, b) = bounds;
        if !(a > 0.0 && a < b && b.is_finite()) {
            return Err(Error::Domain(format!("location bounds need 0 < a < b, got ({a}, {b})")));
        }
        if nodes == 0 {
            return Err(Error::Domain("quadrature needs at least one node".into()));
        }
        let mut base = config.clone();
        base.distance_ix = b;
        base.interference_location_known = true;
        base.validate()?;
        DetectionIntervalCheck::check(config, t_r)?;
        let (xs, ws) = composite_gauss_legendre(a, b, nodes);
        let width = b - a;
        let interferers = xs
            .iter()
            .zip(&ws)
            .map(|(&x, &w)| {
                Ok(InterfererNode {
                    weight: w / width,
                    p: config.hit_prob_at(x, t_r)?,
                    dp: config.hit_rate_at(x, t_r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelState {
            low_count: config.low_count,
            high_count: config.high_count,
            p_tx: config.hit_prob(Source::Tx, t_r)?,
            dp_tx: config.hit_rate_at(config.distance_tx, t_r)?,
            interferers,
        })
    }

    /// Snapshot from raw hit probabilities (derivatives set to zero).
    pub fn from_probs(low_count: u32, high_count: u32, p_d: f64, p_di: f64) -> Result<Self> {
        check_prob(p_d, "p_d")?;
        check_prob(p_di, "p_dI")?;
        Ok(ChannelState {
            low_count,
            high_count,
            p_tx: p_d,
            dp_tx: 0.0,
            interferers: vec![InterfererNode {
                weight: 1.0,
                p: p_di,
                dp: 0.0,
            }],
        })
    }

    pub fn counts(&self) -> [u32; 2] {
        [self.low_count, self.high_count]
    }

    /// Largest count covered by a discrete rule.
    pub fn y_max(&self) -> usize {
        2 * self.high_count as usize
    }

    /// Per-interferer-count log pmfs, indexed `[node][x_i index]`.
    pub(crate) fn component_logs(&self, model: CountModel, x_t: u32) -> Vec<[LogSeq; 2]> {
        let y_max = self.y_max();
        let tx = LogSeq::binomial(x_t as u64, self.p_tx);
        self.interferers
            .iter()
            .map(|node| {
                let make = |x_i: u32| match model {
                    CountModel::Poisson => LogSeq::poisson(
                        x_t as f64 * self.p_tx + x_i as f64 * node.p,
                        y_max,
                    ),
                    _ => conv_log_concave(&tx, &LogSeq::binomial(x_i as u64, node.p)),
                };
                [make(self.low_count), make(self.high_count)]
            })
            .collect()
    }

    /// Dense log-likelihood ln P(y | x_T) over 0..=y_max for discrete models.
    pub(crate) fn log_likelihood(&self, model: CountModel, x_t: u32) -> Vec<f64> {
        self.mixture_log(&self.component_logs(model, x_t))
    }

    pub(crate) fn mixture_log(&self, comps: &[[LogSeq; 2]]) -> Vec<f64> {
        let len = self.y_max() + 1;
        let mut out = vec![f64::NEG_INFINITY; len];
        for (node, pair) in self.interferers.iter().zip(comps) {
            let lw = (0.5 * node.weight).ln();
            for seq in pair {
                for (y, o) in out.iter_mut().enumerate().skip(seq.off) {
                    let v = seq.get(y);
                    if v > f64::NEG_INFINITY {
                        *o = log_add_exp(*o, lw + v);
                    }
                }
            }
        }
        out
    }

    /// ln P(y | x_T) at a single count, for discrete models.
    pub(crate) fn log_likelihood_at(&self, model: CountModel, x_t: u32, y: usize) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for node in &self.interferers {
            let lw = (0.5 * node.weight).ln();
            for x_i in self.counts() {
                let v = match model {
                    CountModel::Poisson => {
                        ln_poisson_pmf(x_t as f64 * self.p_tx + x_i as f64 * node.p, y as u64)
                    }
                    _ => conv_point_ln(
                        |k| ln_binomial_pmf(x_t as u64, self.p_tx, k as u64),
                        binomial_support(x_t as u64, self.p_tx),
                        |k| ln_binomial_pmf(x_i as u64, node.p, k as u64),
                        binomial_support(x_i as u64, node.p),
                        y,
                    ),
                };
                acc = log_add_exp(acc, lw + v);
            }
        }
        acc
    }

    pub fn gaussian_mixture(&self, x_t: u32) -> Result<GaussianMixture> {
        let mut components = Vec::with_capacity(2 * self.interferers.len());
        for node in &self.interferers {
            for x_i in self.counts() {
                components.push(gaussian_component(
                    0.5 * node.weight,
                    &[(x_t, self.p_tx), (x_i, node.p)],
                )?);
            }
        }
        Ok(GaussianMixture { components })
    }

    pub fn likelihood(&self, model: CountModel, x_t: u32) -> Result<Likelihood> {
        Ok(match model {
            CountModel::Gaussian => Likelihood::Gaussian(self.gaussian_mixture(x_t)?),
            CountModel::Binomial => {
                let ll = self.log_likelihood(model, x_t);
                Likelihood::Pmf(CountPmf {
                    values: ll.iter().map(|v| v.exp()).collect(),
                    truncated_mass: 0.0,
                })
            }
            CountModel::Poisson => {
                let ll = self.log_likelihood(model, x_t);
                let y_max = self.y_max() as f64;
                let tail: f64 = self
                    .interferers
                    .iter()
                    .flat_map(|node| {
                        self.counts().map(move |x_i| {
                            0.5 * node.weight
                                * gamma_p(y_max + 1.0, x_t as f64 * self.p_tx + x_i as f64 * node.p)
                        })
                    })
                    .sum();
                Likelihood::Pmf(CountPmf {
                    values: ll.iter().map(|v| v.exp()).collect(),
                    truncated_mass: tail,
                })
            }
        })
    }
}

struct DetectionIntervalCheck;

impl DetectionIntervalCheck {
    fn check(config: &LinkConfig, t_r: f64) -> Result<()> {
        crate::channel::DetectionInterval::new(t_r, config.symbol_interval).map(|_| ())
    }
}

/// Upper bound on the ISI memory accepted by the history-averaged models.
pub const ISI_MEMORY_CAP: usize = 8;

/// Channel with ISI memory `L`: one tap per lag for each emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct IsiState {
    pub low_count: u32,
    pub high_count: u32,
    pub taps_tx: Vec<f64>,
    pub taps_ix: Vec<f64>,
}

impl IsiState {
    pub fn new(config: &LinkConfig, t_r: f64) -> Result<Self> {
        config.validate()?;
        DetectionIntervalCheck::check(config, t_r)?;
        let memory = config.isi_memory;
        Self::from_taps(
            config.low_count,
            config.high_count,
            isi_taps(config, Source::Tx, memory, t_r)?,
            isi_taps(config, Source::Ix, memory, t_r)?,
        )
    }

    pub fn from_taps(
        low_count: u32,
        high_count: u32,
        taps_tx: Vec<f64>,
        taps_ix: Vec<f64>,
    ) -> Result<Self> {
        if taps_tx.len() != taps_ix.len() {
            return Err(Error::LengthMismatch {
                what: "tap lists",
                left: taps_tx.len(),
                right: taps_ix.len(),
            });
        }
        if taps_tx.is_empty() {
            return Err(Error::Domain("ISI memory must be >= 1".into()));
        }
        if taps_tx.len() > ISI_MEMORY_CAP {
            return Err(Error::EnumerationCap {
                memory: taps_tx.len(),
                cap: ISI_MEMORY_CAP,
            });
        }
        for &p in taps_tx.iter().chain(&taps_ix) {
            check_prob(p, "tap probability")?;
        }
        Ok(IsiState {
            low_count,
            high_count,
            taps_tx,
            taps_ix,
        })
    }

    pub fn memory(&self) -> usize {
        self.taps_tx.len()
    }

    pub fn counts(&self) -> [u32; 2] {
        [self.low_count, self.high_count]
    }

    pub fn y_max(&self) -> usize {
        2 * self.memory() * self.high_count as usize
    }

    fn factor(&self, model: CountModel, x: u32, p: f64) -> LogSeq {
        match model {
            CountModel::Poisson => LogSeq::poisson(x as f64 * p, self.y_max()),
            _ => LogSeq::binomial(x as u64, p),
        }
        .pruned(700.0)
    }

    fn mixed_factor(&self, model: CountModel, p: f64) -> LogSeq {
        let a = self.factor(model, self.low_count, p);
        let b = self.factor(model, self.high_count, p);
        mix_log(&a, 0.5, &b, 0.5).pruned(700.0)
    }

    /// ln P(y | x_T) over 0..=y_max, averaged over every past transmitter
    /// bit and every interferer bit. The average over independent
    /// equiprobable histories factors into a convolution of per-lag
    /// two-point mixtures.
    pub(crate) fn log_likelihood(&self, model: CountModel, x_t: u32) -> Vec<f64> {
        let y_max = self.y_max();
        let mut acc = self.factor(model, x_t, self.taps_tx[0]);
        let mixed = self.taps_tx[1..]
            .iter()
            .chain(&self.taps_ix)
            .map(|&p| self.mixed_factor(model, p));
        for f in mixed {
            acc = conv_log_general(&acc, &f).pruned(700.0).truncated(y_max);
        }
        acc.truncated(y_max).dense(y_max + 1)
    }

    /// Gaussian mixture over all 2^(2L-1) histories.
    pub fn gaussian_mixture(&self, x_t: u32) -> Result<GaussianMixture> {
        let l = self.memory();
        let free = 2 * l - 1;
        let n = 1usize << free;
        let weight = 1.0 / n as f64;
        let mut components = Vec::with_capacity(n);
        for mask in 0..n {
            let bit = |k: usize| self.counts()[(mask >> k) & 1];
            let mut terms = vec![(x_t, self.taps_tx[0])];
            for lag in 1..l {
                terms.push((bit(lag - 1), self.taps_tx[lag]));
            }
            for lag in 0..l {
                terms.push((bit(l - 1 + lag), self.taps_ix[lag]));
            }
            components.push(gaussian_component(weight, &terms)?);
        }
        Ok(GaussianMixture { components })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinkConfig;

    #[test]
    fn hoisted_mixture_density_matches_direct() {
        let mut base = LinkConfig::table1_1d();
        base.location_bounds = Some((3e-5, 1.2e-4));
        let st = ChannelState::unknown_location(&base, 0.5, (3e-5, 1.2e-4), 16).unwrap();
        let f = st.gaussian_mixture(40).unwrap();
        let g = f.ln_pdf_evaluator();
        for y in [-30.0, 0.0, 3.5, 17.2, 40.0, 150.0] {
            let (a, b) = (f.ln_pdf(y), g(y));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{y}: {a} vs {b}");
        }
    }

    fn direct_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn binom_linear(n: u32, p: f64) -> Vec<f64> {
        // Pascal-style recursion, independent of the log kernels
        let mut v = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; v.len() + 1];
            for (k, x) in v.iter().enumerate() {
                next[k] += x * (1.0 - p);
                next[k + 1] += x * p;
            }
            v = next;
        }
        v
    }

    #[test]
    fn small_binomial_values() {
        assert!((binomial_pmf(2, 0.5, 1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(binomial_pmf(20, 0.0, 0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(3, 0.2, 5).unwrap(), 0.0);
        assert!(binomial_pmf(3, 1.2, 1).is_err());
    }

    #[test]
    fn large_binomial_sums_to_one() {
        let s: f64 = crate::numerics::compensated_sum(
            (0..=2000).map(|k| binomial_pmf(2000, 0.06, k).unwrap()),
        );
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn total_pmf_enumeration() {
        let Conditional::Pmf(pmf) = conditional_total_pmf(2, 1, 0.5, 0.5, CountModel::Binomial).unwrap()
        else {
            panic!()
        };
        let want = [0.125, 0.375, 0.375, 0.125];
        for (g, w) in pmf.values.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn log_concave_conv_matches_direct() {
        for &(n, p, m, q) in &[
            (30u32, 0.3, 17u32, 0.8),
            (200, 0.01, 400, 0.2),
            (1000, 0.06, 2000, 0.0125),
            (5, 1.0, 4, 0.5),
            (0, 0.3, 6, 0.0),
        ] {
            let got = conv_log_concave(&LogSeq::binomial(n as u64, p), &LogSeq::binomial(m as u64, q));
            let want = direct_conv(&binom_linear(n, p), &binom_linear(m, q));
            for (y, w) in want.iter().enumerate() {
                let g = got.get(y).exp();
                assert!((g - w).abs() <= 1e-12 * w.max(1e-300) + 1e-300, "n={n} m={m} y={y}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn log_concave_conv_deep_tail() {
        // ln P(Y = 0) = n ln(1-p) + m ln(1-q) exactly
        let got = conv_log_concave(&LogSeq::binomial(2000, 0.06), &LogSeq::binomial(2000, 0.0125));
        let want = 2000.0 * (-0.06f64).ln_1p() + 2000.0 * (-0.0125f64).ln_1p();
        assert!((got.get(0) - want).abs() < 1e-9);
        let want_top = 2000.0 * 0.06f64.ln() + 2000.0 * 0.0125f64.ln();
        assert!((got.get(4000) - want_top).abs() < 1e-9 * want_top.abs());
    }

    #[test]
    fn point_conv_matches_full_conv() {
        let st = ChannelState::from_probs(1000, 2000, 0.06, 0.0125).unwrap();
        for model in [CountModel::Binomial, CountModel::Poisson] {
            let full = st.log_likelihood(model, 2000);
            for y in [0usize, 1, 50, 120, 137, 250, 1999, 3000, 4000] {
                let p = st.log_likelihood_at(model, 2000, y);
                assert!((p - full[y]).abs() < 1e-10 * full[y].abs().max(1.0), "{model:?} y={y}: {p} vs {}", full[y]);
            }
        }
        let st = ChannelState::from_probs(3, 5, 0.0, 1.0).unwrap();
        let full = st.log_likelihood(CountModel::Binomial, 3);
        for (y, f) in full.iter().enumerate() {
            assert_eq!(st.log_likelihood_at(CountModel::Binomial, 3, y), *f);
        }
    }

    #[test]
    fn general_conv_matches_direct() {
        let a = mix_log(&LogSeq::binomial(10, 0.3), 0.5, &LogSeq::binomial(20, 0.3), 0.5);
        let b = LogSeq::binomial(7, 0.6);
        let got = conv_log_general(&a, &b);
        let la: Vec<f64> = (0..=20).map(|y| a.get(y).exp()).collect();
        let want = direct_conv(&la, &binom_linear(7, 0.6));
        for (y, w) in want.iter().enumerate() {
            assert!((got.get(y).exp() - w).abs() < 1e-15, "y={y}");
        }
    }

    #[test]
    fn poisson_rate_additivity() {
        let Conditional::Pmf(pmf) = conditional_total_pmf(40, 20, 0.1, 0.05, CountModel::Poisson).unwrap()
        else {
            panic!()
        };
        assert!((pmf.mean() - 5.0).abs() < 1e-9);
        assert!((pmf.mass() + pmf.truncated_mass - 1.0).abs() < 1e-12);
        assert!(pmf.truncated_mass < 1e-12);
    }

    #[test]
    fn gaussian_moments_and_degeneracy() {
        let Conditional::Gaussian(g) = conditional_total_pmf(40, 20, 0.1, 0.05, CountModel::Gaussian).unwrap()
        else {
            panic!()
        };
        assert!((g.mean - 5.0).abs() < 1e-12);
        assert!((g.variance - (40.0 * 0.09 + 20.0 * 0.0475)).abs() < 1e-12);
        assert!(matches!(
            conditional_total_pmf(40, 20, 0.0, 1.0, CountModel::Gaussian),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn zero_interferer_count_is_plain_binomial() {
        let Conditional::Pmf(pmf) = conditional_total_pmf(12, 0, 0.37, 0.9, CountModel::Binomial).unwrap()
        else {
            panic!()
        };
        for k in 0..=12 {
            assert!((pmf.values[k as usize] - binomial_pmf(12, 0.37, k).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_small_case_matches_enumeration() {
        let st = ChannelState::from_probs(1, 2, 0.5, 0.5).unwrap();
        let Likelihood::Pmf(pmf) = st.likelihood(CountModel::Binomial, 1).unwrap() else {
            panic!()
        };
        // x_I = 1: Binom(2, .5) = [1/4, 1/2, 1/4]; x_I = 2: Binom(3, .5) = [1, 3, 3, 1]/8
        let want = [
            0.5 * 0.25 + 0.5 * 0.125,
            0.5 * 0.5 + 0.5 * 0.375,
            0.5 * 0.25 + 0.5 * 0.375,
            0.5 * 0.125,
            0.0,
        ];
        for (g, w) in pmf.values.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_collapses_without_interference() {
        let st = ChannelState::from_probs(3, 7, 0.4, 0.0).unwrap();
        let Likelihood::Pmf(pmf) = st.likelihood(CountModel::Binomial, 7).unwrap() else {
            panic!()
        };
        for k in 0..=7u32 {
            assert!((pmf.values[k as usize] - binomial_pmf(7, 0.4, k).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_mass_defaults_3d() {
        let cfg = LinkConfig::table1_3d();
        for x_t in [cfg.low_count, cfg.high_count] {
            let Likelihood::Pmf(pmf) =
                mixture_over_interference(x_t, &cfg, CountModel::Binomial, cfg.symbol_interval / 5.0)
                    .unwrap()
            else {
                panic!()
            };
            assert!((pmf.mass() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isi_pmf_reductions() {
        let Conditional::Pmf(one) =
            isi_conditional_pmf(&[4], &[3], &[0.2], &[0.1], CountModel::Binomial).unwrap()
        else {
            panic!()
        };
        let Conditional::Pmf(direct) = conditional_total_pmf(4, 3, 0.2, 0.1, CountModel::Binomial).unwrap()
        else {
            panic!()
        };
        assert_eq!(one.values.len(), direct.values.len());
        for (a, b) in one.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-15);
        }
        let Conditional::Pmf(b4) =
            isi_conditional_pmf(&[1, 1], &[1, 1], &[0.5, 0.5], &[0.5, 0.5], CountModel::Binomial).unwrap()
        else {
            panic!()
        };
        for k in 0..=4u32 {
            assert!((b4.values[k as usize] - binomial_pmf(4, 0.5, k).unwrap()).abs() < 1e-15);
        }
        assert!(matches!(
            isi_conditional_pmf(&[1, 1], &[1], &[0.5, 0.5], &[0.5, 0.5], CountModel::Binomial),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn isi_pmf_mass_defaults() {
        let mut cfg = LinkConfig::table1_3d();
        cfg.isi_memory = 3;
        let t_r = cfg.symbol_interval;
        let tt: Vec<f64> = (0..3).map(|l| isi_tap_probability(&cfg, Source::Tx, l, t_r).unwrap()).collect();
        let ti: Vec<f64> = (0..3).map(|l| isi_tap_probability(&cfg, Source::Ix, l, t_r).unwrap()).collect();
        let h = [cfg.high_count, cfg.low_count, cfg.high_count];
        let Conditional::Pmf(pmf) = isi_conditional_pmf(&h, &h, &tt, &ti, CountModel::Binomial).unwrap()
        else {
            panic!()
        };
        assert!((pmf.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tap_values() {
        let cfg = LinkConfig::table1_3d();
        let tb = cfg.symbol_interval;
        let t0 = isi_tap_probability(&cfg, Source::Tx, 0, 0.3 * tb).unwrap();
        assert_eq!(t0, cfg.hit_prob(Source::Tx, 0.3 * tb).unwrap());
        // (1/15)[erfc(a/sqrt 2) - erfc(a)], a = (d - r) / (2 sqrt(D T_b))
        let t1 = isi_tap_probability(&cfg, Source::Tx, 1, tb).unwrap();
        assert!((t1 - 0.001_945_828_385_419_799_3).abs() < 1e-14, "{t1}");
        let total: f64 = (0..20000)
            .map(|l| isi_tap_probability(&cfg, Source::Tx, l, tb).unwrap())
            .sum();
        let lim = cfg.hit_prob(Source::Tx, 20000.0 * tb).unwrap();
        assert!((total - lim).abs() < 1e-12);
    }
}
