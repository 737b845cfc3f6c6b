//! Stochastic validation: symbol-level Monte Carlo BER and particle-based
//! Brownian absorption.
//!
//! Every trial, sequence and particle draws from its own ChaCha8 stream keyed
//! by (seed, index), so results do not depend on how rayon splits the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrival::ISI_MEMORY_CAP;
use crate::channel::{Dimension, LinkConfig, Source};
use crate::detector::{detect, location_bounds, Bit, DecisionRule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub estimate: f64,
    pub trials: u64,
    pub errors: u64,
    pub std_error: f64,
    pub seed: u64,
}

impl SimEstimate {
    pub fn from_counts(errors: u64, trials: u64, seed: u64) -> Self {
        let p = if trials == 0 { 0.0 } else { errors as f64 / trials as f64 };
        SimEstimate {
            estimate: p,
            trials,
            errors,
            std_error: if trials == 0 { 0.0 } else { (p * (1.0 - p) / trials as f64).sqrt() },
            seed,
        }
    }
}

/// Independent stream for work item `index`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn binomial_draw(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability checked").sample(rng)
}

fn count_for(bit: Bit, config: &LinkConfig) -> u64 {
    match bit {
        Bit::Zero => config.low_count as u64,
        Bit::One => config.high_count as u64,
    }
}

fn random_bit(rng: &mut ChaCha8Rng) -> Bit {
    if rng.random::<bool>() {
        Bit::One
    } else {
        Bit::Zero
    }
}

/// Symbol-by-symbol Monte Carlo BER without ISI. With an unknown interferer
/// location, each trial draws the distance uniformly from the location bounds.
pub fn monte_carlo_ber(
    config: &LinkConfig,
    t_r: f64,
    rule: &DecisionRule,
    trials: u64,
    seed: u64,
) -> Result<SimEstimate> {
    config.validate()?;
    let p_d = config.hit_prob(Source::Tx, t_r)?;
    let bounds = if config.interference_location_known {
        None
    } else {
        Some(location_bounds(config)?)
    };
    let p_known = config.hit_prob(Source::Ix, t_r)?;
    let errors = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let mut rng = stream(seed, i);
            let sent = random_bit(&mut rng);
            let interferer = random_bit(&mut rng);
            let p_di = match bounds {
                None => p_known,
                Some((a, b)) => config.hit_prob_at(rng.random_range(a..b), t_r)?,
            };
            let y = binomial_draw(&mut rng, count_for(sent, config), p_d)
                + binomial_draw(&mut rng, count_for(interferer, config), p_di);
            Ok((detect(y, rule) != sent) as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(SimEstimate::from_counts(errors, trials, seed))
}

// Conditional absorption probabilities for one release: within the counted
// window of lag l, and within the gap that follows it, each given survival
// to the start of that stretch.
fn release_schedule(config: &LinkConfig, which: Source, t_r: f64, lags: usize) -> Result<Vec<(f64, f64)>> {
    let tb = config.symbol_interval;
    let f = |t: f64| config.hit_prob(which, t);
    let cond = |from: f64, to: f64| -> f64 {
        let rest = 1.0 - from;
        if rest <= 0.0 {
            0.0
        } else {
            ((to - from) / rest).clamp(0.0, 1.0)
        }
    };
    (0..lags)
        .map(|l| {
            let start = f(l as f64 * tb)?;
            let end = f(l as f64 * tb + t_r)?;
            let next = f((l + 1) as f64 * tb)?;
            Ok((cond(start, end), cond(end, next)))
        })
        .collect()
}

/// Monte Carlo BER over transmitted sequences with full ISI: every earlier
/// release in the sequence contributes to the current count. The rule is
/// the one built for `detector_memory` symbols of ISI.
pub fn monte_carlo_ber_isi(
    config: &LinkConfig,
    t_r: f64,
    rule: &DecisionRule,
    n_sequences: u64,
    seq_len: usize,
    detector_memory: usize,
    seed: u64,
) -> Result<SimEstimate> {
    config.validate()?;
    if detector_memory == 0 || detector_memory > ISI_MEMORY_CAP {
        return Err(Error::EnumerationCap {
            memory: detector_memory,
            cap: ISI_MEMORY_CAP,
        });
    }
    if seq_len == 0 {
        return Err(Error::Domain("sequences need at least one symbol".into()));
    }
    if let Some(m) = rule.y_max() {
        let want = 2 * detector_memory * config.high_count as usize;
        if m != want {
            return Err(Error::LengthMismatch {
                what: "rule support for the detector memory",
                left: m + 1,
                right: want + 1,
            });
        }
    }
    let sched = [
        release_schedule(config, Source::Tx, t_r, seq_len)?,
        release_schedule(config, Source::Ix, t_r, seq_len)?,
    ];
    let errors: u64 = (0..n_sequences)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, s);
            let tx: Vec<Bit> = (0..seq_len).map(|_| random_bit(&mut rng)).collect();
            let ix: Vec<Bit> = (0..seq_len).map(|_| random_bit(&mut rng)).collect();
            let mut counts = vec![0u64; seq_len];
            for i in 0..seq_len {
                for (bits, sch) in [(&tx, &sched[0]), (&ix, &sched[1])] {
                    let mut left = count_for(bits[i], config);
                    for (l, &(q_win, q_gap)) in sch.iter().take(seq_len - i).enumerate() {
                        if left == 0 {
                            break;
                        }
                        let c = binomial_draw(&mut rng, left, q_win);
                        counts[i + l] += c;
                        left -= c;
                        left -= binomial_draw(&mut rng, left, q_gap);
                    }
                }
            }
            counts
                .iter()
                .zip(&tx)
                .filter(|(&y, &b)| detect(y, rule) != b)
                .count() as u64
        })
        .sum();
    Ok(SimEstimate::from_counts(errors, n_sequences * seq_len as u64, seed))
}

/// Particle simulation settings for one source-receiver pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRunConfig {
    pub time_step: f64,
    pub n_particles: u64,
    pub horizon: f64,
    pub seed: u64,
    pub dimension: Dimension,
    pub diffusion_coeff: f64,
    pub distance: f64,
    pub receiver_radius: f64,
    /// Replace runs of steps far from the receiver by one Gaussian jump.
    pub adaptive: bool,
    /// Brownian-bridge hit test between steps for the sphere (planar
    /// approximation); off means endpoint checks only.
    pub sphere_bridge: bool,
}

impl ParticleRunConfig {
    pub fn new(config: &LinkConfig, which: Source, time_step: f64, n_particles: u64, horizon: f64, seed: u64) -> Self {
        ParticleRunConfig {
            time_step,
            n_particles,
            horizon,
            seed,
            dimension: config.dimension,
            diffusion_coeff: config.diffusion_coeff,
            distance: config.distance(which),
            receiver_radius: if config.dimension == Dimension::Three { config.receiver_radius } else { 0.0 },
            adaptive: true,
            sphere_bridge: true,
        }
    }

    pub fn step_deviation(&self) -> f64 {
        (2.0 * self.diffusion_coeff * self.time_step).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.time_step) {
            return Err(Error::Domain(format!("time step must be positive, got {}", self.time_step)));
        }
        if !pos(self.horizon) || !pos(self.diffusion_coeff) {
            return Err(Error::Domain("horizon and diffusion coefficient must be positive".into()));
        }
        if self.n_particles == 0 {
            return Err(Error::Domain("need at least one particle".into()));
        }
        if self.distance <= self.receiver_radius {
            return Err(Error::Domain("release point must lie outside the receiver".into()));
        }
        Ok(())
    }
}

// A jump of k steps is taken only if the gap to the receiver exceeds this
// many per-axis deviations of the whole jump.
const JUMP_MARGIN: f64 = 7.0;

// Step index at whose end the particle is absorbed, if within `max_steps`.
fn absorption_step(run: &ParticleRunConfig, rng: &mut ChaCha8Rng, max_steps: u64) -> Option<u64> {
    let var1 = 2.0 * run.diffusion_coeff * run.time_step;
    let sd1 = var1.sqrt();
    let three = run.dimension == Dimension::Three;
    let r = run.receiver_radius;
    let mut pos = [run.distance, 0.0, 0.0];
    let axes = if three { 3 } else { 1 };
    let gap = |p: &[f64; 3]| {
        if three {
            (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - r
        } else {
            p[0].abs()
        }
    };
    let mut n = 0u64;
    while n < max_steps {
        let h1 = gap(&pos);
        if run.adaptive {
            let k = ((h1 / JUMP_MARGIN).powi(2) / var1).floor() as u64;
            if k >= 2 {
                let k = k.min(max_steps - n);
                let sd = (var1 * k as f64).sqrt();
                let start = pos[0];
                for x in pos.iter_mut().take(axes) {
                    *x += sd * rng.sample::<f64, _>(StandardNormal);
                }
                n += k;
                // reachable only through a > JUMP_MARGIN-sigma excursion
                if (three && gap(&pos) <= 0.0) || (!three && start * pos[0] <= 0.0) {
                    return Some(n);
                }
                continue;
            }
        }
        let start = pos[0];
        for x in pos.iter_mut().take(axes) {
            *x += sd1 * rng.sample::<f64, _>(StandardNormal);
        }
        n += 1;
        if three {
            let h2 = gap(&pos);
            if h2 <= 0.0 {
                return Some(n);
            }
            if run.sphere_bridge && rng.random::<f64>() < (-h1 * h2 / (run.diffusion_coeff * run.time_step)).exp() {
                return Some(n);
            }
        } else {
            if start * pos[0] <= 0.0 {
                return Some(n);
            }
            if rng.random::<f64>() < (-start * pos[0] / (run.diffusion_coeff * run.time_step)).exp() {
                return Some(n);
            }
        }
    }
    None
}

/// Empirical absorbed fraction at each sample time.
pub fn particle_hit_prob(run: &ParticleRunConfig, sample_times: &[f64]) -> Result<Vec<(f64, f64)>> {
    run.validate()?;
    for &t in sample_times {
        if !(0.0..=run.horizon).contains(&t) {
            return Err(Error::Domain(format!("sample time {t} outside [0, {}]", run.horizon)));
        }
    }
    let max_steps = (run.horizon / run.time_step * (1.0 + 1e-12)).floor() as u64;
    let mut steps: Vec<u64> = (0..run.n_particles)
        .into_par_iter()
        .filter_map(|i| absorption_step(run, &mut stream(run.seed, i), max_steps))
        .collect();
    steps.sort_unstable();
    Ok(sample_times
        .iter()
        .map(|&t| {
            let k = (t / run.time_step * (1.0 + 1e-12)).floor() as u64;
            let hit = steps.partition_point(|&s| s <= k);
            (t, hit as f64 / run.n_particles as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::CountModel;
    use crate::ber::ber_binomial;
    use crate::detector::build_rule_discrete;

    #[test]
    fn no_signal_gives_coin_flips() {
        let mut cfg = LinkConfig::table1_1d();
        cfg.distance_tx = 10.0;
        cfg.distance_ix = 10.0;
        let t = cfg.symbol_interval;
        let rule = build_rule_discrete(&cfg, CountModel::Binomial, t).unwrap();
        let est = monte_carlo_ber(&cfg, t, &rule, 20_000, 3).unwrap();
        assert!((est.estimate - 0.5).abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn seeded_runs_repeat_for_any_worker_count() {
        let cfg = LinkConfig::table1_3d();
        let t = 0.01 * cfg.symbol_interval;
        let rule = build_rule_discrete(&cfg, CountModel::Binomial, t).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo_ber(&cfg, t, &rule, 5_000, 11).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(1));
        let other = monte_carlo_ber(&cfg, t, &rule, 5_000, 12).unwrap();
        assert_ne!(a.errors, other.errors);
    }

    #[test]
    fn matches_closed_form_3d() {
        let cfg = LinkConfig::table1_3d();
        let t = 0.2 * cfg.symbol_interval;
        let rule = build_rule_discrete(&cfg, CountModel::Binomial, t).unwrap();
        let want = ber_binomial(&cfg, t, &rule).unwrap().value;
        let est = monte_carlo_ber(&cfg, t, &rule, 100_000, 5).unwrap();
        assert!((est.estimate - want).abs() <= 3.0 * est.std_error, "{est:?} vs {want}");
    }

    #[test]
    fn isi_vanishes_for_long_symbols() {
        let mut cfg = LinkConfig::table1_3d();
        cfg.symbol_interval = 1e4;
        let t = 1.0;
        let rule = build_rule_discrete(&cfg, CountModel::Binomial, t).unwrap();
        let isi = monte_carlo_ber_isi(&cfg, t, &rule, 200, 50, 1, 9).unwrap();
        let plain = monte_carlo_ber(&cfg, t, &rule, 10_000, 9).unwrap();
        let se = (isi.std_error.powi(2) + plain.std_error.powi(2)).sqrt();
        assert!((isi.estimate - plain.estimate).abs() <= 3.0 * se, "{isi:?} vs {plain:?}");
        assert_eq!(isi.trials, 200 * 50);
    }

    #[test]
    fn isi_rule_support_is_checked() {
        let cfg = LinkConfig::table1_1d();
        let rule = build_rule_discrete(&cfg, CountModel::Binomial, 1.0).unwrap();
        assert!(matches!(
            monte_carlo_ber_isi(&cfg, 1.0, &rule, 1, 10, 2, 0),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(monte_carlo_ber_isi(&cfg, 1.0, &rule, 1, 10, 0, 0).is_err());
    }

    #[test]
    fn one_dimensional_walk_is_recurrent() {
        let cfg = LinkConfig::table1_1d();
        let run = ParticleRunConfig::new(&cfg, Source::Tx, 1e-3, 2_000, 1e4, 1);
        let out = particle_hit_prob(&run, &[1e4]).unwrap();
        assert!(out[0].1 >= 0.99, "{out:?}");
    }

    #[test]
    fn curves_monotone_and_ordered_by_distance() {
        let cfg = LinkConfig::table1_3d();
        let tb = cfg.symbol_interval;
        let times: Vec<f64> = (1..=8).map(|k| tb * k as f64 / 8.0).collect();
        let near = particle_hit_prob(&ParticleRunConfig::new(&cfg, Source::Tx, 1e-4, 5_000, tb, 2), &times).unwrap();
        let far = particle_hit_prob(&ParticleRunConfig::new(&cfg, Source::Ix, 1e-4, 5_000, tb, 2), &times).unwrap();
        for w in near.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        for (a, b) in near.iter().zip(&far) {
            assert!(a.1 >= b.1, "{a:?} {b:?}");
        }
    }

    #[test]
    fn particle_fraction_tracks_closed_form_1d() {
        let cfg = LinkConfig::table1_1d();
        let tb = cfg.symbol_interval;
        let run = ParticleRunConfig::new(&cfg, Source::Tx, 1e-5, 10_000, tb, 4);
        for (t, f) in particle_hit_prob(&run, &[0.1 * tb, tb]).unwrap() {
            let p = cfg.hit_prob(Source::Tx, t).unwrap();
            let se = (p * (1.0 - p) / 10_000.0).sqrt();
            assert!((f - p).abs() <= 4.0 * se, "t={t}: {f} vs {p}");
        }
    }

    #[test]
    fn particle_inputs_validated() {
        let cfg = LinkConfig::table1_3d();
        let mut run = ParticleRunConfig::new(&cfg, Source::Tx, 1e-5, 10, 1.0, 0);
        assert!(particle_hit_prob(&run, &[2.0]).is_err());
        run.time_step = 0.0;
        assert!(particle_hit_prob(&run, &[0.5]).is_err());
        assert!((ParticleRunConfig::new(&cfg, Source::Tx, 1e-5, 1, 1.0, 0).step_deviation()
            - (2.0 * 1e-9 * 1e-5f64).sqrt())
        .abs()
            < 1e-20);
    }
}
