//! Table builders for each subcommand. Points run on the rayon pool and
//! rows come back in sweep order.

use rayon::prelude::*;

use mcrx::arrival::CountModel;
use mcrx::ber::ber_isi_model;
use mcrx::channel::{LinkConfig, Source};
use mcrx::detector::{build_rule_isi, DecisionRule};
use mcrx::optimizer::{
    grid_oracle_with, optimize_alg1_with, optimize_alg2_with, Alg1Params, Alg2Params, Algorithm,
    Objective, OptimizationReport,
};
use mcrx::sim::{monte_carlo_ber, monte_carlo_ber_isi, particle_hit_prob, ParticleRunConfig, SimEstimate};

use crate::spec::{AlgorithmChoice, Command, Point, SweepSpec};
use crate::table::Table;
use crate::{CliError, CliResult};

pub fn run(command: Command, spec: &SweepSpec) -> CliResult<Table> {
    let table = match command {
        Command::BerCurve => run_ber_curve(spec),
        Command::Optimize => run_optimize_sweep(spec),
        Command::UnknownLocation => run_unknown_location(spec),
        Command::Isi => run_isi_sweep(spec),
        Command::Particle => run_particle_validate(spec),
    }?;
    table.check_finite()?;
    Ok(table)
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Alg1 => "alg1",
        Algorithm::Alg2 => "alg2",
        Algorithm::Grid => "grid",
    }
}

/// Concrete algorithms for `model`, in request order without repeats.
pub fn resolve_algorithms(choices: &[AlgorithmChoice], model: CountModel) -> Vec<Algorithm> {
    let mut out = Vec::new();
    for c in choices {
        let add: &[Algorithm] = match (c, model) {
            (AlgorithmChoice::Alg1, _) => &[Algorithm::Alg1],
            (AlgorithmChoice::Alg2, _) => &[Algorithm::Alg2],
            (AlgorithmChoice::Grid, _) => &[Algorithm::Grid],
            (AlgorithmChoice::All, CountModel::Gaussian) => &[Algorithm::Alg2, Algorithm::Grid],
            (AlgorithmChoice::All, _) => &[Algorithm::Alg1, Algorithm::Grid],
        };
        for a in add {
            if !out.contains(a) {
                out.push(*a);
            }
        }
    }
    out
}

pub fn optimize(obj: &Objective, algorithm: Algorithm, grid: usize) -> mcrx::Result<OptimizationReport> {
    match algorithm {
        Algorithm::Alg1 => optimize_alg1_with(obj, &Alg1Params::default()),
        Algorithm::Alg2 => optimize_alg2_with(obj, &Alg2Params::default()),
        Algorithm::Grid => grid_oracle_with(obj, grid),
    }
}

fn par_rows<F>(points: &[Point], row: F) -> CliResult<Vec<Vec<f64>>>
where
    F: Fn(&Point) -> CliResult<Vec<f64>> + Sync + Send,
{
    points.par_iter().map(row).collect()
}

fn finish(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Table {
    let mut t = Table::new(columns);
    for r in rows {
        t.push(r);
    }
    t
}

fn push_estimate(row: &mut Vec<f64>, e: &SimEstimate) {
    row.push(e.estimate);
    row.push(e.std_error);
}

/// Analytic BER and optional Monte Carlo check against T_r/T_b.
pub fn run_ber_curve(spec: &SweepSpec) -> CliResult<Table> {
    let points = spec.points(Command::BerCurve)?;
    let trials = spec.trials();
    let mut columns = vec!["t_r_over_t_b".to_string()];
    for m in &spec.models {
        columns.push(format!("ber_{}", m.name()));
        if trials > 0 {
            columns.push(format!("mc_ber_{}", m.name()));
            columns.push(format!("mc_std_error_{}", m.name()));
        }
    }
    let rows = par_rows(&points, |p| {
        let c = &p.config;
        let t = p.time_ratio.expect("time sweep") * c.symbol_interval;
        let mut row = vec![p.value];
        for &m in &spec.models {
            let (rule, ber) = if c.isi_memory > 1 {
                let rule = build_rule_isi(c, m, t)?;
                let ber = ber_isi_model(c, m, t, &rule)?.value;
                (rule, ber)
            } else {
                Objective::with_nodes(c, m, spec.quadrature_nodes)?.evaluate(t)?
            };
            row.push(ber);
            if trials > 0 {
                push_estimate(&mut row, &simulate(spec, c, t, &rule, trials)?);
            }
        }
        Ok(row)
    })?;
    Ok(finish(columns, rows))
}

fn simulate(spec: &SweepSpec, c: &LinkConfig, t: f64, rule: &DecisionRule, trials: u64) -> CliResult<SimEstimate> {
    if c.isi_memory > 1 {
        let len = spec.sequence_length as u64;
        let n_seq = trials.div_ceil(len);
        Ok(monte_carlo_ber_isi(c, t, rule, n_seq, spec.sequence_length, c.isi_memory, spec.seed)?)
    } else {
        Ok(monte_carlo_ber(c, t, rule, trials, spec.seed)?)
    }
}

/// Optimal detection interval per sweep point, every requested algorithm.
pub fn run_optimize_sweep(spec: &SweepSpec) -> CliResult<Table> {
    optimize_table(spec, Command::Optimize)
}

/// Optimal detection interval against a/b for a uniformly placed interferer.
pub fn run_unknown_location(spec: &SweepSpec) -> CliResult<Table> {
    if !spec.isi_memories.is_empty() {
        return Err(CliError::Config(
            "isi_memories: ISI columns need a known interferer location".into(),
        ));
    }
    optimize_table(spec, Command::UnknownLocation)
}

fn optimize_table(spec: &SweepSpec, command: Command) -> CliResult<Table> {
    let points = spec.points(command)?;
    let trials = spec.trials();
    let mut columns = vec![spec.parameter_for(command).to_string()];
    let algos: Vec<Vec<Algorithm>> = spec.models.iter().map(|&m| resolve_algorithms(&spec.algorithms, m)).collect();
    for (m, al) in spec.models.iter().zip(&algos) {
        let m = m.name();
        for a in al {
            let a = algorithm_name(*a);
            columns.push(format!("t_star_over_t_b_{m}_{a}"));
            columns.push(format!("ber_star_{m}_{a}"));
        }
        columns.push(format!("ber_t_b_{m}"));
        for l in &spec.isi_memories {
            columns.push(format!("ber_isi_l{l}_t_star_{m}"));
            columns.push(format!("ber_isi_l{l}_t_b_{m}"));
        }
        if trials > 0 {
            columns.push(format!("mc_ber_t_star_{m}"));
            columns.push(format!("mc_std_error_t_star_{m}"));
        }
    }
    let rows = par_rows(&points, |p| {
        let c = &p.config;
        let tb = c.symbol_interval;
        let mut row = vec![p.value];
        for (&m, al) in spec.models.iter().zip(&algos) {
            let obj = Objective::with_nodes(c, m, spec.quadrature_nodes)?;
            let reports: Vec<OptimizationReport> =
                al.iter().map(|&a| optimize(&obj, a, spec.grid)).collect::<mcrx::Result<_>>()?;
            for r in &reports {
                row.push(r.t_star / tb);
                row.push(r.ber_star);
            }
            row.push(obj.evaluate(tb)?.1);
            // The first listed algorithm supplies T_r* for derived columns.
            let t_star = reports[0].t_star;
            for &l in &spec.isi_memories {
                let cl = LinkConfig {
                    isi_memory: l,
                    ..c.clone()
                };
                for t in [t_star, tb] {
                    let rule = build_rule_isi(&cl, m, t)?;
                    row.push(ber_isi_model(&cl, m, t, &rule)?.value);
                }
            }
            if trials > 0 {
                let rule = obj.rule(t_star)?;
                push_estimate(&mut row, &monte_carlo_ber(c, t_star, &rule, trials, spec.seed)?);
            }
        }
        Ok(row)
    })?;
    Ok(finish(columns, rows))
}

/// Simulated ISI BER at T_r* (optimized without ISI) and at T_b, per
/// detector memory, against the symbol interval.
pub fn run_isi_sweep(spec: &SweepSpec) -> CliResult<Table> {
    let points = spec.points(Command::Isi)?;
    let mut columns = vec!["symbol_interval".to_string()];
    let primary: Vec<Algorithm> = spec
        .models
        .iter()
        .map(|&m| resolve_algorithms(&spec.algorithms, m)[0])
        .collect();
    for m in &spec.models {
        let m = m.name();
        columns.push(format!("t_star_over_t_b_{m}"));
        for l in &spec.detector_memories {
            for at in ["t_star", "t_b"] {
                columns.push(format!("mc_ber_{at}_{m}_l{l}"));
                columns.push(format!("mc_std_error_{at}_{m}_l{l}"));
            }
        }
    }
    let rows = par_rows(&points, |p| {
        let c = LinkConfig {
            isi_memory: 1,
            ..p.config.clone()
        };
        let tb = c.symbol_interval;
        let mut row = vec![p.value];
        for (&m, &a) in spec.models.iter().zip(&primary) {
            let obj = Objective::with_nodes(&c, m, spec.quadrature_nodes)?;
            let t_star = optimize(&obj, a, spec.grid)?.t_star;
            row.push(t_star / tb);
            for &l in &spec.detector_memories {
                let cl = LinkConfig {
                    isi_memory: l,
                    ..c.clone()
                };
                for t in [t_star, tb] {
                    let rule = build_rule_isi(&cl, m, t)?;
                    let est = monte_carlo_ber_isi(&cl, t, &rule, spec.sequences, spec.sequence_length, l, spec.seed)?;
                    push_estimate(&mut row, &est);
                }
            }
        }
        Ok(row)
    })?;
    Ok(finish(columns, rows))
}

/// Analytic against particle-simulated hit probabilities for both emitters.
pub fn run_particle_validate(spec: &SweepSpec) -> CliResult<Table> {
    let points = spec.points(Command::Particle)?;
    let c = &spec.base;
    let tb = c.symbol_interval;
    let times: Vec<f64> = points.iter().map(|p| p.time_ratio.expect("time sweep") * tb).collect();
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let columns = [
        "t_over_t_b",
        "t",
        "analytic_tx",
        "simulated_tx",
        "rel_error_tx",
        "analytic_ix",
        "simulated_ix",
        "rel_error_ix",
    ]
    .map(String::from)
    .to_vec();
    let mut sims = Vec::new();
    for (i, which) in [Source::Tx, Source::Ix].into_iter().enumerate() {
        let run = ParticleRunConfig::new(c, which, spec.time_step, spec.particles, horizon, spec.seed.wrapping_add(i as u64));
        let sim = particle_hit_prob(&run, &times)?;
        let analytic: Vec<f64> = times.iter().map(|&t| c.hit_prob(which, t)).collect::<mcrx::Result<_>>()?;
        sims.push((analytic, sim));
    }
    let mut t = Table::new(columns);
    for (k, p) in points.iter().enumerate() {
        let mut row = vec![p.value, times[k]];
        for (analytic, sim) in &sims {
            let (a, s) = (analytic[k], sim[k].1);
            let rel = if a > 0.0 {
                (s - a) / a
            } else if s == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            row.extend([a, s, rel]);
        }
        t.push(row);
    }
    Ok(t)
}
