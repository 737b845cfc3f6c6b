//! Figure recipes bound to the reference parameter set.

use mcrx::arrival::CountModel;
use mcrx::channel::LinkConfig;

use crate::spec::{Command, SweepSpec};
use crate::{CliError, CliResult};

pub const PRESET_NAMES: &[&str] = &[
    "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig10", "fig11",
];

const ALL_MODELS: [CountModel; 3] = [CountModel::Binomial, CountModel::Poisson, CountModel::Gaussian];

/// d_I/d values for the 1D optimization figures.
pub const RATIOS_1D: [f64; 13] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0];
/// d_I/d values for the 3D optimization figures.
pub const RATIOS_3D: [f64; 12] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0];
/// Symbol intervals (s) for the ISI figure.
pub const ISI_SYMBOL_INTERVALS: [f64; 6] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

fn steps(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

pub fn preset(name: &str) -> CliResult<(Command, SweepSpec)> {
    let (command, spec) = match name {
        "fig2" => {
            let mut s = SweepSpec::new(LinkConfig::table1_3d(), steps(50));
            s.models = ALL_MODELS.to_vec();
            s.trials = Some(100_000);
            (Command::BerCurve, s)
        }
        "fig3" => (Command::Particle, SweepSpec::new(LinkConfig::table1_3d(), steps(20))),
        "fig4" | "fig5" => {
            let mut s = SweepSpec::new(LinkConfig::table1_1d(), RATIOS_1D.to_vec());
            s.models = ALL_MODELS.to_vec();
            if name == "fig5" {
                s.models = vec![CountModel::Binomial];
                s.isi_memories = vec![2, 3];
                s.trials = Some(100_000);
            }
            (Command::Optimize, s)
        }
        "fig6" | "fig7" => {
            let mut s = SweepSpec::new(LinkConfig::table1_3d(), RATIOS_3D.to_vec());
            s.models = ALL_MODELS.to_vec();
            if name == "fig7" {
                s.models = vec![CountModel::Binomial];
                s.isi_memories = vec![2, 3];
                s.trials = Some(100_000);
            }
            (Command::Optimize, s)
        }
        "fig8" => (
            Command::Isi,
            SweepSpec::new(LinkConfig::table1_3d(), ISI_SYMBOL_INTERVALS.to_vec()),
        ),
        "fig10" | "fig11" => {
            let mut base = LinkConfig::table1_1d();
            base.location_bounds = Some((3e-5, 1.2e-4));
            let mut s = SweepSpec::new(base, (3..=12).map(|k| k as f64 / 12.0).collect());
            s.models = ALL_MODELS.to_vec();
            if name == "fig11" {
                s.trials = Some(100_000);
            }
            (Command::UnknownLocation, s)
        }
        other => {
            return Err(CliError::Config(format!(
                "preset: unknown `{other}`, expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok((command, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let (cmd, spec) = preset(name).unwrap();
            assert!(spec.points(cmd).is_ok(), "{name}");
        }
        assert!(preset("fig9").is_err());
    }
}
