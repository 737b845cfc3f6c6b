//! Link parameters and first-passage absorption probabilities.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{config_err, Error, Result};
use crate::numerics::erfc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "1d")]
    One,
    #[serde(rename = "3d")]
    Three,
}

/// Which emitter a hit probability refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Tx,
    Ix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub diffusion_coeff: f64,
    pub distance_tx: f64,
    pub distance_ix: f64,
    /// Receiver sphere radius; ignored in 1D.
    #[serde(default)]
    pub receiver_radius: f64,
    pub symbol_interval: f64,
    pub low_count: u32,
    pub high_count: u32,
    pub dimension: Dimension,
    #[serde(default = "one")]
    pub isi_memory: usize,
    #[serde(default = "yes")]
    pub interference_location_known: bool,
    #[serde(default)]
    pub location_bounds: Option<(f64, f64)>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl LinkConfig {
    /// 1D parameter set of the reference system.
    pub fn table1_1d() -> Self {
        LinkConfig {
            diffusion_coeff: 1e-9,
            distance_tx: 1.5e-5,
            distance_ix: 6e-5,
            receiver_radius: 0.0,
            symbol_interval: 7.12,
            low_count: 20,
            high_count: 40,
            dimension: Dimension::One,
            isi_memory: 1,
            interference_location_known: true,
            location_bounds: None,
        }
    }

    /// 3D parameter set of the reference system.
    pub fn table1_3d() -> Self {
        LinkConfig {
            receiver_radius: 1e-6,
            symbol_interval: 6.21,
            low_count: 1000,
            high_count: 2000,
            dimension: Dimension::Three,
            ..Self::table1_1d()
        }
    }

    pub fn with_ix_ratio(mut self, ratio: f64) -> Self {
        self.distance_ix = ratio * self.distance_tx;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, field: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(config_err(field, format!("must be finite and > 0, got {v}")))
            }
        };
        positive(self.diffusion_coeff, "diffusion_coeff")?;
        positive(self.distance_tx, "distance_tx")?;
        positive(self.distance_ix, "distance_ix")?;
        positive(self.symbol_interval, "symbol_interval")?;
        if self.dimension == Dimension::Three {
            let r = self.receiver_radius;
            if !(r > 0.0 && r < self.distance_tx.min(self.distance_ix)) {
                return Err(config_err(
                    "receiver_radius",
                    format!("3D requires 0 < r < min(d, d_I), got {r}"),
                ));
            }
        }
        if self.high_count <= self.low_count {
            return Err(config_err(
                "high_count",
                format!("must exceed low_count ({} <= {})", self.high_count, self.low_count),
            ));
        }
        if self.isi_memory < 1 {
            return Err(config_err("isi_memory", "must be >= 1"));
        }
        if !self.interference_location_known {
            match self.location_bounds {
                Some((a, b)) if a > 0.0 && a < b && b.is_finite() => {}
                Some((a, b)) => {
                    return Err(config_err(
                        "location_bounds",
                        format!("need 0 < a < b, got ({a}, {b})"),
                    ))
                }
                None => {
                    return Err(config_err(
                        "location_bounds",
                        "required when interference_location_known is false",
                    ))
                }
            }
            if self.dimension == Dimension::Three {
                if let Some((a, _)) = self.location_bounds {
                    if a <= self.receiver_radius {
                        return Err(config_err("location_bounds", "a must exceed receiver_radius"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn distance(&self, which: Source) -> f64 {
        match which {
            Source::Tx => self.distance_tx,
            Source::Ix => self.distance_ix,
        }
    }

    /// First-passage CDF for an emitter at `distance`.
    pub fn hit_prob_at(&self, distance: f64, t: f64) -> Result<f64> {
        match self.dimension {
            Dimension::One => hit_prob_1d(distance, self.diffusion_coeff, t),
            Dimension::Three => {
                hit_prob_3d(distance, self.receiver_radius, self.diffusion_coeff, t)
            }
        }
    }

    pub fn hit_prob(&self, which: Source, t: f64) -> Result<f64> {
        self.hit_prob_at(self.distance(which), t)
    }

    pub fn hit_rate_at(&self, distance: f64, t: f64) -> Result<f64> {
        match self.dimension {
            Dimension::One => hit_rate(distance, 0.0, self.diffusion_coeff, t),
            Dimension::Three => hit_rate(distance, self.receiver_radius, self.diffusion_coeff, t),
        }
    }

    /// Limit of the hit probability as t grows without bound.
    pub fn hit_prob_limit(&self, distance: f64) -> f64 {
        match self.dimension {
            Dimension::One => 1.0,
            Dimension::Three => self.receiver_radius / distance,
        }
    }
}

/// Detection window length, constrained to the symbol interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionInterval {
    pub t_r: f64,
}

impl DetectionInterval {
    pub fn new(t_r: f64, symbol_interval: f64) -> Result<Self> {
        if !(t_r >= 0.0 && t_r <= symbol_interval) {
            return Err(Error::Domain(format!(
                "detection interval {t_r} outside [0, {symbol_interval}]"
            )));
        }
        Ok(DetectionInterval { t_r })
    }
}

fn check_common(d: f64, diff: f64, t: f64) -> Result<()> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {d}")));
    }
    if !(diff > 0.0) {
        return Err(Error::Domain(format!("diffusion coefficient must be > 0, got {diff}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Probability that a molecule released at distance `d` from a point
/// absorber on the line has been absorbed by time `t`.
pub fn hit_prob_1d(d: f64, diffusion_coeff: f64, t: f64) -> Result<f64> {
    check_common(d, diffusion_coeff, t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(erfc(d / (2.0 * (diffusion_coeff * t).sqrt())))
}

/// Absorption probability by time `t` for a sphere of radius `r` whose centre
/// sits at distance `d` from the release point.
pub fn hit_prob_3d(d: f64, r: f64, diffusion_coeff: f64, t: f64) -> Result<f64> {
    check_common(d, diffusion_coeff, t)?;
    if !(r > 0.0 && r < d) {
        return Err(Error::Domain(format!("need 0 < r < d, got r={r}, d={d}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(r / d * erfc((d - r) / (2.0 * (diffusion_coeff * t).sqrt())))
}

// r = 0 selects the 1D form.
fn hit_rate(d: f64, r: f64, diffusion_coeff: f64, t: f64) -> Result<f64> {
    check_common(d, diffusion_coeff, t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let (gap, scale) = if r > 0.0 { (d - r, r / d) } else { (d, 1.0) };
    let expo = -gap * gap / (4.0 * diffusion_coeff * t);
    let v = scale * gap / (2.0 * (PI * diffusion_coeff).sqrt()) * t.powf(-1.5) * expo.exp();
    Ok(if v.is_finite() { v } else { 0.0 })
}

/// Time derivative of the hit probability for the transmitter or interferer.
pub fn hit_prob_derivative(config: &LinkConfig, which: Source, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    config.hit_rate_at(config.distance(which), t)
}

/// Symbol interval at which the transmitter's hit probability reaches
/// `fraction` of its asymptotic value.
pub fn symbol_interval_for_fraction(config: &LinkConfig, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let d = config.distance_tx;
    let target = fraction * config.hit_prob_limit(d);
    let f = |t: f64| config.hit_prob_at(d, t).map(|p| p - target);
    let (mut lo, mut hi) = (1e-12_f64, 1.0_f64);
    while f(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::NumericFailure("no bracket for symbol interval".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
