//! Maximum-likelihood decision rules and symbol detection.

use serde::{Deserialize, Serialize};

use crate::arrival::{ChannelState, CountModel, GaussianMixture, IsiState, ISI_MEMORY_CAP};
use crate::channel::LinkConfig;
use crate::error::{Error, Result};

/// Log-likelihood margin below which two likelihoods count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Grid resolution of the Gaussian boundary scan.
pub const GAUSSIAN_SCAN_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bit {
    #[serde(rename = "bit0")]
    Zero,
    #[serde(rename = "bit1")]
    One,
}

impl Bit {
    pub fn flip(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Bit {
        if i == 0 {
            Bit::Zero
        } else {
            Bit::One
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RuleRepr", try_from = "RuleRepr")]
pub enum DecisionRule {
    /// Label of every count in `0..=y_max`.
    Discrete { membership: Vec<Bit> },
    /// Region labels alternate across `boundaries`, starting with `leftmost`.
    /// `degenerate` marks identical likelihoods (every observation maps to bit1).
    Continuous {
        boundaries: Vec<f64>,
        leftmost: Bit,
        degenerate: bool,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RuleRepr {
    Discrete {
        y_max: usize,
        runs: Vec<(Bit, usize)>,
    },
    Continuous {
        boundaries: Vec<f64>,
        leftmost: Bit,
        #[serde(default)]
        degenerate: bool,
    },
}

impl From<DecisionRule> for RuleRepr {
    fn from(rule: DecisionRule) -> Self {
        match rule {
            DecisionRule::Discrete { membership } => {
                let mut runs: Vec<(Bit, usize)> = Vec::new();
                for b in &membership {
                    match runs.last_mut() {
                        Some((lb, n)) if lb == b => *n += 1,
                        _ => runs.push((*b, 1)),
                    }
                }
                RuleRepr::Discrete {
                    y_max: membership.len().saturating_sub(1),
                    runs,
                }
            }
            DecisionRule::Continuous {
                boundaries,
                leftmost,
                degenerate,
            } => RuleRepr::Continuous {
                boundaries,
                leftmost,
                degenerate,
            },
        }
    }
}

impl TryFrom<RuleRepr> for DecisionRule {
    type Error = String;

    fn try_from(repr: RuleRepr) -> std::result::Result<Self, String> {
        match repr {
            RuleRepr::Discrete { y_max, runs } => {
                let mut membership = Vec::with_capacity(y_max + 1);
                for (b, n) in runs {
                    membership.extend(std::iter::repeat_n(b, n));
                }
                if membership.len() != y_max + 1 {
                    return Err(format!(
                        "run lengths cover {} counts, expected {}",
                        membership.len(),
                        y_max + 1
                    ));
                }
                Ok(DecisionRule::Discrete { membership })
            }
            RuleRepr::Continuous {
                boundaries,
                leftmost,
                degenerate,
            } => {
                if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err("boundaries must be strictly increasing".into());
                }
                Ok(DecisionRule::Continuous {
                    boundaries,
                    leftmost,
                    degenerate,
                })
            }
        }
    }
}

impl DecisionRule {
    pub fn y_max(&self) -> Option<usize> {
        match self {
            DecisionRule::Discrete { membership } => Some(membership.len() - 1),
            DecisionRule::Continuous { .. } => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, DecisionRule::Continuous { degenerate: true, .. })
    }

    /// Label of a real-valued observation.
    pub fn classify(&self, y: f64) -> Bit {
        match self {
            DecisionRule::Discrete { membership } => {
                if y < 0.0 {
                    return membership[0];
                }
                let k = y.round() as usize;
                membership.get(k).copied().unwrap_or(Bit::One)
            }
            DecisionRule::Continuous {
                boundaries,
                leftmost,
                degenerate,
            } => {
                if *degenerate {
                    return Bit::One;
                }
                let crossed = boundaries.partition_point(|&g| g <= y);
                if crossed % 2 == 0 {
                    *leftmost
                } else {
                    leftmost.flip()
                }
            }
        }
    }

    /// γ such that the rule is Z0 = {0..=γ}, Z1 = everything above; −1 when
    /// every count maps to bit1. `None` for other shapes.
    pub fn single_threshold(&self) -> Option<i64> {
        let DecisionRule::Discrete { membership } = self else {
            return None;
        };
        let zeros = membership.iter().take_while(|&&b| b == Bit::Zero).count();
        if membership[zeros..].iter().all(|&b| b == Bit::One) {
            Some(zeros as i64 - 1)
        } else {
            None
        }
    }

    /// Number of label changes along the count axis.
    pub fn sign_changes(&self) -> usize {
        match self {
            DecisionRule::Discrete { membership } => {
                membership.windows(2).filter(|w| w[0] != w[1]).count()
            }
            DecisionRule::Continuous { boundaries, .. } => boundaries.len(),
        }
    }

    pub(crate) fn in_zero_set(&self, y: usize) -> bool {
        match self {
            DecisionRule::Discrete { membership } => membership.get(y) == Some(&Bit::Zero),
            DecisionRule::Continuous { .. } => self.classify(y as f64) == Bit::Zero,
        }
    }
}

/// Maximum-likelihood label of count `y`.
pub fn detect(y: u64, rule: &DecisionRule) -> Bit {
    match rule {
        DecisionRule::Discrete { membership } => {
            membership.get(y as usize).copied().unwrap_or(Bit::One)
        }
        _ => rule.classify(y as f64),
    }
}

fn label(l0: f64, l1: f64) -> Bit {
    if l0 > l1 + TIE_TOLERANCE {
        Bit::Zero
    } else {
        Bit::One
    }
}

/// Discrete rule from log-likelihoods ln P(y | N0), ln P(y | N1).
pub fn rule_from_log_likelihoods(l0: &[f64], l1: &[f64]) -> Result<DecisionRule> {
    if l0.len() != l1.len() {
        return Err(Error::LengthMismatch {
            what: "likelihood tables",
            left: l0.len(),
            right: l1.len(),
        });
    }
    Ok(DecisionRule::Discrete {
        membership: l0.iter().zip(l1).map(|(&a, &b)| label(a, b)).collect(),
    })
}

/// Boundaries where two Gaussian-mixture likelihoods cross.
pub fn gaussian_rule(f0: &GaussianMixture, f1: &GaussianMixture) -> DecisionRule {
    if f0.same_density(f1) {
        return DecisionRule::Continuous {
            boundaries: Vec::new(),
            leftmost: Bit::One,
            degenerate: true,
        };
    }
    let (lo, hi) = f0.span(f1, 5.0);
    let span = hi - lo;
    let (g0, g1) = (f0.ln_pdf_evaluator(), f1.ln_pdf_evaluator());
    let at = |y: f64| label(g0(y), g1(y));
    let n = GAUSSIAN_SCAN_POINTS;
    let grid = |i: usize| lo + span * i as f64 / (n - 1) as f64;
    let leftmost = at(lo);
    let mut boundaries = Vec::new();
    let mut prev_y = lo;
    let mut prev = leftmost;
    for i in 1..n {
        let y = grid(i);
        let cur = at(y);
        if cur != prev {
            let (mut a, mut b) = (prev_y, y);
            while b - a > 1e-9 * span {
                let m = 0.5 * (a + b);
                if at(m) == prev {
                    a = m;
                } else {
                    b = m;
                }
            }
            boundaries.push(0.5 * (a + b));
        }
        prev = cur;
        prev_y = y;
    }
    DecisionRule::Continuous {
        boundaries,
        leftmost,
        degenerate: false,
    }
}

/// Rule for a no-ISI channel snapshot under any count model.
pub fn rule_for_state(state: &ChannelState, model: CountModel) -> Result<DecisionRule> {
    match model {
        CountModel::Gaussian => {
            if state.p_tx == 0.0 {
                return Ok(DecisionRule::Continuous {
                    boundaries: Vec::new(),
                    leftmost: Bit::One,
                    degenerate: true,
                });
            }
            Ok(gaussian_rule(
                &state.gaussian_mixture(state.low_count)?,
                &state.gaussian_mixture(state.high_count)?,
            ))
        }
        _ => rule_from_log_likelihoods(
            &state.log_likelihood(model, state.low_count),
            &state.log_likelihood(model, state.high_count),
        ),
    }
}

fn discrete_only(model: CountModel) -> Result<()> {
    if model == CountModel::Gaussian {
        return Err(Error::Domain(
            "Gaussian rules are continuous; use build_rule_gaussian".into(),
        ));
    }
    Ok(())
}

/// Membership table over 0..=2·N1 for a known interferer location.
pub fn build_rule_discrete(config: &LinkConfig, model: CountModel, t_r: f64) -> Result<DecisionRule> {
    discrete_only(model)?;
    rule_for_state(&ChannelState::known(config, t_r)?, model)
}

/// Continuous boundaries for the Gaussian approximation.
pub fn build_rule_gaussian(config: &LinkConfig, t_r: f64) -> Result<DecisionRule> {
    rule_for_state(&ChannelState::known(config, t_r)?, CountModel::Gaussian)
}

pub(crate) fn location_bounds(config: &LinkConfig) -> Result<(f64, f64)> {
    config.location_bounds.ok_or_else(|| Error::Config {
        field: "location_bounds".into(),
        msg: "required for the unknown-location scenario".into(),
    })
}

/// Rule comparing likelihoods averaged over an interferer uniformly placed
/// in the configured location bounds.
pub fn build_rule_unknown_location(
    config: &LinkConfig,
    model: CountModel,
    t_r: f64,
    quadrature_nodes: usize,
) -> Result<DecisionRule> {
    let state =
        ChannelState::unknown_location(config, t_r, location_bounds(config)?, quadrature_nodes)?;
    rule_for_state(&state, model)
}

/// Rule for an ISI channel snapshot.
pub fn rule_for_isi_state(state: &IsiState, model: CountModel) -> Result<DecisionRule> {
    match model {
        CountModel::Gaussian => {
            if state.taps_tx[0] == 0.0 {
                return Ok(DecisionRule::Continuous {
                    boundaries: Vec::new(),
                    leftmost: Bit::One,
                    degenerate: true,
                });
            }
            Ok(gaussian_rule(
                &state.gaussian_mixture(state.low_count)?,
                &state.gaussian_mixture(state.high_count)?,
            ))
        }
        _ => rule_from_log_likelihoods(
            &state.log_likelihood(model, state.low_count),
            &state.log_likelihood(model, state.high_count),
        ),
    }
}

/// Rule with ISI memory `config.isi_memory`, averaging over every history of
/// past transmitter bits and current/past interferer bits.
pub fn build_rule_isi(config: &LinkConfig, model: CountModel, t_r: f64) -> Result<DecisionRule> {
    if config.isi_memory > ISI_MEMORY_CAP {
        return Err(Error::EnumerationCap {
            memory: config.isi_memory,
            cap: ISI_MEMORY_CAP,
        });
    }
    if config.isi_memory == 1 && model != CountModel::Gaussian {
        return build_rule_discrete(config, model, t_r);
    }
    rule_for_isi_state(&IsiState::new(config, t_r)?, model)
}
