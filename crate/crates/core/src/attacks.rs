//! Probabilistic false-data-injection model on the sensor-to-controller
//! channel and the run-length machinery that sizes the control buffer.
//!
//! At each step an attack is triggered with probability `ā`; a triggered
//! attack adds `W_a a` to the measurement with `a_i ~ N(µ, σ²)` drawn per
//! coordinate. An attack is *over threshold* when its weighted magnitude
//! `‖W_a a‖₂ / ‖W_a‖_F` exceeds `A_th`. The buffer must outlast every run of
//! consecutive over-threshold attacks except with probability below `α`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use libm::erfc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveStd(f64),
    #[error("threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),
    #[error("probability {name} = {value} outside {range}")]
    Probability {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("run length {b} must lie in 1..={n}")]
    RunLength { b: usize, n: usize },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("every attack is over threshold, no finite buffer exists")]
    CertainAttack,
    #[error("no buffer length up to {0} reaches the significance level")]
    NoBufferLength(usize),
    #[error("attack weight must be square, got {0}x{1}")]
    Weight(usize, usize),
}

/// `P(|a| > A_th)` for `a ~ N(µ, σ²)`.
pub fn over_threshold_prob(mu: f64, sigma: f64, threshold: f64) -> Result<f64, AttackError> {
    if !(sigma > 0.0) {
        return Err(AttackError::NonPositiveStd(sigma));
    }
    if !(threshold >= 0.0) {
        return Err(AttackError::NegativeThreshold(threshold));
    }
    let s = sigma * std::f64::consts::SQRT_2;
    let upper = 0.5 * erfc((threshold - mu) / s);
    let lower = 0.5 * erfc((threshold + mu) / s);
    Ok((upper + lower).min(1.0))
}

fn check_prob(name: &'static str, value: f64) -> Result<(), AttackError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AttackError::Probability {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

/// Probability that `n` Bernoulli(`p`) trials contain a run of at least `b`
/// consecutive successes.
///
/// Uses `P_n = pᵇ (1 + (1−p) Σ_{k=2}^{n−b+1} (1 − P_{k−2}))` with `P_j = 0`
/// for `j < b`, evaluated with a running prefix sum.
pub fn run_probability(p: f64, n: usize, b: usize) -> Result<f64, AttackError> {
    check_prob("p", p)?;
    if b == 0 || b > n {
        return Err(AttackError::RunLength { b, n });
    }
    Ok(run_probability_table(p, n, b)[n])
}

/// `P_j` for `j = 0..=n`.
fn run_probability_table(p: f64, n: usize, b: usize) -> Vec<f64> {
    let pb = p.powi(b as i32);
    let mut table = vec![0.0; n + 1];
    // prefix[t] = Σ_{i<t} (1 − P_i)
    let mut prefix = vec![0.0; n + 2];
    for j in 0..=n {
        if j >= b {
            table[j] = (pb * (1.0 + (1.0 - p) * prefix[j - b])).min(1.0);
        }
        prefix[j + 1] = prefix[j] + (1.0 - table[j]);
    }
    table
}

/// Smallest `b ∈ 1..=n` with `run_probability(p, n, b) < alpha`.
pub fn buffer_length(p: f64, n: usize, alpha: f64) -> Result<usize, AttackError> {
    check_prob("p", p)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AttackError::Probability {
            name: "alpha",
            value: alpha,
            range: "(0, 1)",
        });
    }
    if n == 0 {
        return Err(AttackError::EmptyHorizon);
    }
    if p >= 1.0 {
        return Err(AttackError::CertainAttack);
    }
    (1..=n)
        .find(|&b| run_probability_table(p, n, b)[n] < alpha)
        .ok_or(AttackError::NoBufferLength(n))
}

/// Statistical description of the attacker.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackModel {
    /// Per-step trigger probability `ā`.
    pub trigger_mean: f64,
    pub amp_mean: f64,
    pub amp_std: f64,
    /// Tolerable weighted amplitude `A_th`.
    pub threshold: f64,
    /// Significance level `α` for the buffer length.
    pub significance: f64,
    /// Number of steps the run-length bound must cover.
    pub horizon: usize,
    /// Per-state weighting `W_a` (square, state dimension).
    pub weight: DMatrix<f64>,
}

impl AttackModel {
    pub fn validate(&self) -> Result<(), AttackError> {
        check_prob("trigger_mean", self.trigger_mean)?;
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(AttackError::Probability {
                name: "significance",
                value: self.significance,
                range: "(0, 1)",
            });
        }
        if !(self.amp_std > 0.0) {
            return Err(AttackError::NonPositiveStd(self.amp_std));
        }
        if !(self.threshold >= 0.0) {
            return Err(AttackError::NegativeThreshold(self.threshold));
        }
        if self.horizon == 0 {
            return Err(AttackError::EmptyHorizon);
        }
        if !self.weight.is_square() {
            return Err(AttackError::Weight(self.weight.nrows(), self.weight.ncols()));
        }
        Ok(())
    }

    /// `ζ`: probability that a triggered scalar attack exceeds the threshold.
    pub fn zeta(&self) -> Result<f64, AttackError> {
        over_threshold_prob(self.amp_mean, self.amp_std, self.threshold)
    }

    /// `āζ`: per-step probability of a triggered over-threshold attack.
    pub fn joint_prob(&self) -> Result<f64, AttackError> {
        Ok(self.trigger_mean * self.zeta()?)
    }

    /// Buffer length `λ` for this model.
    pub fn buffer_length(&self) -> Result<usize, AttackError> {
        self.validate()?;
        buffer_length(self.joint_prob()?, self.horizon, self.significance)
    }

    /// Weighted magnitude `‖W_a a‖₂ / ‖W_a‖_F` of an injected vector `W_a a`.
    pub fn weighted_magnitude(&self, injected: &DVector<f64>) -> f64 {
        let f = self.weight.norm();
        if f == 0.0 {
            0.0
        } else {
            injected.norm() / f
        }
    }
}

/// One step of an attack realization.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackStep {
    pub triggered: bool,
    /// Injected measurement offset `W_a a`; zero unless triggered.
    pub amplitude: DVector<f64>,
    pub over_threshold: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackTrace {
    pub steps: Vec<AttackStep>,
}

impl AttackTrace {
    /// A trace with no attacks.
    pub fn quiet(dim: usize, len: usize) -> Self {
        Self {
            steps: vec![
                AttackStep {
                    triggered: false,
                    amplitude: DVector::zeros(dim),
                    over_threshold: false,
                };
                len
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Longest run of consecutive over-threshold steps.
    pub fn longest_over_threshold_run(&self) -> usize {
        let mut best = 0;
        let mut cur = 0;
        for s in &self.steps {
            if s.over_threshold {
                cur += 1;
                best = best.max(cur);
            } else {
                cur = 0;
            }
        }
        best
    }
}

/// Draw `len` steps of attacks; the same seed gives the same trace.
pub fn sample_attack_trace(
    model: &AttackModel,
    len: usize,
    seed: u64,
) -> Result<AttackTrace, AttackError> {
    model.validate()?;
    let dim = model.weight.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trigger = Bernoulli::new(model.trigger_mean).expect("validated probability");
    let amp = Normal::new(model.amp_mean, model.amp_std).expect("validated deviation");
    let mut steps = Vec::with_capacity(len);
    for _ in 0..len {
        let triggered = trigger.sample(&mut rng);
        // draw amplitudes every step so the stream does not depend on triggers
        let raw = DVector::from_fn(dim, |_, _| amp.sample(&mut rng));
        if triggered {
            let amplitude = &model.weight * raw;
            let over_threshold = model.weighted_magnitude(&amplitude) > model.threshold;
            steps.push(AttackStep {
                triggered,
                amplitude,
                over_threshold,
            });
        } else {
            steps.push(AttackStep {
                triggered,
                amplitude: DVector::zeros(dim),
                over_threshold: false,
            });
        }
    }
    Ok(AttackTrace { steps })
}
