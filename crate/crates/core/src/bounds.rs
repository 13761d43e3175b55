//! Closed-form constants and the convergence-rate upper bound.
//!
//! Everything here is a pure formula of the ensemble and run parameters:
//! the irreducibility-window constants, the gating threshold, the
//! contraction factor `lambda` (kept in log space because `1 - lambda`
//! underflows already at small `n`), the step-sum factor `Gamma`, and the
//! rate bound on the optimality gap of the averaged iterate.

use thiserror::Error;

use crate::graph::GraphEnsemble;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("gamma must lie strictly between 0.5 and 1, got {0}")]
    GammaOutOfRange(f64),
    #[error("constants require at least 2 nodes, got n = {0}")]
    TooFewNodes(usize),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("vector length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Lipschitz sum must be finite and non-negative, got {0}")]
    BadLipschitz(f64),
}

/// Step-size exponent, validated to the open interval (0.5, 1).
///
/// The step size is `alpha(t) = 1 / t^gamma`; the interval is exactly
/// where the steps are non-summable but square-summable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gamma(f64);

impl Gamma {
    pub fn new(value: f64) -> Result<Self, BoundsError> {
        if value.is_finite() && value > 0.5 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(BoundsError::GammaOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 + 1/(2*gamma - 1)`, the bound on `sum alpha^2(t)`.
    pub fn step_square_sum_factor(self) -> f64 {
        1.0 + 1.0 / (2.0 * self.0 - 1.0)
    }
}

/// `Gamma(t) = (1 - gamma) / ((t + 2)^(1 - gamma) - 1)`.
///
/// Positive and strictly decreasing in `t`; the rate bound is this factor
/// times a constant of the problem.
pub fn gamma_factor(t: u64, gamma: Gamma) -> f64 {
    let g = gamma.value();
    (1.0 - g) / ((t as f64 + 2.0).powf(1.0 - g) - 1.0)
}

/// `((t + 2)^(1 - gamma) - 1) / (1 - gamma)`, a lower bound on the step
/// sum `sum_{k=0..t} alpha(k + 1)`. Exact reciprocal of [`gamma_factor`].
pub fn step_sum_lower_bound(t: u64, gamma: Gamma) -> f64 {
    let g = gamma.value();
    ((t as f64 + 2.0).powf(1.0 - g) - 1.0) / (1.0 - g)
}

/// Closed-form constants of an ensemble, with the contraction factor kept
/// in log space.
///
/// For `n` nodes and smallest positive sampling probability `q`:
///
/// * `window`  — `B = 2n - 2`, the product length that is irreducible
///   with probability at least `p`;
/// * `p`       — `q^B`;
/// * `delta`   — `n^(-2n)`, the send-gating threshold;
/// * `c1`      — `p^2 / (4B)`, the exponent rate of the tail bound;
/// * `lambda`  — `(1 - n^(-4nB/p))^(p/(2nB))`, stored as `ln_lambda` and
///   `ln_one_minus_lambda` because `1 - lambda` underflows in direct
///   arithmetic for every interesting ensemble.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BoundConstants {
    pub n: usize,
    /// Window length `B = 2n - 2`.
    pub window: usize,
    /// `(min positive sampling probability)^B`.
    pub p: f64,
    /// Gating threshold `n^(-2n)`.
    pub delta: f64,
    /// Tail exponent rate `p^2 / (4B)`.
    pub c1: f64,
    /// `ln(lambda)`, `lambda` the contraction factor in (0, 1).
    pub ln_lambda: f64,
    /// `ln(1 - lambda)`; finite and negative whenever `lambda` is in (0, 1).
    pub ln_one_minus_lambda: f64,
}

impl BoundConstants {
    pub fn from_ensemble(e: &GraphEnsemble) -> Result<Self, BoundsError> {
        Self::from_parts(e.n(), e.min_positive_prob())
    }

    /// Constants for node count `n` and smallest positive graph probability.
    pub fn from_parts(n: usize, min_positive_prob: f64) -> Result<Self, BoundsError> {
        if n < 2 {
            return Err(BoundsError::TooFewNodes(n));
        }
        let window = 2 * n - 2;
        let nf = n as f64;
        let bf = window as f64;
        let p = min_positive_prob.powi(window as i32);
        let delta = nf.powi(-(2 * n as i32));
        let c1 = p * p / (4.0 * bf);

        // lambda = (1 - x)^c with x = n^(-4nB/p), c = p / (2nB).
        let c = p / (2.0 * nf * bf);
        let ln_x = -(4.0 * nf * bf / p) * nf.ln();
        let (ln_lambda, ln_one_minus_lambda) = if ln_x > -700.0 {
            // x is representable: evaluate exactly via ln1p / expm1.
            let x = ln_x.exp();
            let ln_lambda = c * (-x).ln_1p();
            let one_minus = -ln_lambda.exp_m1();
            (ln_lambda, one_minus.ln())
        } else {
            // x underflows; to first order 1 - lambda = c * x, and the
            // relative error of the expansion is O(x), far below f64.
            let ln_one_minus = c.ln() + ln_x;
            (-ln_one_minus.exp(), ln_one_minus)
        };

        Ok(Self {
            n,
            window,
            p,
            delta,
            c1,
            ln_lambda,
            ln_one_minus_lambda,
        })
    }

    /// `lambda` in direct arithmetic; rounds to exactly 1.0 once
    /// `1 - lambda` is below machine epsilon. Use the log fields for math.
    pub fn lambda(&self) -> f64 {
        self.ln_lambda.exp()
    }

    /// `1 - lambda` in direct arithmetic; may underflow to 0.0.
    pub fn one_minus_lambda(&self) -> f64 {
        self.ln_one_minus_lambda.exp()
    }

    /// Log-space check that `lambda` lies strictly inside (0, 1).
    pub fn lambda_in_unit_interval(&self) -> bool {
        self.ln_one_minus_lambda.is_finite() && self.ln_one_minus_lambda < 0.0
    }
}

/// Inputs of the rate bound for one experiment.
#[derive(Clone, Debug)]
pub struct RateBoundInputs {
    pub n: usize,
    pub d: usize,
    pub gamma: Gamma,
    /// Sum of the per-node Lipschitz constants.
    pub lipschitz_sum: f64,
    /// Mean initial state over nodes.
    pub x_bar0: Vec<f64>,
    /// Optimizer the gap is measured against.
    pub z_star: Vec<f64>,
    /// `sum_j ||x_j(0)||_1`.
    pub initial_l1_sum: f64,
    pub constants: BoundConstants,
}

impl RateBoundInputs {
    pub fn new(
        gamma: Gamma,
        lipschitz_sum: f64,
        x_bar0: Vec<f64>,
        z_star: Vec<f64>,
        initial_l1_sum: f64,
        constants: BoundConstants,
    ) -> Result<Self, BoundsError> {
        let d = x_bar0.len();
        if d == 0 {
            return Err(BoundsError::ZeroDimension);
        }
        if z_star.len() != d {
            return Err(BoundsError::DimensionMismatch {
                expected: d,
                found: z_star.len(),
            });
        }
        if !lipschitz_sum.is_finite() || lipschitz_sum < 0.0 {
            return Err(BoundsError::BadLipschitz(lipschitz_sum));
        }
        Ok(Self {
            n: constants.n,
            d,
            gamma,
            lipschitz_sum,
            x_bar0,
            z_star,
            initial_l1_sum,
            constants,
        })
    }

    /// Assemble from the per-node initial states.
    pub fn from_initial_states(
        gamma: Gamma,
        lipschitz_sum: f64,
        x0: &[Vec<f64>],
        z_star: Vec<f64>,
        constants: BoundConstants,
    ) -> Result<Self, BoundsError> {
        let d = x0.first().map(|v| v.len()).unwrap_or(0);
        let mut x_bar0 = vec![0.0; d];
        let mut initial_l1_sum = 0.0;
        for xj in x0 {
            if xj.len() != d {
                return Err(BoundsError::DimensionMismatch {
                    expected: d,
                    found: xj.len(),
                });
            }
            for (acc, v) in x_bar0.iter_mut().zip(xj) {
                *acc += v;
            }
            initial_l1_sum += xj.iter().map(|v| v.abs()).sum::<f64>();
        }
        for acc in &mut x_bar0 {
            *acc /= x0.len() as f64;
        }
        Self::new(
            gamma,
            lipschitz_sum,
            x_bar0,
            z_star,
            initial_l1_sum,
            constants,
        )
    }
}

/// Upper bound on the expected optimality gap of the averaged iterate at
/// round `t + 1`:
///
/// `Gamma(t) * [ n*||xbar(0) - z*||_1 / 2
///             + (1 + 1/(2*gamma - 1)) * L^2 / (2n)
///             + 60 * L * sum_j ||x_j(0)||_1 / (delta * (1 - lambda))
///             + 60 * d * L^2 * (1 + 1/(2*gamma - 1)) / (delta * (1 - lambda)) ]`
///
/// The `1/(delta*(1-lambda))` terms are evaluated in log space; when they
/// exceed f64 range the result is `+inf`, which is still a valid (vacuous)
/// upper bound. Degenerate inputs (`L = 0` and the mean start at the
/// optimizer) give exactly 0.
pub fn averaged_gap_bound(inputs: &RateBoundInputs, t: u64) -> f64 {
    let n = inputs.n as f64;
    let d = inputs.d as f64;
    let l = inputs.lipschitz_sum;
    let sq = inputs.gamma.step_square_sum_factor();
    let ln_delta = inputs.constants.delta.ln();
    let ln_one_minus = inputs.constants.ln_one_minus_lambda;

    let dist1: f64 = inputs
        .x_bar0
        .iter()
        .zip(&inputs.z_star)
        .map(|(a, b)| (a - b).abs())
        .sum();

    let term1 = n * dist1 / 2.0;
    let term2 = if l == 0.0 {
        0.0
    } else {
        sq * l * l / (2.0 * n)
    };
    let term3 = if l == 0.0 || inputs.initial_l1_sum == 0.0 {
        0.0
    } else {
        ((60.0 * l * inputs.initial_l1_sum).ln() - ln_delta - ln_one_minus).exp()
    };
    let term4 = if l == 0.0 {
        0.0
    } else {
        ((60.0 * d * l * l * sq).ln() - ln_delta - ln_one_minus).exp()
    };

    gamma_factor(t, inputs.gamma) * (term1 + term2 + term3 + term4)
}
