//! Q-value iteration: reference solves of the max-min fixed point, greedy
//! policy extraction, and the per-step sandwich check that brackets each
//! iterate between two mode-matrix images of the current error.

use crate::error::{Error, Result};
use crate::game::{GameSpec, QTable};
use crate::linalg::max_abs_diff;
use crate::operators::{bellman_operator, max_selector, min_selector, transition_expectation};

/// Elementwise tolerance for the exact sandwich inequalities.
pub const SANDWICH_TOL: f64 = 1e-12;

/// Outcome of a reference solve.
#[derive(Debug, Clone)]
pub struct ViResult {
    pub q_star: QTable,
    /// Number of operator applications performed.
    pub iterations: usize,
    /// Final successive difference, the operator residual at exit.
    pub residual: f64,
    /// Upper bound on the distance of `q_star` to the true fixed point:
    /// `residual * gamma / (1 - gamma)`.
    pub error_certificate: f64,
}

/// One value-iteration step.
pub fn qvi_step(q: &QTable, spec: &GameSpec) -> Result<QTable> {
    bellman_operator(q, spec)
}

/// Iterates the max-min operator from the zero table until the successive
/// difference certifies an error below `tol`. Deterministic; the contraction
/// makes the iteration cap unreachable for valid games.
pub fn solve_optimal_q(spec: &GameSpec, tol: f64) -> Result<ViResult> {
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("tolerance {tol} must be positive"),
        });
    }
    let gamma = spec.discount();
    let mut q = QTable::zeros(spec.dims());
    if gamma == 0.0 {
        // F is constant: one step lands exactly on the fixed point.
        let q_star = qvi_step(&q, spec)?;
        let residual = max_abs_diff(q_star.values(), q.values());
        return Ok(ViResult {
            q_star,
            iterations: 1,
            residual,
            error_certificate: 0.0,
        });
    }
    let threshold = tol * (1.0 - gamma) / gamma;
    let cap_f = (tol * (1.0 - gamma)).ln() / gamma.ln();
    let cap = 10 * cap_f.ceil().max(1.0) as usize + 10;
    for iterations in 1..=cap {
        let next = qvi_step(&q, spec)?;
        let residual = max_abs_diff(next.values(), q.values());
        if residual <= threshold {
            return Ok(ViResult {
                q_star: next,
                iterations,
                residual,
                error_certificate: residual * gamma / (1.0 - gamma),
            });
        }
        q = next;
    }
    Err(Error::NonConvergence { cap })
}

/// Greedy deterministic policies extracted from a Q table: the user plays the
/// max-min action, the adversary plays the min action given the user's move.
/// Ties resolve to the lowest index.
#[derive(Debug, Clone)]
pub struct GreedyPolicies {
    dims: crate::game::Dims,
    pi: Vec<usize>,
    mu: Vec<usize>,
}

impl GreedyPolicies {
    pub fn user_action(&self, s: usize) -> usize {
        self.pi[s]
    }

    pub fn adversary_action(&self, s: usize, a: usize) -> usize {
        self.mu[self.dims.pair(a, s)]
    }
}

pub fn greedy_policies(q: &QTable) -> GreedyPolicies {
    let dims = q.dims();
    let gamma_q = min_selector(q);
    let pi_q = max_selector(&gamma_q.apply(q.values()), dims).expect("pair vector built to size");
    GreedyPolicies {
        dims,
        pi: pi_q.choices().to_vec(),
        mu: gamma_q.choices().to_vec(),
    }
}

/// The two bracketing vectors for one value-iteration step and whether
/// `lower <= F q_k - q_star <= upper` holds elementwise.
#[derive(Debug, Clone)]
pub struct SandwichCheck {
    pub lower: QTable,
    pub upper: QTable,
    pub holds: bool,
}

/// Lower bound uses the selectors of `q_k` applied around `q_star`; upper
/// bound uses the selectors of `q_star` applied around `q_k`.
pub fn vi_sandwich_check(q_k: &QTable, q_star: &QTable, spec: &GameSpec) -> Result<SandwichCheck> {
    let dims = spec.dims();
    if q_k.dims() != dims || q_star.dims() != dims {
        return Err(Error::DimensionMismatch(
            "Q-table dimensions do not match the game".into(),
        ));
    }
    let gamma = spec.discount();
    let diff = q_k.sub(q_star);

    // lower: gamma P Pi_{Gamma_{q_k} q_star} Gamma_{q_k} (q_k - q_star)
    let gamma_k = min_selector(q_k);
    let pi_lower = max_selector(&gamma_k.apply(q_star.values()), dims)?;
    let lower_state = pi_lower.apply(&gamma_k.apply(diff.values()));
    let lower: Vec<f64> = transition_expectation(spec, &lower_state)
        .into_iter()
        .map(|x| gamma * x)
        .collect();

    // upper: gamma P Pi_{Gamma_{q_star} q_k} Gamma_{q_star} (q_k - q_star)
    let gamma_star = min_selector(q_star);
    let pi_upper = max_selector(&gamma_star.apply(q_k.values()), dims)?;
    let upper_state = pi_upper.apply(&gamma_star.apply(diff.values()));
    let upper: Vec<f64> = transition_expectation(spec, &upper_state)
        .into_iter()
        .map(|x| gamma * x)
        .collect();

    let step = bellman_operator(q_k, spec)?;
    let mid = step.sub(q_star);
    let holds = mid
        .values()
        .iter()
        .zip(lower.iter().zip(&upper))
        .all(|(&m, (&lo, &up))| lo <= m + SANDWICH_TOL && m <= up + SANDWICH_TOL);

    Ok(SandwichCheck {
        lower: QTable::from_values(dims, lower)?,
        upper: QTable::from_values(dims, upper)?,
        holds,
    })
}
