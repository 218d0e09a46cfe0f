//! Matrix and vector operators for the game: min/max selector matrices, the
//! stacked transition matrix, the occupation diagonal, the max-min Bellman
//! operator, and the switching-system matrices of value iteration and
//! Q-learning.
//!
//! Selector matrices are materialized as dense binary matrices because the
//! comparison systems form products that mix selectors built from different
//! Q vectors. Argmin and argmax ties always resolve to the lowest index, so
//! every trajectory built on top of these operators is reproducible.

use crate::error::{Error, Result};
use crate::game::{occupation_frequency, Dims, GameSpec, Occupation, QTable, SamplingModel};
use crate::linalg::Mat;

/// Binary matrix of shape `(|S||A|) x n` encoding argmin-over-b selection:
/// row `(a, s)` has its single 1 at column `flat(a, argmin_b, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorMin {
    dims: Dims,
    /// Argmin adversary action per `(a, s)` pair row.
    choices: Vec<usize>,
    mat: Mat,
}

impl SelectorMin {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Chosen adversary action for `(s, a)`.
    pub fn choice(&self, s: usize, a: usize) -> usize {
        self.choices[self.dims.pair(a, s)]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    /// Applies the selector to a flat `(a, b, s)` vector, yielding the pair
    /// vector of selected entries. Identical to multiplying by [`Self::matrix`].
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.dims.n(), "selector input length");
        let mut out = vec![0.0; self.dims.num_pairs()];
        self.apply_into(values, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, values: &[f64], out: &mut [f64]) {
        for a in 0..self.dims.num_actions_user {
            for s in 0..self.dims.num_states {
                let pair = self.dims.pair(a, s);
                out[pair] = values[self.dims.flat(a, self.choices[pair], s)];
            }
        }
    }
}

/// Binary matrix of shape `|S| x (|S||A|)` encoding argmax-over-a selection:
/// row `s` has its single 1 at pair column `(argmax_a, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorMax {
    dims: Dims,
    /// Argmax user action per state row.
    choices: Vec<usize>,
    mat: Mat,
}

impl SelectorMax {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn choice(&self, s: usize) -> usize {
        self.choices[s]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    /// Applies the selector to a pair vector, yielding the per-state vector of
    /// selected entries.
    pub fn apply(&self, pair_values: &[f64]) -> Vec<f64> {
        assert_eq!(
            pair_values.len(),
            self.dims.num_pairs(),
            "selector input length"
        );
        let mut out = vec![0.0; self.dims.num_states];
        self.apply_into(pair_values, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, pair_values: &[f64], out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = pair_values[self.dims.pair(self.choices[s], s)];
        }
    }
}

/// Min-selector of `q`: applying it to `q` gives `min_b q(s, a, b)` per pair.
/// Ties resolve to the lowest adversary action.
pub fn min_selector(q: &QTable) -> SelectorMin {
    let dims = q.dims();
    let values = q.values();
    let mut choices = vec![0usize; dims.num_pairs()];
    let mut mat = Mat::zeros(dims.num_pairs(), dims.n());
    for a in 0..dims.num_actions_user {
        for s in 0..dims.num_states {
            let mut best_b = 0;
            let mut best = values[dims.flat(a, 0, s)];
            for b in 1..dims.num_actions_adv {
                let v = values[dims.flat(a, b, s)];
                if v < best {
                    best = v;
                    best_b = b;
                }
            }
            let pair = dims.pair(a, s);
            choices[pair] = best_b;
            mat.set(pair, dims.flat(a, best_b, s), 1.0);
        }
    }
    SelectorMin { dims, choices, mat }
}

/// Max-selector of a pair vector: applying it to the same vector gives
/// `max_a` per state. Ties resolve to the lowest user action.
pub fn max_selector(pair_values: &[f64], dims: Dims) -> Result<SelectorMax> {
    if pair_values.len() != dims.num_pairs() {
        return Err(Error::DimensionMismatch(format!(
            "pair vector has {} entries, expected {}",
            pair_values.len(),
            dims.num_pairs()
        )));
    }
    let mut choices = vec![0usize; dims.num_states];
    let mut mat = Mat::zeros(dims.num_states, dims.num_pairs());
    for (s, choice) in choices.iter_mut().enumerate() {
        let mut best_a = 0;
        let mut best = pair_values[dims.pair(0, s)];
        for a in 1..dims.num_actions_user {
            let v = pair_values[dims.pair(a, s)];
            if v > best {
                best = v;
                best_a = a;
            }
        }
        *choice = best_a;
        mat.set(s, dims.pair(best_a, s), 1.0);
    }
    Ok(SelectorMax { dims, choices, mat })
}

/// `max_a min_b q(s, a, b)` per state, computed through the two selectors.
pub fn maxmin_values(q: &QTable) -> Vec<f64> {
    let gamma_q = min_selector(q);
    let mins = gamma_q.apply(q.values());
    let pi = max_selector(&mins, q.dims()).expect("pair vector built to size");
    pi.apply(&mins)
}

/// Stacked transition matrix of shape `n x |S|`: row `flat(a, b, s)` holds the
/// next-state distribution of `(s, a, b)`.
pub fn stacked_transition(spec: &GameSpec) -> Mat {
    let dims = spec.dims();
    let mut mat = Mat::zeros(dims.n(), dims.num_states);
    for a in 0..dims.num_actions_user {
        for b in 0..dims.num_actions_adv {
            for s in 0..dims.num_states {
                let f = dims.flat(a, b, s);
                for (s_next, &p) in spec.transition_row(s, a, b).iter().enumerate() {
                    mat.set(f, s_next, p);
                }
            }
        }
    }
    mat
}

/// Nonsingular diagonal matrix of occupation frequencies in flat order.
pub fn occupation_matrix(model: &SamplingModel) -> Result<Mat> {
    let occ = occupation_frequency(model)?;
    Ok(occupation_matrix_from(&occ, model.dims()))
}

pub fn occupation_matrix_from(occ: &Occupation, dims: Dims) -> Mat {
    let mut mat = Mat::zeros(dims.n(), dims.n());
    for (i, &d) in occ.d.iter().enumerate() {
        mat.set(i, i, d);
    }
    mat
}

/// One application of the max-min Bellman operator:
/// `(FQ)(s,a,b) = R(s,a,b) + gamma * sum_s' P(s'|s,a,b) max_a' min_b' Q(s',a',b')`.
pub fn bellman_operator(q: &QTable, spec: &GameSpec) -> Result<QTable> {
    let dims = spec.dims();
    if q.dims() != dims {
        return Err(Error::DimensionMismatch(
            "Q-table dimensions do not match the game".into(),
        ));
    }
    let mm = maxmin_values(q);
    let gamma = spec.discount();
    let mut out = QTable::zeros(dims);
    {
        let values = out.values_mut();
        for a in 0..dims.num_actions_user {
            for b in 0..dims.num_actions_adv {
                for s in 0..dims.num_states {
                    let f = dims.flat(a, b, s);
                    let row = spec.transition_row(s, a, b);
                    let mut exp_next = 0.0;
                    for (&p, &v) in row.iter().zip(&mm) {
                        exp_next += p * v;
                    }
                    values[f] = spec.rewards()[f] + gamma * exp_next;
                }
            }
        }
    }
    Ok(out)
}

/// Which recursion a switching-system matrix pair describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    ValueIteration,
    QLearning,
}

/// System matrix and affine offset of one switching mode, selected by the
/// Q vector that built it.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub a: Mat,
    pub b_affine: Vec<f64>,
    pub kind: SystemKind,
}

/// Dense product `P Pi Gamma`, the state-action transition matrix under the
/// greedy policy pair encoded by the selectors.
pub fn policy_transition_matrix(spec: &GameSpec, pi: &SelectorMax, gamma_sel: &SelectorMin) -> Mat {
    stacked_transition(spec)
        .matmul(pi.matrix())
        .matmul(gamma_sel.matrix())
}

/// Value-iteration mode matrices at `q`:
/// `A = gamma P Pi Gamma` and the affine term that vanishes when the greedy
/// selectors of `q` and `q_star` coincide. The identity
/// `F q - q_star = A (q - q_star) + b_affine` holds exactly.
pub fn vi_system_matrices(q: &QTable, q_star: &QTable, spec: &GameSpec) -> Result<SystemMatrices> {
    let dims = spec.dims();
    if q.dims() != dims || q_star.dims() != dims {
        return Err(Error::DimensionMismatch(
            "Q-table dimensions do not match the game".into(),
        ));
    }
    let gamma = spec.discount();
    let gamma_q = min_selector(q);
    let pi_q = max_selector(&gamma_q.apply(q.values()), dims)?;
    let mut a = policy_transition_matrix(spec, &pi_q, &gamma_q);
    scale_in_place(&mut a, gamma);

    let b_affine = affine_term(spec, q_star, &pi_q, &gamma_q, gamma);
    Ok(SystemMatrices {
        a,
        b_affine,
        kind: SystemKind::ValueIteration,
    })
}

/// Q-learning mode matrices at `q`:
/// `A = I + alpha (gamma D P Pi Gamma - D)` and the occupation-scaled affine
/// term. Requires a constant step-size in (0, 1).
pub fn ql_system_matrices(
    q: &QTable,
    q_star: &QTable,
    spec: &GameSpec,
    model: &SamplingModel,
    alpha: f64,
) -> Result<SystemMatrices> {
    check_alpha(alpha)?;
    let dims = spec.dims();
    if q.dims() != dims || q_star.dims() != dims {
        return Err(Error::DimensionMismatch(
            "Q-table dimensions do not match the game".into(),
        ));
    }
    let occ = occupation_frequency(model)?;
    let gamma = spec.discount();
    let gamma_q = min_selector(q);
    let pi_q = max_selector(&gamma_q.apply(q.values()), dims)?;
    let p_pi_gamma = policy_transition_matrix(spec, &pi_q, &gamma_q);

    let a = ql_mode_matrix(&p_pi_gamma, &occ.d, alpha, gamma);
    let mut b_affine = affine_term(spec, q_star, &pi_q, &gamma_q, gamma);
    for (x, &d) in b_affine.iter_mut().zip(&occ.d) {
        *x *= alpha * d;
    }
    Ok(SystemMatrices {
        a,
        b_affine,
        kind: SystemKind::QLearning,
    })
}

/// Maximum absolute row sum.
pub fn infinity_norm(m: &Mat) -> f64 {
    m.inf_norm()
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("step-size {alpha} must lie in (0, 1)"),
        });
    }
    Ok(())
}

/// `I + alpha (gamma D M - D)` for a row-stochastic `M`.
pub(crate) fn ql_mode_matrix(p_pi_gamma: &Mat, d: &[f64], alpha: f64, gamma: f64) -> Mat {
    let n = d.len();
    let mut a = Mat::zeros(n, n);
    for (i, &di) in d.iter().enumerate() {
        for j in 0..n {
            let mut v = alpha * gamma * di * p_pi_gamma.get(i, j);
            if i == j {
                v += 1.0 - alpha * di;
            }
            a.set(i, j, v);
        }
    }
    a
}

/// `gamma P (Pi_q Gamma_q - Pi_* Gamma_*) q_star` without occupation scaling.
fn affine_term(
    spec: &GameSpec,
    q_star: &QTable,
    pi_q: &SelectorMax,
    gamma_q: &SelectorMin,
    gamma: f64,
) -> Vec<f64> {
    let greedy_on_qstar = pi_q.apply(&gamma_q.apply(q_star.values()));
    let optimal_on_qstar = maxmin_values(q_star);
    let diff: Vec<f64> = greedy_on_qstar
        .iter()
        .zip(&optimal_on_qstar)
        .map(|(x, y)| x - y)
        .collect();
    let mut out = transition_expectation(spec, &diff);
    for x in &mut out {
        *x *= gamma;
    }
    out
}

/// `P v` for a per-state vector `v`, evaluated row by row from the stored
/// transition tensor.
pub(crate) fn transition_expectation(spec: &GameSpec, v: &[f64]) -> Vec<f64> {
    let dims = spec.dims();
    let mut out = vec![0.0; dims.n()];
    for a in 0..dims.num_actions_user {
        for b in 0..dims.num_actions_adv {
            for s in 0..dims.num_states {
                let row = spec.transition_row(s, a, b);
                let mut acc = 0.0;
                for (&p, &x) in row.iter().zip(v) {
                    acc += p * x;
                }
                out[dims.flat(a, b, s)] = acc;
            }
        }
    }
    out
}

fn scale_in_place(m: &mut Mat, c: f64) {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            m.set(i, j, c * m.get(i, j));
        }
    }
}
