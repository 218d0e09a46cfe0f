//! Lockstep simulation of five coupled recursions driven by one noise
//! process: the learning system itself, switching lower/upper comparison
//! systems whose trajectories bracket it elementwise, and the fixed-matrix
//! systems that bracket those in turn. Also the error-system algebra whose
//! recursion cancels the shared noise exactly.
//!
//! Comparison-system states are kept as differences from the fixed point,
//! matching the recursions they satisfy; snapshots convert back to absolute
//! tables for reporting.

use crate::error::{Error, Result};
use crate::game::{occupation_frequency, GameSpec, Occupation, QTable, SamplingModel};
use crate::linalg::{max_abs_diff, vec_inf_norm, vec_two_norm, Mat};
use crate::operators::{
    check_alpha, max_selector, maxmin_values, min_selector, ql_mode_matrix, stacked_transition,
    transition_expectation, SelectorMin,
};
use crate::q_learning::{
    expected_update_drift, noise_from_drift, sample_experience, LearnerState, SnapshotStride,
};
use crate::value_iteration::solve_optimal_q;

/// Elementwise tolerance for path-wise ordering checks; absorbs float
/// accumulation over long runs.
pub const ORDERING_TOL: f64 = 1e-9;

/// Tolerance for the exact algebraic recursion identities.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Which comparison system an error-system matrix pair belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSide {
    Lower,
    Upper,
}

/// Mode matrices of the noise-free error recursion
/// `e_{k+1} = A_mode e_k + B_mode x_k`, where `e` is the gap between a
/// switching comparison system and its fixed-matrix companion and `x` is the
/// companion's own error.
#[derive(Debug, Clone)]
pub struct ErrorSystemMatrices {
    pub a_mode: Mat,
    pub b_mode: Mat,
    pub side: ErrorSide,
}

/// Options for a coupled run.
#[derive(Debug, Clone, Copy)]
pub struct CoupledOptions {
    pub snapshot_stride: SnapshotStride,
    pub ordering_tol: f64,
    pub identity_tol: f64,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions {
            snapshot_stride: SnapshotStride::DefaultRule,
            ordering_tol: ORDERING_TOL,
            identity_tol: IDENTITY_TOL,
        }
    }
}

/// Error norms of all five systems against the fixed point at one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepNorms {
    pub orig_inf: f64,
    pub orig_two: f64,
    pub low_inf: f64,
    pub low_two: f64,
    pub up_inf: f64,
    pub up_two: f64,
    pub lu_inf: f64,
    pub lu_two: f64,
    pub ul_inf: f64,
    pub ul_two: f64,
}

/// Absolute iterates of the five systems at one recorded step, plus the
/// shared noise vector used to leave this step (absent on the final record).
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub step: u64,
    pub q: QTable,
    pub q_low: QTable,
    pub q_up: QTable,
    pub q_lu: QTable,
    pub q_ul: QTable,
    pub noise: Option<Vec<f64>>,
}

/// A finished coupled run.
#[derive(Debug, Clone)]
pub struct CoupledTrajectory {
    pub steps: usize,
    pub q_star: QTable,
    /// One entry per step index `0..=steps`.
    pub norms: Vec<StepNorms>,
    /// Elementwise ordering violations counted per step index.
    pub ordering_violations: Vec<u32>,
    pub total_ordering_violations: u64,
    pub snapshots: Vec<CoupledState>,
    /// Largest gap between the single-entry update and its vector form.
    pub max_recon_residual: f64,
    /// Largest residual of the noise-free error recursions, both sides.
    pub max_error_identity_residual: f64,
    pub max_mode_a_norm: f64,
    pub max_mode_b_norm: f64,
    /// Largest `||q_k||_inf` along the learning trajectory.
    pub max_q_inf: f64,
    pub rho: f64,
    /// `2 alpha gamma d_max`, the bound every `B_mode` norm must respect.
    pub b_norm_bound: f64,
}

/// Precomputed fixed objects shared by every step of a coupled run: the
/// fixed point, its two greedy selectors, the stacked transition matrix, and
/// the fixed-matrix recursion built from them.
#[derive(Debug, Clone)]
pub struct CoupledContext {
    spec: GameSpec,
    model: SamplingModel,
    occ: Occupation,
    alpha: f64,
    q_star: QTable,
    gamma_star: SelectorMin,
    p: Mat,
    /// `P Pi_star`, reused by every lower-side mode matrix.
    p_pi_star: Mat,
    /// `P Pi_star Gamma_star`, the fixed policy transition matrix.
    m_star: Mat,
    a_fixed: Mat,
    maxmin_star: Vec<f64>,
    rho: f64,
    b_norm_bound: f64,
}

impl CoupledContext {
    pub fn new(
        spec: &GameSpec,
        model: &SamplingModel,
        alpha: f64,
        q_star: QTable,
    ) -> Result<CoupledContext> {
        check_alpha(alpha)?;
        let dims = spec.dims();
        if model.dims() != dims || q_star.dims() != dims {
            return Err(Error::DimensionMismatch(
                "game, model, and fixed point must agree".into(),
            ));
        }
        let occ = occupation_frequency(model)?;
        let gamma = spec.discount();
        let gamma_star = min_selector(&q_star);
        let star_pairs = gamma_star.apply(q_star.values());
        let pi_star = max_selector(&star_pairs, dims)?;
        let maxmin_star = pi_star.apply(&star_pairs);
        let p = stacked_transition(spec);
        let p_pi_star = p.matmul(pi_star.matrix());
        let m_star = p_pi_star.matmul(gamma_star.matrix());
        let a_fixed = ql_mode_matrix(&m_star, &occ.d, alpha, gamma);
        let rho = 1.0 - alpha * occ.d_min * (1.0 - gamma);
        let b_norm_bound = 2.0 * alpha * gamma * occ.d_max;
        Ok(CoupledContext {
            spec: spec.clone(),
            model: model.clone(),
            occ,
            alpha,
            q_star,
            gamma_star,
            p,
            p_pi_star,
            m_star,
            a_fixed,
            maxmin_star,
            rho,
            b_norm_bound,
        })
    }

    /// Builds the context from a fresh reference solve at `tol`.
    pub fn solve(
        spec: &GameSpec,
        model: &SamplingModel,
        alpha: f64,
        tol: f64,
    ) -> Result<CoupledContext> {
        let q_star = solve_optimal_q(spec, tol)?.q_star;
        CoupledContext::new(spec, model, alpha, q_star)
    }

    pub fn q_star(&self) -> &QTable {
        &self.q_star
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn b_norm_bound(&self) -> f64 {
        self.b_norm_bound
    }

    pub fn fixed_matrix(&self) -> &Mat {
        &self.a_fixed
    }

    pub fn occupation(&self) -> &Occupation {
        &self.occ
    }

    /// Mode matrix of the requested side at the difference vector `x_mode`.
    /// Lower side: selectors `(Pi_star, Gamma_{x_mode})`; upper side:
    /// selectors `(Pi_{Gamma_star x_mode}, Gamma_star)`.
    fn mode_transition(&self, x_mode: &QTable, side: ErrorSide) -> Mat {
        match side {
            ErrorSide::Lower => {
                let gamma_x = min_selector(x_mode);
                self.p_pi_star.matmul(gamma_x.matrix())
            }
            ErrorSide::Upper => {
                let pairs = self.gamma_star.apply(x_mode.values());
                let pi_y =
                    max_selector(&pairs, self.spec.dims()).expect("pair vector built to size");
                self.p
                    .matmul(pi_y.matrix())
                    .matmul(self.gamma_star.matrix())
            }
        }
    }

    /// Error-system matrices at the difference vector `x_mode`.
    pub fn error_matrices(&self, x_mode: &QTable, side: ErrorSide) -> ErrorSystemMatrices {
        let gamma = self.spec.discount();
        let m_mode = self.mode_transition(x_mode, side);
        let a_mode = ql_mode_matrix(&m_mode, &self.occ.d, self.alpha, gamma);
        let n = self.occ.d.len();
        let mut b_mode = Mat::zeros(n, n);
        for i in 0..n {
            let scale = self.alpha * gamma * self.occ.d[i];
            for j in 0..n {
                b_mode.set(i, j, scale * (m_mode.get(i, j) - self.m_star.get(i, j)));
            }
        }
        ErrorSystemMatrices {
            a_mode,
            b_mode,
            side,
        }
    }

    /// One comparison-system step in difference space: `A_mode x + alpha w`.
    pub fn step_side(&self, x: &QTable, w: &[f64], side: ErrorSide) -> QTable {
        let m_mode = self.mode_transition(x, side);
        let a_mode = ql_mode_matrix(&m_mode, &self.occ.d, self.alpha, self.spec.discount());
        self.advance(&a_mode, x, w)
    }

    /// One fixed-matrix step in difference space: `A x + alpha w`.
    pub fn step_fixed(&self, x: &QTable, w: &[f64]) -> QTable {
        self.advance(&self.a_fixed, x, w)
    }

    fn advance(&self, a: &Mat, x: &QTable, w: &[f64]) -> QTable {
        let mut next = a.matvec(x.values());
        for (o, &wi) in next.iter_mut().zip(w) {
            *o += self.alpha * wi;
        }
        QTable::from_values(x.dims(), next).expect("matvec preserves length")
    }

    /// Mode matrices of the learning system at `q`: the switching matrix and
    /// the affine offset that vanishes when the greedy selectors of `q` and
    /// the fixed point coincide.
    fn original_mode(&self, q: &QTable) -> (Mat, Vec<f64>) {
        let dims = self.spec.dims();
        let gamma = self.spec.discount();
        let gamma_q = min_selector(q);
        let pi_q = max_selector(&gamma_q.apply(q.values()), dims).expect("pair vector size");
        let m_q = self.p.matmul(pi_q.matrix()).matmul(gamma_q.matrix());
        let a = ql_mode_matrix(&m_q, &self.occ.d, self.alpha, gamma);
        let greedy_on_star = pi_q.apply(&gamma_q.apply(self.q_star.values()));
        let diff: Vec<f64> = greedy_on_star
            .iter()
            .zip(&self.maxmin_star)
            .map(|(x, y)| x - y)
            .collect();
        let b: Vec<f64> = transition_expectation(&self.spec, &diff)
            .iter()
            .zip(&self.occ.d)
            .map(|(x, d)| self.alpha * gamma * d * x)
            .collect();
        (a, b)
    }

    /// Runs all five systems for `steps` samples from a common start.
    pub fn run(
        &self,
        steps: usize,
        seed: u64,
        q0: &QTable,
        opts: &CoupledOptions,
    ) -> Result<CoupledTrajectory> {
        let dims = self.spec.dims();
        if q0.dims() != dims {
            return Err(Error::DimensionMismatch(
                "initial table dimensions do not match the game".into(),
            ));
        }
        if q0.inf_norm() > 1.0 {
            return Err(Error::AssumptionViolation(format!(
                "initial table norm {} exceeds the unit bound",
                q0.inf_norm()
            )));
        }
        let mut learner = LearnerState::new(q0.clone(), self.alpha, seed)?;
        let mut x_low = q0.sub(&self.q_star);
        let mut x_up = x_low.clone();
        let mut x_lu = x_low.clone();
        let mut x_ul = x_low.clone();

        let stride = opts.snapshot_stride.resolve(dims.n());
        let mut norms = Vec::with_capacity(steps + 1);
        let mut ordering_violations = Vec::with_capacity(steps + 1);
        let mut snapshots = Vec::new();
        let mut total_violations = 0u64;
        let mut max_recon = 0.0_f64;
        let mut max_identity = 0.0_f64;
        let mut max_a_norm = 0.0_f64;
        let mut max_b_norm = 0.0_f64;
        let mut max_q_inf = learner.q.inf_norm();

        for k in 0..=steps {
            let x_orig = learner.q.sub(&self.q_star);
            norms.push(self.record_norms(&x_orig, &x_low, &x_up, &x_lu, &x_ul));
            let violations =
                count_ordering_violations(&x_orig, &x_low, &x_up, &x_lu, &x_ul, opts.ordering_tol);
            ordering_violations.push(violations);
            total_violations += u64::from(violations);

            let last = k == steps;
            let want_snapshot = stride.map(|st| k % st == 0 || last).unwrap_or(false);

            if last {
                if want_snapshot {
                    snapshots.push(
                        self.snapshot(k as u64, &learner.q, &x_low, &x_up, &x_lu, &x_ul, None),
                    );
                }
                break;
            }

            // One shared sample and noise vector feed all five systems.
            let exp = sample_experience(&self.spec, &self.model, &mut learner.rng);
            let drift = expected_update_drift(&learner.q, &self.spec, &self.occ);
            let mm = maxmin_values(&learner.q);
            let w = noise_from_drift(&learner.q, &exp, &self.spec, &drift, &mm);

            if want_snapshot {
                snapshots.push(self.snapshot(
                    k as u64,
                    &learner.q,
                    &x_low,
                    &x_up,
                    &x_lu,
                    &x_ul,
                    Some(w.clone()),
                ));
            }

            // Single-entry update, then its vector form as a consistency check.
            let (a_orig, b_orig) = self.original_mode(&learner.q);
            crate::q_learning::ql_update(&mut learner, &exp, &self.spec);
            max_q_inf = max_q_inf.max(learner.q.inf_norm());
            let mut vector_form = a_orig.matvec(x_orig.values());
            for ((v, b), &wi) in vector_form.iter_mut().zip(&b_orig).zip(&w) {
                *v += b + self.alpha * wi;
            }
            let x_next = learner.q.sub(&self.q_star);
            max_recon = max_recon.max(max_abs_diff(x_next.values(), &vector_form));

            // Lower pair and its noise-free error recursion.
            let em_low = self.error_matrices(&x_low, ErrorSide::Lower);
            let x_low_next = self.advance(&em_low.a_mode, &x_low, &w);
            let x_lu_next = self.step_fixed(&x_lu, &w);
            max_identity = max_identity.max(error_identity_residual(
                &em_low,
                &x_low,
                &x_lu,
                &x_low_next,
                &x_lu_next,
            ));
            max_a_norm = max_a_norm.max(em_low.a_mode.inf_norm());
            max_b_norm = max_b_norm.max(em_low.b_mode.inf_norm());

            // Upper pair, symmetric.
            let em_up = self.error_matrices(&x_up, ErrorSide::Upper);
            let x_up_next = self.advance(&em_up.a_mode, &x_up, &w);
            let x_ul_next = self.step_fixed(&x_ul, &w);
            max_identity = max_identity.max(error_identity_residual(
                &em_up, &x_up, &x_ul, &x_up_next, &x_ul_next,
            ));
            max_a_norm = max_a_norm.max(em_up.a_mode.inf_norm());
            max_b_norm = max_b_norm.max(em_up.b_mode.inf_norm());

            x_low = x_low_next;
            x_up = x_up_next;
            x_lu = x_lu_next;
            x_ul = x_ul_next;
        }

        Ok(CoupledTrajectory {
            steps,
            q_star: self.q_star.clone(),
            norms,
            ordering_violations,
            total_ordering_violations: total_violations,
            snapshots,
            max_recon_residual: max_recon,
            max_error_identity_residual: max_identity,
            max_mode_a_norm: max_a_norm,
            max_mode_b_norm: max_b_norm,
            max_q_inf,
            rho: self.rho,
            b_norm_bound: self.b_norm_bound,
        })
    }

    fn record_norms(
        &self,
        x_orig: &QTable,
        x_low: &QTable,
        x_up: &QTable,
        x_lu: &QTable,
        x_ul: &QTable,
    ) -> StepNorms {
        StepNorms {
            orig_inf: vec_inf_norm(x_orig.values()),
            orig_two: vec_two_norm(x_orig.values()),
            low_inf: vec_inf_norm(x_low.values()),
            low_two: vec_two_norm(x_low.values()),
            up_inf: vec_inf_norm(x_up.values()),
            up_two: vec_two_norm(x_up.values()),
            lu_inf: vec_inf_norm(x_lu.values()),
            lu_two: vec_two_norm(x_lu.values()),
            ul_inf: vec_inf_norm(x_ul.values()),
            ul_two: vec_two_norm(x_ul.values()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn snapshot(
        &self,
        step: u64,
        q: &QTable,
        x_low: &QTable,
        x_up: &QTable,
        x_lu: &QTable,
        x_ul: &QTable,
        noise: Option<Vec<f64>>,
    ) -> CoupledState {
        let absolute = |x: &QTable| {
            let vals: Vec<f64> = x
                .values()
                .iter()
                .zip(self.q_star.values())
                .map(|(d, s)| d + s)
                .collect();
            QTable::from_values(x.dims(), vals).expect("length preserved")
        };
        CoupledState {
            step,
            q: q.clone(),
            q_low: absolute(x_low),
            q_up: absolute(x_up),
            q_lu: absolute(x_lu),
            q_ul: absolute(x_ul),
            noise,
        }
    }
}

fn count_ordering_violations(
    x_orig: &QTable,
    x_low: &QTable,
    x_up: &QTable,
    x_lu: &QTable,
    x_ul: &QTable,
    tol: f64,
) -> u32 {
    let mut count = 0u32;
    for i in 0..x_orig.values().len() {
        let orig = x_orig.values()[i];
        let low = x_low.values()[i];
        let up = x_up.values()[i];
        let lu = x_lu.values()[i];
        let ul = x_ul.values()[i];
        if low > orig + tol {
            count += 1;
        }
        if orig > up + tol {
            count += 1;
        }
        if low > lu + tol {
            count += 1;
        }
        if ul > up + tol {
            count += 1;
        }
    }
    count
}

/// Residual of `(x_mode' - x_fixed') - (A_mode (x_mode - x_fixed) + B_mode x_fixed)`.
fn error_identity_residual(
    em: &ErrorSystemMatrices,
    x_mode: &QTable,
    x_fixed: &QTable,
    x_mode_next: &QTable,
    x_fixed_next: &QTable,
) -> f64 {
    let gap = x_mode.sub(x_fixed);
    let mut rhs = em.a_mode.matvec(gap.values());
    let coupling = em.b_mode.matvec(x_fixed.values());
    for (r, c) in rhs.iter_mut().zip(&coupling) {
        *r += c;
    }
    let lhs = x_mode_next.sub(x_fixed_next);
    max_abs_diff(lhs.values(), &rhs)
}

/// One lower-comparison step from absolute tables; the selector pair is
/// `(Pi_star, Gamma_{q_low - q_star})`.
pub fn step_lower(
    q_low: &QTable,
    q_star: &QTable,
    w: &[f64],
    spec: &GameSpec,
    model: &SamplingModel,
    alpha: f64,
) -> Result<QTable> {
    let ctx = CoupledContext::new(spec, model, alpha, q_star.clone())?;
    check_noise_len(w, spec)?;
    let x = q_low.sub(q_star);
    let next = ctx.step_side(&x, w, ErrorSide::Lower);
    Ok(add_tables(&next, q_star))
}

/// One upper-comparison step from absolute tables; the selector pair is
/// `(Pi_{Gamma_star (q_up - q_star)}, Gamma_star)`.
pub fn step_upper(
    q_up: &QTable,
    q_star: &QTable,
    w: &[f64],
    spec: &GameSpec,
    model: &SamplingModel,
    alpha: f64,
) -> Result<QTable> {
    let ctx = CoupledContext::new(spec, model, alpha, q_star.clone())?;
    check_noise_len(w, spec)?;
    let x = q_up.sub(q_star);
    let next = ctx.step_side(&x, w, ErrorSide::Upper);
    Ok(add_tables(&next, q_star))
}

/// One fixed-matrix step in difference space: `x' = A x + alpha w` with
/// `A = I + alpha (gamma D P Pi_star Gamma_star - D)`.
pub fn step_linear(
    x: &QTable,
    w: &[f64],
    spec: &GameSpec,
    model: &SamplingModel,
    alpha: f64,
    q_star: &QTable,
) -> Result<QTable> {
    let ctx = CoupledContext::new(spec, model, alpha, q_star.clone())?;
    check_noise_len(w, spec)?;
    Ok(ctx.step_fixed(x, w))
}

/// Error-system matrices at an absolute comparison iterate `q_mode`.
pub fn error_system_matrices(
    q_mode: &QTable,
    q_star: &QTable,
    spec: &GameSpec,
    model: &SamplingModel,
    alpha: f64,
    side: ErrorSide,
) -> Result<ErrorSystemMatrices> {
    let ctx = CoupledContext::new(spec, model, alpha, q_star.clone())?;
    let x = q_mode.sub(q_star);
    Ok(ctx.error_matrices(&x, side))
}

/// Full coupled run with the fixed point solved internally to 1e-12.
pub fn run_coupled(
    spec: &GameSpec,
    model: &SamplingModel,
    alpha: f64,
    steps: usize,
    seed: u64,
    q0: &QTable,
    opts: &CoupledOptions,
) -> Result<CoupledTrajectory> {
    let ctx = CoupledContext::solve(spec, model, alpha, 1e-12)?;
    ctx.run(steps, seed, q0, opts)
}

fn check_noise_len(w: &[f64], spec: &GameSpec) -> Result<()> {
    if w.len() != spec.dims().n() {
        return Err(Error::DimensionMismatch(format!(
            "noise vector has {} entries, expected {}",
            w.len(),
            spec.dims().n()
        )));
    }
    Ok(())
}

fn add_tables(a: &QTable, b: &QTable) -> QTable {
    let vals: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x + y)
        .collect();
    QTable::from_values(a.dims(), vals).expect("length preserved")
}
