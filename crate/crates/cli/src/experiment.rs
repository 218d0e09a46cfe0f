//! Coupled verification experiments: fan a coupled run out over seeded
//! trials, aggregate per-step error norms, evaluate every bound on the same
//! step grid, and compare.

use serde::Serialize;

use switchq_core::bounds::{empirical_vs_bound, BoundId, BoundParams, ExponentVariant};
use switchq_core::comparison::{CoupledContext, CoupledOptions};
use switchq_core::q_learning::SnapshotStride;
use switchq_core::rng::{rng_from_seed, trial_seed};
use switchq_core::value_iteration::solve_optimal_q;
use switchq_core::{Error, GameSpec, QTable, Result, SamplingModel};

/// Where the game comes from; echoed into run metadata.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    Path(String),
    Generated {
        num_actions_user: usize,
        num_actions_adv: usize,
        num_states: usize,
        gamma: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingChoice {
    /// Sampling block from the game file, uniform when absent.
    File,
    Uniform,
    /// Random positive distributions derived from the base seed.
    Random,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub gamma_override: Option<f64>,
    pub sampling: SamplingChoice,
    pub alpha: f64,
    pub steps: usize,
    pub trials: usize,
    pub base_seed: u64,
    /// Step stride for CSV rows; checks always run on every step.
    pub csv_stride: usize,
    pub random_q0: bool,
    pub bound_variant: ExponentVariant,
    pub mc_tolerance: f64,
    pub ordering_tol: f64,
    pub identity_tol: f64,
    pub solve_tol: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidParameter {
                name: "trials",
                reason: "at least one trial is required".into(),
            });
        }
        if self.csv_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "csv_stride",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Per-step mean or max of each system's error norms over trials.
#[derive(Debug, Clone, Default)]
pub struct SeriesSet {
    pub orig_inf: Vec<f64>,
    pub orig_two: Vec<f64>,
    pub low_inf: Vec<f64>,
    pub low_two: Vec<f64>,
    pub up_inf: Vec<f64>,
    pub up_two: Vec<f64>,
    pub lu_inf: Vec<f64>,
    pub lu_two: Vec<f64>,
    pub ul_inf: Vec<f64>,
    pub ul_two: Vec<f64>,
}

impl SeriesSet {
    fn zeros(len: usize) -> SeriesSet {
        SeriesSet {
            orig_inf: vec![0.0; len],
            orig_two: vec![0.0; len],
            low_inf: vec![0.0; len],
            low_two: vec![0.0; len],
            up_inf: vec![0.0; len],
            up_two: vec![0.0; len],
            lu_inf: vec![0.0; len],
            lu_two: vec![0.0; len],
            ul_inf: vec![0.0; len],
            ul_two: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoundSeries {
    pub thm1: Vec<f64>,
    pub thm2: Vec<f64>,
    pub cor1_eq4: Vec<f64>,
    pub cor1_eq5: Vec<f64>,
    pub thm4: Vec<f64>,
    pub thm5: Vec<f64>,
}

/// Outcome of one bound-vs-empirical comparison.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckSummary {
    pub bound: String,
    pub series: String,
    pub violations: usize,
    pub first_violation_k: Option<usize>,
    pub min_margin: f64,
}

/// Everything a verification run produced, plus the inputs needed to write
/// CSV and metadata.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub steps: usize,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub mean: SeriesSet,
    pub max: SeriesSet,
    pub order_violations: Vec<u64>,
    pub total_ordering_violations: u64,
    pub bounds: BoundSeries,
    pub bound_checks: Vec<BoundCheckSummary>,
    /// Informational: margin of the learning system's mean 2-norm error
    /// against the merged bound, which is enforced on the inf-norm.
    pub thm5_two_norm_min_margin: f64,
    pub max_recon_residual: f64,
    pub max_error_identity_residual: f64,
    pub max_mode_a_norm: f64,
    pub max_mode_b_norm: f64,
    pub max_q_inf: f64,
    pub q_max: f64,
    pub rho: f64,
    pub b_norm_bound: f64,
    pub params: BoundParams,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub solver_certificate: f64,
}

/// A single named rule failure; any of these force a nonzero exit.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub rule: String,
    pub detail: String,
}

impl RunRecord {
    /// Collects every violated run invariant under the configured tolerances.
    pub fn diagnostics(&self, cfg: &ExperimentConfig) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.total_ordering_violations > 0 {
            let first = self
                .order_violations
                .iter()
                .position(|&c| c > 0)
                .unwrap_or(0);
            out.push(Diagnostic {
                rule: "ordering".into(),
                detail: format!(
                    "{} elementwise ordering violations, first at k={first}",
                    self.total_ordering_violations
                ),
            });
        }
        if self.max_recon_residual > cfg.identity_tol {
            out.push(Diagnostic {
                rule: "update_vector_form".into(),
                detail: format!(
                    "single-entry vs vector-form residual {} exceeds {}",
                    self.max_recon_residual, cfg.identity_tol
                ),
            });
        }
        if self.max_error_identity_residual > cfg.identity_tol {
            out.push(Diagnostic {
                rule: "error_recursion".into(),
                detail: format!(
                    "error-system recursion residual {} exceeds {}",
                    self.max_error_identity_residual, cfg.identity_tol
                ),
            });
        }
        if self.max_mode_a_norm > self.rho + 1e-12 {
            out.push(Diagnostic {
                rule: "mode_matrix_norm".into(),
                detail: format!(
                    "mode matrix norm {} exceeds rho {}",
                    self.max_mode_a_norm, self.rho
                ),
            });
        }
        if self.max_mode_b_norm > self.b_norm_bound + 1e-12 {
            out.push(Diagnostic {
                rule: "coupling_matrix_norm".into(),
                detail: format!(
                    "coupling matrix norm {} exceeds {}",
                    self.max_mode_b_norm, self.b_norm_bound
                ),
            });
        }
        if self.max_q_inf > self.q_max + 1e-12 {
            out.push(Diagnostic {
                rule: "boundedness".into(),
                detail: format!(
                    "learning iterate norm {} exceeds the envelope {}",
                    self.max_q_inf, self.q_max
                ),
            });
        }
        for check in &self.bound_checks {
            if check.violations > 0 {
                out.push(Diagnostic {
                    rule: check.bound.clone(),
                    detail: format!(
                        "{} exceeded by {} ({} steps, first at k={:?}, worst margin {})",
                        check.bound,
                        check.series,
                        check.violations,
                        check.first_violation_k,
                        check.min_margin
                    ),
                });
            }
        }
        out
    }
}

/// Resolves the configured game and sampling model.
pub fn resolve_game(cfg: &ExperimentConfig) -> Result<(GameSpec, SamplingModel)> {
    let (spec, file_sampling) = match &cfg.game {
        GameSource::Path(path) => {
            let loaded = switchq_core::io::load_game(path)?;
            (loaded.spec, loaded.sampling)
        }
        GameSource::Generated {
            num_actions_user,
            num_actions_adv,
            num_states,
            gamma,
            seed,
        } => {
            let dims = switchq_core::Dims::new(*num_actions_user, *num_actions_adv, *num_states)?;
            (
                switchq_core::generate_random_game(dims, *gamma, *seed)?,
                None,
            )
        }
    };
    let spec = match cfg.gamma_override {
        Some(gamma) => spec.with_discount(gamma)?,
        None => spec,
    };
    let model = match cfg.sampling {
        SamplingChoice::File => {
            file_sampling.unwrap_or_else(|| SamplingModel::uniform(spec.dims()))
        }
        SamplingChoice::Uniform => SamplingModel::uniform(spec.dims()),
        SamplingChoice::Random => {
            SamplingModel::random(spec.dims(), trial_seed(cfg.base_seed, u64::MAX))
        }
    };
    Ok((spec, model))
}

/// Runs the full experiment: sequential trials in fixed order, aggregation,
/// bound evaluation, and bound checks. Deterministic in `base_seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let (spec, model) = resolve_game(cfg)?;
    let solved = solve_optimal_q(&spec, cfg.solve_tol)?;
    let ctx = CoupledContext::new(&spec, &model, cfg.alpha, solved.q_star.clone())?;

    let q0 = if cfg.random_q0 {
        let mut rng = rng_from_seed(trial_seed(cfg.base_seed, cfg.trials as u64));
        QTable::random(spec.dims(), 1.0, &mut rng)
    } else {
        QTable::zeros(spec.dims())
    };

    let opts = CoupledOptions {
        snapshot_stride: SnapshotStride::Disabled,
        ordering_tol: cfg.ordering_tol,
        identity_tol: cfg.identity_tol,
    };

    let len = cfg.steps + 1;
    let mut mean = SeriesSet::zeros(len);
    let mut max = SeriesSet::zeros(len);
    let mut order_violations = vec![0u64; len];
    let mut total_ordering = 0u64;
    let mut max_recon = 0.0_f64;
    let mut max_identity = 0.0_f64;
    let mut max_a_norm = 0.0_f64;
    let mut max_b_norm = 0.0_f64;
    let mut max_q_inf = 0.0_f64;
    let seeds: Vec<u64> = (0..cfg.trials)
        .map(|i| trial_seed(cfg.base_seed, i as u64))
        .collect();

    for &seed in &seeds {
        let traj = ctx.run(cfg.steps, seed, &q0, &opts)?;
        for (k, norms) in traj.norms.iter().enumerate() {
            mean.orig_inf[k] += norms.orig_inf;
            mean.orig_two[k] += norms.orig_two;
            mean.low_inf[k] += norms.low_inf;
            mean.low_two[k] += norms.low_two;
            mean.up_inf[k] += norms.up_inf;
            mean.up_two[k] += norms.up_two;
            mean.lu_inf[k] += norms.lu_inf;
            mean.lu_two[k] += norms.lu_two;
            mean.ul_inf[k] += norms.ul_inf;
            mean.ul_two[k] += norms.ul_two;
            max.orig_inf[k] = max.orig_inf[k].max(norms.orig_inf);
            max.orig_two[k] = max.orig_two[k].max(norms.orig_two);
            max.low_inf[k] = max.low_inf[k].max(norms.low_inf);
            max.low_two[k] = max.low_two[k].max(norms.low_two);
            max.up_inf[k] = max.up_inf[k].max(norms.up_inf);
            max.up_two[k] = max.up_two[k].max(norms.up_two);
            max.lu_inf[k] = max.lu_inf[k].max(norms.lu_inf);
            max.lu_two[k] = max.lu_two[k].max(norms.lu_two);
            max.ul_inf[k] = max.ul_inf[k].max(norms.ul_inf);
            max.ul_two[k] = max.ul_two[k].max(norms.ul_two);
            order_violations[k] += u64::from(traj.ordering_violations[k]);
        }
        total_ordering += traj.total_ordering_violations;
        max_recon = max_recon.max(traj.max_recon_residual);
        max_identity = max_identity.max(traj.max_error_identity_residual);
        max_a_norm = max_a_norm.max(traj.max_mode_a_norm);
        max_b_norm = max_b_norm.max(traj.max_mode_b_norm);
        max_q_inf = max_q_inf.max(traj.max_q_inf);
    }
    let scale = 1.0 / cfg.trials as f64;
    for series in [
        &mut mean.orig_inf,
        &mut mean.orig_two,
        &mut mean.low_inf,
        &mut mean.low_two,
        &mut mean.up_inf,
        &mut mean.up_two,
        &mut mean.lu_inf,
        &mut mean.lu_two,
        &mut mean.ul_inf,
        &mut mean.ul_two,
    ] {
        for x in series.iter_mut() {
            *x *= scale;
        }
    }

    let params = BoundParams::for_run(
        &spec,
        &model,
        cfg.alpha,
        &q0,
        ctx.q_star(),
        cfg.bound_variant,
    )?;
    let bounds = BoundSeries {
        thm1: (0..len).map(|k| BoundId::Thm1.eval(k, &params)).collect(),
        thm2: (0..len).map(|k| BoundId::Thm2.eval(k, &params)).collect(),
        cor1_eq4: (0..len)
            .map(|k| BoundId::Cor1Eq4.eval(k, &params))
            .collect(),
        cor1_eq5: (0..len)
            .map(|k| BoundId::Cor1Eq5.eval(k, &params))
            .collect(),
        thm4: (0..len).map(|k| BoundId::Thm4.eval(k, &params)).collect(),
        thm5: (0..len).map(|k| BoundId::Thm5.eval(k, &params)).collect(),
    };

    let checks = [
        (BoundId::Thm1, "mean_err_LU_2", &mean.lu_two),
        (BoundId::Thm2, "mean_err_L_inf", &mean.low_inf),
        (BoundId::Cor1Eq4, "mean_err_L_inf", &mean.low_inf),
        (BoundId::Cor1Eq5, "mean_err_L_inf", &mean.low_inf),
        (BoundId::Thm4, "mean_err_U_inf", &mean.up_inf),
        (BoundId::Thm5, "mean_err_orig_inf", &mean.orig_inf),
    ];
    let mut bound_checks = Vec::new();
    for (id, series_name, series) in checks {
        let report = empirical_vs_bound(series, &params, id, cfg.mc_tolerance)?;
        let min_margin = report.margins.iter().cloned().fold(f64::INFINITY, f64::min);
        bound_checks.push(BoundCheckSummary {
            bound: id.to_string(),
            series: series_name.into(),
            violations: report.violations.len(),
            first_violation_k: report.violations.first().map(|v| v.k),
            min_margin,
        });
    }
    // The merged bound is stated in the 2-norm; the enforced check above uses
    // the inf-norm, and the 2-norm margin is reported alongside.
    let thm5_two = empirical_vs_bound(&mean.orig_two, &params, BoundId::Thm5, cfg.mc_tolerance)?;
    let thm5_two_norm_min_margin = thm5_two
        .margins
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    Ok(RunRecord {
        steps: cfg.steps,
        trials: cfg.trials,
        seeds,
        mean,
        max,
        order_violations,
        total_ordering_violations: total_ordering,
        bounds,
        bound_checks,
        thm5_two_norm_min_margin,
        max_recon_residual: max_recon,
        max_error_identity_residual: max_identity,
        max_mode_a_norm: max_a_norm,
        max_mode_b_norm: max_b_norm,
        max_q_inf,
        q_max: params.q_max,
        rho: params.rho,
        b_norm_bound: ctx.b_norm_bound(),
        params,
        solver_iterations: solved.iterations,
        solver_residual: solved.residual,
        solver_certificate: solved.error_certificate,
    })
}
