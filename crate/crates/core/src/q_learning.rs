//! Minimax Q-learning under i.i.d. sampling with a constant step-size: the
//! per-sample update, the explicit noise-vector decomposition that rewrites
//! the update as an affine switching recursion, exact noise-moment
//! enumerators, and a trajectory driver.

use crate::error::{Error, Result};
use crate::game::{occupation_frequency, GameSpec, Occupation, QTable, SamplingModel};
use crate::operators::{check_alpha, maxmin_values, transition_expectation};
use crate::rng::{rng_from_seed, sample_categorical, SimRng};

/// One sampled interaction. The reward is the expected reward of the triple,
/// so `|r| <= 1` whenever the game validates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub s: usize,
    pub a: usize,
    pub b: usize,
    pub s_next: usize,
    pub r: f64,
}

/// Mutable learner: current table, step counter, step-size, and generator
/// state. A single trajectory is strictly sequential; run distinct seeds for
/// independent trials.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub q: QTable,
    pub step: u64,
    pub alpha: f64,
    pub rng: SimRng,
}

impl LearnerState {
    pub fn new(q0: QTable, alpha: f64, seed: u64) -> Result<LearnerState> {
        check_alpha(alpha)?;
        Ok(LearnerState {
            q: q0,
            step: 0,
            alpha,
            rng: rng_from_seed(seed),
        })
    }
}

/// Draws `(s, a, b, s', r)` with `s ~ p`, `a ~ beta(.|s)`, `b ~ phi(.|s)`,
/// `s' ~ P(.|s,a,b)`, `r = R(s,a,b)`; the triple distribution is exactly the
/// occupation frequency.
pub fn sample_experience(spec: &GameSpec, model: &SamplingModel, rng: &mut SimRng) -> Experience {
    assert_eq!(spec.dims(), model.dims(), "sampling model dimensions");
    let s = sample_categorical(model.state_dist(), rng);
    let a = sample_categorical(model.user_policy_row(s), rng);
    let b = sample_categorical(model.adv_policy_row(s), rng);
    let s_next = sample_categorical(spec.transition_row(s, a, b), rng);
    Experience {
        s,
        a,
        b,
        s_next,
        r: spec.reward_at(s, a, b),
    }
}

/// Applies one update to the sampled entry and returns the TD error
/// `r + gamma max_a' min_b' q(s', a', b') - q(s, a, b)`. All other entries
/// are untouched.
pub fn ql_update(state: &mut LearnerState, exp: &Experience, spec: &GameSpec) -> f64 {
    let dims = spec.dims();
    debug_assert_eq!(state.q.dims(), dims);
    let target = maxmin_at_state(&state.q, exp.s_next);
    let old = state.q.get(exp.s, exp.a, exp.b);
    let td_error = exp.r + spec.discount() * target - old;
    state
        .q
        .set(exp.s, exp.a, exp.b, old + state.alpha * td_error);
    state.step += 1;
    td_error
}

/// `max_a min_b q(s, a, b)` for a single state; selection only, so it agrees
/// exactly with the selector-matrix route.
fn maxmin_at_state(q: &QTable, s: usize) -> f64 {
    let dims = q.dims();
    let mut best = f64::NEG_INFINITY;
    for a in 0..dims.num_actions_user {
        let mut worst = f64::INFINITY;
        for b in 0..dims.num_actions_adv {
            worst = worst.min(q.get(s, a, b));
        }
        best = best.max(worst);
    }
    best
}

/// The zero-mean noise vector of one sample: the one-hot TD contribution
/// minus the conditional-mean drift `D R + gamma D P (max-min of q) - D q`.
/// The identity `q_next - q = alpha (drift + w)` reproduces [`ql_update`].
pub fn noise_vector(
    q: &QTable,
    exp: &Experience,
    spec: &GameSpec,
    model: &SamplingModel,
) -> Result<Vec<f64>> {
    let occ = occupation_frequency(model)?;
    Ok(noise_vector_with_occupation(q, exp, spec, &occ))
}

/// Same as [`noise_vector`] with the occupation frequency precomputed.
pub fn noise_vector_with_occupation(
    q: &QTable,
    exp: &Experience,
    spec: &GameSpec,
    occ: &Occupation,
) -> Vec<f64> {
    let drift = expected_update_drift(q, spec, occ);
    let mm = maxmin_values(q);
    noise_from_drift(q, exp, spec, &drift, &mm)
}

/// `D R + gamma D P (max-min of q) - D q` in flat order.
pub(crate) fn expected_update_drift(q: &QTable, spec: &GameSpec, occ: &Occupation) -> Vec<f64> {
    let mm = maxmin_values(q);
    let p_mm = transition_expectation(spec, &mm);
    let gamma = spec.discount();
    let mut drift = vec![0.0; spec.dims().n()];
    for (i, d) in drift.iter_mut().enumerate() {
        *d = occ.d[i] * (spec.rewards()[i] + gamma * p_mm[i] - q.values()[i]);
    }
    drift
}

pub(crate) fn noise_from_drift(
    q: &QTable,
    exp: &Experience,
    spec: &GameSpec,
    drift: &[f64],
    mm: &[f64],
) -> Vec<f64> {
    let dims = spec.dims();
    let f = dims.flat(exp.a, exp.b, exp.s);
    let td_error = exp.r + spec.discount() * mm[exp.s_next] - q.values()[f];
    let mut w: Vec<f64> = drift.iter().map(|x| -x).collect();
    w[f] += td_error;
    w
}

/// Exact conditional moments of the noise vector given `q`, by full
/// enumeration of `(s, a, b, s')` weighted by `d(s,a,b) P(s'|s,a,b)`.
#[derive(Debug, Clone)]
pub struct NoiseMoments {
    /// `E[w | q]`; the zero vector up to rounding.
    pub mean: Vec<f64>,
    /// `E[w^T w | q]`.
    pub second_moment: f64,
    /// `E[||w||_2 | q]`.
    pub mean_two_norm: f64,
    /// `E[||w||_inf | q]`.
    pub mean_inf_norm: f64,
}

pub fn noise_moments(q: &QTable, spec: &GameSpec, model: &SamplingModel) -> Result<NoiseMoments> {
    let dims = spec.dims();
    if q.dims() != dims || model.dims() != dims {
        return Err(Error::DimensionMismatch(
            "Q-table or model dimensions do not match the game".into(),
        ));
    }
    let occ = occupation_frequency(model)?;
    let drift = expected_update_drift(q, spec, &occ);
    let mm = maxmin_values(q);
    let mut mean = vec![0.0; dims.n()];
    let mut second_moment = 0.0;
    let mut mean_two = 0.0;
    let mut mean_inf = 0.0;
    for a in 0..dims.num_actions_user {
        for b in 0..dims.num_actions_adv {
            for s in 0..dims.num_states {
                let f = dims.flat(a, b, s);
                let d_triple = occ.d[f];
                for (s_next, &p) in spec.transition_row(s, a, b).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let weight = d_triple * p;
                    let exp = Experience {
                        s,
                        a,
                        b,
                        s_next,
                        r: spec.reward_at(s, a, b),
                    };
                    let w = noise_from_drift(q, &exp, spec, &drift, &mm);
                    let mut sq = 0.0;
                    for (m, &x) in mean.iter_mut().zip(&w) {
                        *m += weight * x;
                        sq += x * x;
                    }
                    second_moment += weight * sq;
                    mean_two += weight * sq.sqrt();
                    mean_inf += weight * crate::linalg::vec_inf_norm(&w);
                }
            }
        }
    }
    Ok(NoiseMoments {
        mean,
        second_moment,
        mean_two_norm: mean_two,
        mean_inf_norm: mean_inf,
    })
}

/// Snapshot cadence for trajectory drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotStride {
    /// Every step for tables up to 64 entries, every 10 steps above that.
    DefaultRule,
    Every(usize),
    Disabled,
}

impl SnapshotStride {
    pub(crate) fn resolve(self, n: usize) -> Option<usize> {
        match self {
            SnapshotStride::DefaultRule => Some(if n <= 64 { 1 } else { 10 }),
            SnapshotStride::Every(k) => Some(k.max(1)),
            SnapshotStride::Disabled => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QSnapshot {
    pub step: u64,
    pub q: QTable,
}

/// A finished learning trajectory.
#[derive(Debug, Clone)]
pub struct LearningRun {
    pub snapshots: Vec<QSnapshot>,
    pub final_q: QTable,
    pub steps: u64,
    /// Largest `||q_k||_inf` seen along the run, including the start.
    pub max_inf_norm: f64,
}

/// Runs minimax Q-learning for `steps` samples. Requires `||q0||_inf <= 1`
/// and a fully exploring sampling model; rejects both up front.
pub fn run_q_learning(
    spec: &GameSpec,
    model: &SamplingModel,
    alpha: f64,
    steps: u64,
    seed: u64,
    q0: &QTable,
    stride: SnapshotStride,
) -> Result<LearningRun> {
    if spec.dims() != model.dims() || spec.dims() != q0.dims() {
        return Err(Error::DimensionMismatch(
            "game, model, and initial table must agree".into(),
        ));
    }
    if q0.inf_norm() > 1.0 {
        return Err(Error::AssumptionViolation(format!(
            "initial table norm {} exceeds the unit bound",
            q0.inf_norm()
        )));
    }
    occupation_frequency(model)?;
    let mut state = LearnerState::new(q0.clone(), alpha, seed)?;
    let stride = stride.resolve(spec.dims().n());
    let mut snapshots = Vec::new();
    if stride.is_some() {
        snapshots.push(QSnapshot {
            step: 0,
            q: state.q.clone(),
        });
    }
    let mut max_inf_norm = state.q.inf_norm();
    for k in 1..=steps {
        let exp = sample_experience(spec, model, &mut state.rng);
        ql_update(&mut state, &exp, spec);
        max_inf_norm = max_inf_norm.max(state.q.inf_norm());
        if let Some(stride) = stride {
            if k % stride as u64 == 0 || k == steps {
                snapshots.push(QSnapshot {
                    step: k,
                    q: state.q.clone(),
                });
            }
        }
    }
    Ok(LearningRun {
        snapshots,
        final_q: state.q,
        steps,
        max_inf_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_random_game, Dims};
    use crate::linalg::{max_abs_diff, vec_inf_norm};
    use crate::value_iteration::solve_optimal_q;

    fn mp2() -> (GameSpec, SamplingModel) {
        let spec = GameSpec::matching_pennies();
        let model = SamplingModel::uniform(spec.dims());
        (spec, model)
    }

    #[test]
    fn empirical_triple_frequencies_match_occupation() {
        let (spec, model) = mp2();
        let mut rng = rng_from_seed(5);
        let mut counts = [0u32; 4];
        let total = 100_000;
        for _ in 0..total {
            let e = sample_experience(&spec, &model, &mut rng);
            counts[spec.dims().flat(e.a, e.b, e.s)] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / total as f64;
            assert!((freq - 0.25).abs() < 0.01, "{freq}");
        }
    }

    #[test]
    fn point_mass_model_always_yields_same_triple() {
        let dims = Dims::new(2, 2, 1).unwrap();
        let spec = GameSpec::matching_pennies();
        let model = SamplingModel::new(dims, vec![1.0], vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let mut rng = rng_from_seed(9);
        for _ in 0..50 {
            let e = sample_experience(&spec, &model, &mut rng);
            assert_eq!((e.s, e.a, e.b, e.s_next), (0, 1, 0, 0));
            assert_eq!(e.r, -1.0);
        }
    }

    #[test]
    fn same_seed_gives_identical_streams() {
        let (spec, model) = mp2();
        let mut r1 = rng_from_seed(123);
        let mut r2 = rng_from_seed(123);
        for _ in 0..100 {
            assert_eq!(
                sample_experience(&spec, &model, &mut r1),
                sample_experience(&spec, &model, &mut r2)
            );
        }
    }

    #[test]
    fn update_changes_exactly_the_sampled_entry() {
        let (spec, _) = mp2();
        let mut state = LearnerState::new(QTable::zeros(spec.dims()), 0.1, 0).unwrap();
        let exp = Experience {
            s: 0,
            a: 0,
            b: 0,
            s_next: 0,
            r: 1.0,
        };
        let delta = ql_update(&mut state, &exp, &spec);
        assert!((delta - 1.0).abs() < 1e-15);
        assert!((state.q.get(0, 0, 0) - 0.1).abs() < 1e-15);
        assert_eq!(&state.q.values()[1..], &[0.0, 0.0, 0.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn td_error_vanishes_at_the_fixed_point() {
        let (spec, _) = mp2();
        let q_star = QTable::from_values(spec.dims(), vec![0.0, -2.0, -2.0, 0.0]).unwrap();
        let mut state = LearnerState::new(q_star, 0.1, 0).unwrap();
        let exp = Experience {
            s: 0,
            a: 0,
            b: 0,
            s_next: 0,
            r: 1.0,
        };
        let delta = ql_update(&mut state, &exp, &spec);
        assert!(delta.abs() < 1e-15);
    }

    #[test]
    fn zero_step_size_is_rejected() {
        let (spec, _) = mp2();
        assert!(LearnerState::new(QTable::zeros(spec.dims()), 0.0, 0).is_err());
        assert!(LearnerState::new(QTable::zeros(spec.dims()), 1.0, 0).is_err());
    }

    #[test]
    fn noise_mean_is_zero_by_enumeration_on_matching_pennies() {
        let (spec, model) = mp2();
        let mut rng = rng_from_seed(11);
        for _ in 0..10 {
            let q = QTable::random(spec.dims(), 2.0, &mut rng);
            let moments = noise_moments(&q, &spec, &model).unwrap();
            assert!(vec_inf_norm(&moments.mean) < 1e-12);
        }
    }

    #[test]
    fn update_reconstructs_from_drift_plus_noise() {
        let dims = Dims::new(2, 2, 3).unwrap();
        let spec = generate_random_game(dims, 0.7, 50).unwrap();
        let model = SamplingModel::random(dims, 51);
        let occ = occupation_frequency(&model).unwrap();
        let mut rng = rng_from_seed(52);
        for _ in 0..50 {
            let q = QTable::random(dims, 1.0, &mut rng);
            let mut state = LearnerState::new(q.clone(), 0.3, 0).unwrap();
            let exp = sample_experience(&spec, &model, &mut rng);
            let w = noise_vector_with_occupation(&q, &exp, &spec, &occ);
            let drift = expected_update_drift(&q, &spec, &occ);
            ql_update(&mut state, &exp, &spec);
            let reconstructed: Vec<f64> = q
                .values()
                .iter()
                .zip(drift.iter().zip(&w))
                .map(|(&qv, (&m, &wv))| qv + 0.3 * (m + wv))
                .collect();
            assert!(max_abs_diff(state.q.values(), &reconstructed) < 1e-12);
        }
    }

    #[test]
    fn degenerate_single_outcome_game_has_zero_noise() {
        let dims = Dims::new(1, 1, 1).unwrap();
        let spec = GameSpec::new(dims, vec![1.0], vec![0.5], 0.5).unwrap();
        let model = SamplingModel::uniform(dims);
        let q = QTable::constant(dims, 0.7);
        let exp = Experience {
            s: 0,
            a: 0,
            b: 0,
            s_next: 0,
            r: 0.5,
        };
        let w = noise_vector(&q, &exp, &spec, &model).unwrap();
        assert_eq!(w, vec![0.0]);
    }

    #[test]
    fn trajectory_stays_inside_the_boundedness_envelope() {
        let (spec, model) = mp2();
        let run = run_q_learning(
            &spec,
            &model,
            0.05,
            20_000,
            7,
            &QTable::zeros(spec.dims()),
            SnapshotStride::Disabled,
        )
        .unwrap();
        assert!(run.max_inf_norm <= 2.0, "{}", run.max_inf_norm);
    }

    #[test]
    fn zero_steps_returns_the_initial_table() {
        let (spec, model) = mp2();
        let q0 = QTable::zeros(spec.dims());
        let run =
            run_q_learning(&spec, &model, 0.1, 0, 3, &q0, SnapshotStride::DefaultRule).unwrap();
        assert_eq!(run.snapshots.len(), 1);
        assert_eq!(run.final_q, q0);
    }

    #[test]
    fn learning_improves_on_average_over_50_seeds() {
        let (spec, model) = mp2();
        let q_star = solve_optimal_q(&spec, 1e-12).unwrap().q_star;
        let q0 = QTable::zeros(spec.dims());
        let initial = max_abs_diff(q0.values(), q_star.values());
        let mut total = 0.0;
        for seed in 0..50 {
            let run = run_q_learning(
                &spec,
                &model,
                0.05,
                20_000,
                seed,
                &q0,
                SnapshotStride::Disabled,
            )
            .unwrap();
            total += max_abs_diff(run.final_q.values(), q_star.values());
        }
        let mean = total / 50.0;
        assert!(mean < initial, "mean error {mean} vs initial {initial}");
    }

    #[test]
    fn oversized_initial_table_is_rejected() {
        let (spec, model) = mp2();
        let q0 = QTable::constant(spec.dims(), 1.5);
        assert!(matches!(
            run_q_learning(&spec, &model, 0.1, 10, 0, &q0, SnapshotStride::Disabled),
            Err(Error::AssumptionViolation(_))
        ));
    }

    #[test]
    fn snapshot_stride_is_respected() {
        let (spec, model) = mp2();
        let q0 = QTable::zeros(spec.dims());
        let run =
            run_q_learning(&spec, &model, 0.1, 100, 0, &q0, SnapshotStride::Every(25)).unwrap();
        let steps: Vec<u64> = run.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 25, 50, 75, 100]);
    }

    #[test]
    fn deterministic_across_identical_runs() {
        let (spec, model) = mp2();
        let q0 = QTable::zeros(spec.dims());
        let a = run_q_learning(&spec, &model, 0.1, 500, 9, &q0, SnapshotStride::Disabled).unwrap();
        let b = run_q_learning(&spec, &model, 0.1, 500, 9, &q0, SnapshotStride::Disabled).unwrap();
        assert_eq!(a.final_q, b.final_q);
    }
}
