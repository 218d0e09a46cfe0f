//! Game definition: dimensions and flat indexing, transition and reward
//! tensors, sampling distributions with their occupation frequency, Q-tables,
//! validation, and random instance generation.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vec_inf_norm, vec_sub};
use crate::rng::{rng_from_seed, SimRng};

/// Tolerance for probability-simplex sums. Stored distributions are never
/// renormalized; off-by-more-than-this is reported as a data error.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Cardinalities of the user action set, adversary action set, and state set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub num_actions_user: usize,
    pub num_actions_adv: usize,
    pub num_states: usize,
}

impl Dims {
    pub fn new(num_actions_user: usize, num_actions_adv: usize, num_states: usize) -> Result<Dims> {
        for (name, v) in [
            ("num_actions_user", num_actions_user),
            ("num_actions_adv", num_actions_adv),
            ("num_states", num_states),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive".into(),
                });
            }
        }
        Ok(Dims {
            num_actions_user,
            num_actions_adv,
            num_states,
        })
    }

    /// Total number of `(s, a, b)` triples.
    pub fn n(&self) -> usize {
        self.num_actions_user * self.num_actions_adv * self.num_states
    }

    /// Number of `(s, a)` pairs, the row count of the min-selector.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions_user
    }

    /// Flat position of `(a, b, s)`: a-major, then b, then s.
    pub fn flat_index(&self, a: usize, b: usize, s: usize) -> Result<usize> {
        if a >= self.num_actions_user {
            return Err(Error::IndexOutOfRange {
                name: "a",
                value: a,
                bound: self.num_actions_user,
            });
        }
        if b >= self.num_actions_adv {
            return Err(Error::IndexOutOfRange {
                name: "b",
                value: b,
                bound: self.num_actions_adv,
            });
        }
        if s >= self.num_states {
            return Err(Error::IndexOutOfRange {
                name: "s",
                value: s,
                bound: self.num_states,
            });
        }
        Ok(self.flat(a, b, s))
    }

    #[inline]
    pub(crate) fn flat(&self, a: usize, b: usize, s: usize) -> usize {
        debug_assert!(a < self.num_actions_user && b < self.num_actions_adv && s < self.num_states);
        (a * self.num_actions_adv + b) * self.num_states + s
    }

    /// Inverse of [`Dims::flat_index`].
    pub fn unflatten(&self, idx: usize) -> Result<(usize, usize, usize)> {
        if idx >= self.n() {
            return Err(Error::IndexOutOfRange {
                name: "flat index",
                value: idx,
                bound: self.n(),
            });
        }
        let s = idx % self.num_states;
        let rest = idx / self.num_states;
        let b = rest % self.num_actions_adv;
        let a = rest / self.num_actions_adv;
        Ok((a, b, s))
    }

    /// Position of the `(a, s)` pair in selector-row order (a-major).
    #[inline]
    pub fn pair(&self, a: usize, s: usize) -> usize {
        debug_assert!(a < self.num_actions_user && s < self.num_states);
        a * self.num_states + s
    }
}

/// Flat position of `(a, b, s)` under `dims`; errors on out-of-range input.
pub fn flat_index(a: usize, b: usize, s: usize, dims: Dims) -> Result<usize> {
    dims.flat_index(a, b, s)
}

/// Full alternating zero-sum Markov game at tabular scale. Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    dims: Dims,
    /// Row `flat(a, b, s)`, column `s'`.
    transition: Vec<f64>,
    /// Expected reward per flat `(a, b, s)` entry.
    reward: Vec<f64>,
    discount: f64,
}

impl GameSpec {
    /// Shape and parameter checks happen here; stochasticity and reward-bound
    /// checks are reported by [`validate_game`].
    pub fn new(dims: Dims, transition: Vec<f64>, reward: Vec<f64>, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidParameter {
                name: "discount",
                reason: format!("gamma={discount} must lie in [0, 1)"),
            });
        }
        let n = dims.n();
        if transition.len() != n * dims.num_states {
            return Err(Error::DimensionMismatch(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n * dims.num_states
            )));
        }
        if reward.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n
            )));
        }
        if let Some(x) = transition
            .iter()
            .chain(reward.iter())
            .find(|x| !x.is_finite())
        {
            return Err(Error::InvalidParameter {
                name: "tensor entry",
                reason: format!("non-finite value {x}"),
            });
        }
        Ok(GameSpec {
            dims,
            transition,
            reward,
            discount,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn reward_at(&self, s: usize, a: usize, b: usize) -> f64 {
        self.reward[self.dims.flat(a, b, s)]
    }

    /// Next-state distribution for the triple `(s, a, b)`.
    pub fn transition_row(&self, s: usize, a: usize, b: usize) -> &[f64] {
        let f = self.dims.flat(a, b, s);
        let ns = self.dims.num_states;
        &self.transition[f * ns..(f + 1) * ns]
    }

    pub fn transition_prob(&self, s_next: usize, s: usize, a: usize, b: usize) -> f64 {
        self.transition_row(s, a, b)[s_next]
    }

    /// Same game with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<GameSpec> {
        GameSpec::new(
            self.dims,
            self.transition.clone(),
            self.reward.clone(),
            discount,
        )
    }

    /// 2x2 matching-pennies game on a single self-loop state: reward +1 when
    /// the actions match, -1 otherwise, discount 1/2. Its max-min fixed point
    /// is [0, -2, -2, 0] in flat order.
    pub fn matching_pennies() -> GameSpec {
        let dims = Dims::new(2, 2, 1).expect("static dims");
        GameSpec::new(dims, vec![1.0; 4], vec![1.0, -1.0, -1.0, 1.0], 0.5).expect("static game")
    }
}

/// A single validation rule failure, locating the offending entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionRowSum {
        a: usize,
        b: usize,
        s: usize,
        sum: f64,
    },
    TransitionNegative {
        a: usize,
        b: usize,
        s: usize,
        s_next: usize,
        value: f64,
    },
    RewardBound {
        a: usize,
        b: usize,
        s: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TransitionRowSum { a, b, s, sum } => {
                write!(f, "transition row sum != 1 at (a={a}, b={b}, s={s}): {sum}")
            }
            Violation::TransitionNegative {
                a,
                b,
                s,
                s_next,
                value,
            } => write!(
                f,
                "negative transition probability at (a={a}, b={b}, s={s}, s'={s_next}): {value}"
            ),
            Violation::RewardBound { a, b, s, value } => {
                write!(
                    f,
                    "reward bound exceeded at (a={a}, b={b}, s={s}): |{value}| > 1"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "ok")
        } else {
            let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            write!(f, "{}", lines.join("; "))
        }
    }
}

/// Checks stochasticity of every transition row and the unit reward bound.
/// Violations come back as data; nothing is fixed up silently.
pub fn validate_game(spec: &GameSpec) -> ValidationReport {
    let dims = spec.dims();
    let mut violations = Vec::new();
    for a in 0..dims.num_actions_user {
        for b in 0..dims.num_actions_adv {
            for s in 0..dims.num_states {
                let row = spec.transition_row(s, a, b);
                for (s_next, &p) in row.iter().enumerate() {
                    if p < 0.0 {
                        violations.push(Violation::TransitionNegative {
                            a,
                            b,
                            s,
                            s_next,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    violations.push(Violation::TransitionRowSum { a, b, s, sum });
                }
                let r = spec.reward_at(s, a, b);
                if r.abs() > 1.0 {
                    violations.push(Violation::RewardBound { a, b, s, value: r });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Behavior distributions generating i.i.d. experience: state draw `p`,
/// user policy `beta(a|s)`, adversary policy `phi(b|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingModel {
    dims: Dims,
    state_dist: Vec<f64>,
    user_policy: Vec<f64>,
    adv_policy: Vec<f64>,
}

impl SamplingModel {
    pub fn new(
        dims: Dims,
        state_dist: Vec<f64>,
        user_policy: Vec<f64>,
        adv_policy: Vec<f64>,
    ) -> Result<Self> {
        if state_dist.len() != dims.num_states {
            return Err(Error::DimensionMismatch(format!(
                "state distribution has {} entries, expected {}",
                state_dist.len(),
                dims.num_states
            )));
        }
        if user_policy.len() != dims.num_states * dims.num_actions_user {
            return Err(Error::DimensionMismatch(format!(
                "user policy has {} entries, expected {}",
                user_policy.len(),
                dims.num_states * dims.num_actions_user
            )));
        }
        if adv_policy.len() != dims.num_states * dims.num_actions_adv {
            return Err(Error::DimensionMismatch(format!(
                "adversary policy has {} entries, expected {}",
                adv_policy.len(),
                dims.num_states * dims.num_actions_adv
            )));
        }
        check_simplex("p", &state_dist)?;
        for s in 0..dims.num_states {
            let row = &user_policy[s * dims.num_actions_user..(s + 1) * dims.num_actions_user];
            check_simplex("beta", row)?;
            let row = &adv_policy[s * dims.num_actions_adv..(s + 1) * dims.num_actions_adv];
            check_simplex("phi", row)?;
        }
        Ok(SamplingModel {
            dims,
            state_dist,
            user_policy,
            adv_policy,
        })
    }

    /// Uniform state draw and uniform behavior policies.
    pub fn uniform(dims: Dims) -> SamplingModel {
        let p = vec![1.0 / dims.num_states as f64; dims.num_states];
        let beta =
            vec![1.0 / dims.num_actions_user as f64; dims.num_states * dims.num_actions_user];
        let phi = vec![1.0 / dims.num_actions_adv as f64; dims.num_states * dims.num_actions_adv];
        SamplingModel::new(dims, p, beta, phi).expect("uniform model is valid")
    }

    /// Random strictly positive distributions; every triple gets visited.
    pub fn random(dims: Dims, seed: u64) -> SamplingModel {
        let mut rng = rng_from_seed(seed);
        let p = random_simplex(dims.num_states, &mut rng);
        let mut beta = Vec::with_capacity(dims.num_states * dims.num_actions_user);
        let mut phi = Vec::with_capacity(dims.num_states * dims.num_actions_adv);
        for _ in 0..dims.num_states {
            beta.extend(random_simplex(dims.num_actions_user, &mut rng));
        }
        for _ in 0..dims.num_states {
            phi.extend(random_simplex(dims.num_actions_adv, &mut rng));
        }
        SamplingModel::new(dims, p, beta, phi).expect("generated model is valid")
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn state_dist(&self) -> &[f64] {
        &self.state_dist
    }

    pub fn user_policy_row(&self, s: usize) -> &[f64] {
        &self.user_policy[s * self.dims.num_actions_user..(s + 1) * self.dims.num_actions_user]
    }

    pub fn adv_policy_row(&self, s: usize) -> &[f64] {
        &self.adv_policy[s * self.dims.num_actions_adv..(s + 1) * self.dims.num_actions_adv]
    }
}

fn check_simplex(name: &'static str, row: &[f64]) -> Result<()> {
    if let Some(x) = row.iter().find(|x| **x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("entry {x} is not a probability"),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("distribution sums to {sum}, expected 1"),
        });
    }
    Ok(())
}

fn random_simplex(len: usize, rng: &mut SimRng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| 0.1 + rng.random::<f64>()).collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

/// Occupation frequency `d(s,a,b) = p(s) beta(a|s) phi(b|s)` in flat order,
/// with its extreme values.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupation {
    pub d: Vec<f64>,
    pub d_min: f64,
    pub d_max: f64,
}

/// Errors if any triple has zero probability: every `(s, a, b)` must be
/// visited for the learning analysis to apply.
pub fn occupation_frequency(model: &SamplingModel) -> Result<Occupation> {
    let dims = model.dims();
    let mut d = vec![0.0; dims.n()];
    for s in 0..dims.num_states {
        let ps = model.state_dist()[s];
        for a in 0..dims.num_actions_user {
            let ba = model.user_policy_row(s)[a];
            for b in 0..dims.num_actions_adv {
                let phib = model.adv_policy_row(s)[b];
                let val = ps * ba * phib;
                if val <= 0.0 {
                    return Err(Error::AssumptionViolation(format!(
                        "occupation frequency d(s={s}, a={a}, b={b}) = {val} must be positive"
                    )));
                }
                d[dims.flat(a, b, s)] = val;
            }
        }
    }
    let d_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let d_max = d.iter().cloned().fold(0.0_f64, f64::max);
    Ok(Occupation { d, d_min, d_max })
}

/// Q-values over `(s, a, b)` stored flat; the state vector of every system in
/// this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    dims: Dims,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(dims: Dims) -> QTable {
        QTable {
            dims,
            values: vec![0.0; dims.n()],
        }
    }

    pub fn constant(dims: Dims, c: f64) -> QTable {
        QTable {
            dims,
            values: vec![c; dims.n()],
        }
    }

    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<QTable> {
        if values.len() != dims.n() {
            return Err(Error::DimensionMismatch(format!(
                "Q-table has {} entries, expected {}",
                values.len(),
                dims.n()
            )));
        }
        Ok(QTable { dims, values })
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn random(dims: Dims, bound: f64, rng: &mut SimRng) -> QTable {
        let values = (0..dims.n())
            .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
            .collect();
        QTable { dims, values }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn get(&self, s: usize, a: usize, b: usize) -> f64 {
        self.values[self.dims.flat(a, b, s)]
    }

    pub fn set(&mut self, s: usize, a: usize, b: usize, v: f64) {
        let f = self.dims.flat(a, b, s);
        self.values[f] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn inf_norm(&self) -> f64 {
        vec_inf_norm(&self.values)
    }

    pub fn sub(&self, other: &QTable) -> QTable {
        debug_assert_eq!(self.dims, other.dims);
        QTable {
            dims: self.dims,
            values: vec_sub(&self.values, &other.values),
        }
    }
}

/// Random game with strictly positive transition rows and rewards in [-1, 1];
/// a deterministic function of the seed, and always validator-clean.
pub fn generate_random_game(dims: Dims, gamma: f64, seed: u64) -> Result<GameSpec> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter {
            name: "discount",
            reason: format!("gamma={gamma} must lie in [0, 1)"),
        });
    }
    let mut rng = rng_from_seed(seed);
    let n = dims.n();
    let mut transition = Vec::with_capacity(n * dims.num_states);
    for _ in 0..n {
        transition.extend(random_simplex(dims.num_states, &mut rng));
    }
    let reward: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    GameSpec::new(dims, transition, reward, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims223() -> Dims {
        Dims::new(2, 2, 3).unwrap()
    }

    #[test]
    fn flat_index_identity_case() {
        assert_eq!(flat_index(0, 0, 0, dims223()).unwrap(), 0);
    }

    #[test]
    fn flat_index_direct_arithmetic() {
        assert_eq!(flat_index(1, 0, 2, dims223()).unwrap(), 8);
    }

    #[test]
    fn flat_index_rejects_out_of_range() {
        assert!(flat_index(2, 0, 0, dims223()).is_err());
        assert!(flat_index(0, 2, 0, dims223()).is_err());
        assert!(flat_index(0, 0, 3, dims223()).is_err());
    }

    #[test]
    fn flat_index_round_trip_exhaustive() {
        let dims = dims223();
        for i in 0..dims.n() {
            let (a, b, s) = dims.unflatten(i).unwrap();
            assert_eq!(dims.flat_index(a, b, s).unwrap(), i);
        }
    }

    #[test]
    fn flat_index_bijection_up_to_4_4_6() {
        for na in 1..=4 {
            for nb in 1..=4 {
                for ns in 1..=6 {
                    let dims = Dims::new(na, nb, ns).unwrap();
                    let mut seen = vec![false; dims.n()];
                    for a in 0..na {
                        for b in 0..nb {
                            for s in 0..ns {
                                let i = dims.flat_index(a, b, s).unwrap();
                                assert!(!seen[i], "collision at ({a},{b},{s})");
                                seen[i] = true;
                                assert_eq!(dims.unflatten(i).unwrap(), (a, b, s));
                            }
                        }
                    }
                    assert!(seen.iter().all(|x| *x));
                }
            }
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(Dims::new(2, 2, 0).is_err());
    }

    #[test]
    fn matching_pennies_is_valid() {
        let spec = GameSpec::matching_pennies();
        assert!(validate_game(&spec).is_ok());
        assert_eq!(spec.rewards(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn validator_flags_bad_row_sum() {
        let spec = GameSpec::matching_pennies();
        let mut transition = spec.transition.clone();
        transition[0] = 0.9;
        let broken = GameSpec::new(spec.dims(), transition, spec.reward.clone(), 0.5).unwrap();
        let report = validate_game(&broken);
        assert_eq!(report.violations.len(), 1);
        let msg = report.violations[0].to_string();
        assert!(msg.contains("row sum"), "got: {msg}");
        assert!(msg.contains("a=0, b=0, s=0"), "got: {msg}");
    }

    #[test]
    fn validator_flags_reward_bound() {
        let spec = GameSpec::matching_pennies();
        let mut reward = spec.reward.clone();
        reward[0] = 1.5;
        let broken = GameSpec::new(spec.dims(), spec.transition.clone(), reward, 0.5).unwrap();
        let report = validate_game(&broken);
        assert_eq!(report.violations.len(), 1);
        let msg = report.violations[0].to_string();
        assert!(msg.contains("reward bound"), "got: {msg}");
        assert!(msg.contains("a=0, b=0, s=0"), "got: {msg}");
    }

    #[test]
    fn uniform_occupation_on_matching_pennies() {
        let model = SamplingModel::uniform(GameSpec::matching_pennies().dims());
        let occ = occupation_frequency(&model).unwrap();
        for &x in &occ.d {
            assert!((x - 0.25).abs() < 1e-15);
        }
        assert_eq!(occ.d_min, occ.d_max);
    }

    #[test]
    fn nonuniform_occupation_flat_order() {
        let dims = Dims::new(2, 2, 1).unwrap();
        let model = SamplingModel::new(dims, vec![1.0], vec![0.9, 0.1], vec![0.5, 0.5]).unwrap();
        let occ = occupation_frequency(&model).unwrap();
        let expect = [0.45, 0.45, 0.05, 0.05];
        for (got, want) in occ.d.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert!((occ.d_min - 0.05).abs() < 1e-15);
        assert!((occ.d_max - 0.45).abs() < 1e-15);
    }

    #[test]
    fn zero_policy_entry_violates_assumption() {
        let dims = Dims::new(2, 2, 1).unwrap();
        let model = SamplingModel::new(dims, vec![1.0], vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            occupation_frequency(&model),
            Err(Error::AssumptionViolation(_))
        ));
    }

    #[test]
    fn occupation_sums_to_one() {
        for seed in 0..20 {
            let dims = Dims::new(3, 2, 4).unwrap();
            let model = SamplingModel::random(dims, seed);
            let occ = occupation_frequency(&model).unwrap();
            let sum: f64 = occ.d.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "seed {seed}: {sum}");
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let dims = dims223();
        let g1 = generate_random_game(dims, 0.8, 42).unwrap();
        let g2 = generate_random_game(dims, 0.8, 42).unwrap();
        assert_eq!(g1, g2);
        let g3 = generate_random_game(dims, 0.8, 43).unwrap();
        assert_ne!(g1, g3);
    }

    #[test]
    fn generator_output_validates_over_100_seeds() {
        let dims = dims223();
        for seed in 0..100 {
            let spec = generate_random_game(dims, 0.8, seed).unwrap();
            let report = validate_game(&spec);
            assert!(report.is_ok(), "seed {seed}: {report}");
        }
    }

    #[test]
    fn generator_rejects_bad_gamma() {
        assert!(generate_random_game(dims223(), 1.0, 0).is_err());
    }

    #[test]
    fn qtable_round_trip_get_set() {
        let dims = dims223();
        let mut q = QTable::zeros(dims);
        q.set(2, 1, 0, -3.5);
        assert_eq!(q.get(2, 1, 0), -3.5);
        assert_eq!(q.values()[dims.flat(1, 0, 2)], -3.5);
        assert_eq!(q.inf_norm(), 3.5);
    }
}
