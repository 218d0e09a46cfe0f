//! Closed-form finite-time error bounds for the learning recursions, plus
//! comparators that check empirical Monte Carlo error curves against them.
//!
//! Every evaluator implements its printed formula verbatim. The `n^(2/3)`
//! factor appearing in the switching-system bounds is reproduced as printed;
//! an `n^(3/2)` variant is exposed behind [`ExponentVariant`] because that
//! exponent is what the `||.||_2 <= sqrt(n) ||.||_inf` step would produce.
//! The chosen variant is recorded in run metadata, never silently swapped.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, QTable, SamplingModel};
use crate::linalg::{vec_inf_norm, vec_two_norm};
use crate::operators::check_alpha;

/// Exponent used on `n` in the slowest-decaying term of the switching-system
/// bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentVariant {
    /// `n^(2/3)`, exactly as printed.
    #[default]
    Printed,
    /// `n^(3/2)`.
    ThreeHalves,
}

impl fmt::Display for ExponentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentVariant::Printed => f.write_str("printed"),
            ExponentVariant::ThreeHalves => f.write_str("three_halves"),
        }
    }
}

/// Inputs shared by all bound evaluators.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub alpha: f64,
    pub gamma: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub n: usize,
    /// `1 - alpha d_min (1 - gamma)`, in (0, 1).
    pub rho: f64,
    /// `9 / (1 - gamma)^2`.
    pub w_max: f64,
    /// `max{1, ||q0||_inf} / (1 - gamma)`.
    pub q_max: f64,
    pub q0_err_two: f64,
    pub q0_err_inf: f64,
    pub variant: ExponentVariant,
}

impl BoundParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        gamma: f64,
        d_min: f64,
        d_max: f64,
        n: usize,
        q0_inf: f64,
        q0_err_two: f64,
        q0_err_inf: f64,
        variant: ExponentVariant,
    ) -> Result<BoundParams> {
        let rho = decay_rate(alpha, d_min, gamma)?;
        if !(d_max > 0.0 && d_max < 1.0) {
            return Err(Error::InvalidParameter {
                name: "d_max",
                reason: format!("{d_max} must lie in (0, 1)"),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "must be positive".into(),
            });
        }
        let (q_max, w_max) = moment_constants(q0_inf, gamma);
        Ok(BoundParams {
            alpha,
            gamma,
            d_min,
            d_max,
            n,
            rho,
            w_max,
            q_max,
            q0_err_two,
            q0_err_inf,
            variant,
        })
    }

    /// Parameters for a concrete run: occupation extremes from the sampling
    /// model, initial errors against the supplied fixed point.
    pub fn for_run(
        spec: &GameSpec,
        model: &SamplingModel,
        alpha: f64,
        q0: &QTable,
        q_star: &QTable,
        variant: ExponentVariant,
    ) -> Result<BoundParams> {
        let occ = crate::game::occupation_frequency(model)?;
        let diff = q0.sub(q_star);
        BoundParams::new(
            alpha,
            spec.discount(),
            occ.d_min,
            occ.d_max,
            spec.dims().n(),
            q0.inf_norm(),
            vec_two_norm(diff.values()),
            vec_inf_norm(diff.values()),
            variant,
        )
    }

    fn n_f(&self) -> f64 {
        self.n as f64
    }

    fn n_variant(&self) -> f64 {
        match self.variant {
            ExponentVariant::Printed => self.n_f().powf(2.0 / 3.0),
            ExponentVariant::ThreeHalves => self.n_f().powf(1.5),
        }
    }
}

/// `rho = 1 - alpha d_min (1 - gamma)`; rejects parameters outside the ranges
/// that keep it in (0, 1).
pub fn decay_rate(alpha: f64, d_min: f64, gamma: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(d_min > 0.0 && d_min < 1.0) {
        return Err(Error::InvalidParameter {
            name: "d_min",
            reason: format!("{d_min} must lie in (0, 1)"),
        });
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} must lie in [0, 1)"),
        });
    }
    let rho = 1.0 - alpha * d_min * (1.0 - gamma);
    debug_assert!(rho > 0.0 && rho < 1.0);
    Ok(rho)
}

/// `(q_max, w_max)` for an initial table and discount.
pub fn constants(q0: &QTable, gamma: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} must lie in [0, 1)"),
        });
    }
    Ok(moment_constants(q0.inf_norm(), gamma))
}

fn moment_constants(q0_inf: f64, gamma: f64) -> (f64, f64) {
    let q_max = q0_inf.max(1.0) / (1.0 - gamma);
    let w_max = 9.0 / ((1.0 - gamma) * (1.0 - gamma));
    (q_max, w_max)
}

/// Mean 2-norm error bound for the fixed-matrix comparison systems:
/// constant step-size floor plus geometric decay at rate `rho`.
pub fn bound_thm1(k: usize, p: &BoundParams) -> f64 {
    let floor = 3.0 * p.alpha.sqrt() * p.n_f() / (p.d_min.sqrt() * (1.0 - p.gamma).powf(1.5));
    floor + p.n_f() * p.q0_err_two * p.rho.powi(k as i32)
}

/// Mean inf-norm error bound for the lower comparison system: step-size
/// floor, geometric term, and a `k rho^(k-1)` coupling term.
pub fn bound_thm2(k: usize, p: &BoundParams) -> f64 {
    let t1 =
        9.0 * p.d_max * p.n_f() * p.alpha.sqrt() / (p.d_min.powf(1.5) * (1.0 - p.gamma).powf(2.5));
    let t2 = 2.0 * p.n_f().powf(1.5) * p.rho.powi(k as i32) / (1.0 - p.gamma);
    let t3 =
        4.0 * p.alpha * p.gamma * p.d_max * p.n_variant() * k as f64 * p.rho.powi(k as i32 - 1)
            / (1.0 - p.gamma);
    t1 + t2 + t3
}

/// The two looser closed forms of [`bound_thm2`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cor1Form {
    /// Replaces `k rho^(k-1)` by its maximum over the `rho^(k/2)` split.
    Eq4,
    /// Further loosens the maximum through logarithm bounds.
    Eq5,
}

pub fn bound_cor1(k: usize, p: &BoundParams, form: Cor1Form) -> f64 {
    let t1 =
        9.0 * p.d_max * p.n_f() * p.alpha.sqrt() / (p.d_min.powf(1.5) * (1.0 - p.gamma).powf(2.5));
    let t2 = 2.0 * p.n_f().powf(1.5) * p.rho.powi(k as i32) / (1.0 - p.gamma);
    let t3 = match form {
        Cor1Form::Eq4 => {
            let ln_rho = p.rho.ln();
            4.0 * p.alpha * p.gamma * p.d_max * p.n_variant() / (1.0 - p.gamma)
                * (-2.0 / ln_rho)
                * p.rho.powf(-1.0 / ln_rho - 1.0)
                * p.rho.powf(k as f64 / 2.0)
        }
        Cor1Form::Eq5 => {
            8.0 * p.gamma * p.d_max * p.n_variant() / (1.0 - p.gamma)
                * (1.0 / (p.d_min * (1.0 - p.gamma)))
                * p.rho.powf(k as f64 / 2.0 - 1.0)
        }
    };
    t1 + t2 + t3
}

/// Mean inf-norm error bound for the upper comparison system; the printed
/// form coincides with [`bound_cor1`] at [`Cor1Form::Eq5`].
pub fn bound_thm4(k: usize, p: &BoundParams) -> f64 {
    let t1 =
        9.0 * p.d_max * p.n_f() * p.alpha.sqrt() / (p.d_min.powf(1.5) * (1.0 - p.gamma).powf(2.5));
    let t2 = 2.0 * p.n_f().powf(1.5) * p.rho.powi(k as i32) / (1.0 - p.gamma);
    let t3 = 8.0 * p.gamma * p.d_max * p.n_variant() / (1.0 - p.gamma)
        * (1.0 / (p.d_min * (1.0 - p.gamma)))
        * p.rho.powf(k as f64 / 2.0 - 1.0);
    t1 + t2 + t3
}

/// Error bound for the learning system itself, merging the two comparison
/// bounds; implemented exactly as printed, including the extra factor 3 in
/// its third term.
pub fn bound_thm5(k: usize, p: &BoundParams) -> f64 {
    let t1 =
        27.0 * p.d_max * p.n_f() * p.alpha.sqrt() / (p.d_min.powf(1.5) * (1.0 - p.gamma).powf(2.5));
    let t2 = 6.0 * p.n_f().powf(1.5) * p.rho.powi(k as i32) / (1.0 - p.gamma);
    let t3 = 24.0 * p.gamma * p.d_max * p.n_variant() / (1.0 - p.gamma)
        * (3.0 / (p.d_min * (1.0 - p.gamma)))
        * p.rho.powf(k as f64 / 2.0 - 1.0);
    t1 + t2 + t3
}

/// Identifies one bound evaluator for reports and CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundId {
    Thm1,
    Thm2,
    Cor1Eq4,
    Cor1Eq5,
    Thm4,
    Thm5,
}

impl BoundId {
    pub fn eval(self, k: usize, p: &BoundParams) -> f64 {
        match self {
            BoundId::Thm1 => bound_thm1(k, p),
            BoundId::Thm2 => bound_thm2(k, p),
            BoundId::Cor1Eq4 => bound_cor1(k, p, Cor1Form::Eq4),
            BoundId::Cor1Eq5 => bound_cor1(k, p, Cor1Form::Eq5),
            BoundId::Thm4 => bound_thm4(k, p),
            BoundId::Thm5 => bound_thm5(k, p),
        }
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BoundId::Thm1 => "bound_thm1",
            BoundId::Thm2 => "bound_thm2",
            BoundId::Cor1Eq4 => "bound_cor1_eq4",
            BoundId::Cor1Eq5 => "bound_cor1_eq5",
            BoundId::Thm4 => "bound_thm4",
            BoundId::Thm5 => "bound_thm5",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundViolation {
    pub k: usize,
    pub margin: f64,
}

/// Per-step margins `bound(k) - empirical[k]` and any that go negative
/// beyond the Monte Carlo tolerance.
#[derive(Debug, Clone)]
pub struct BoundCheckReport {
    pub which: BoundId,
    pub margins: Vec<f64>,
    pub violations: Vec<BoundViolation>,
}

impl BoundCheckReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares a per-step empirical mean error curve against a bound evaluator.
pub fn empirical_vs_bound(
    empirical: &[f64],
    p: &BoundParams,
    which: BoundId,
    mc_tolerance: f64,
) -> Result<BoundCheckReport> {
    if empirical.is_empty() {
        return Err(Error::InvalidParameter {
            name: "empirical",
            reason: "per-step error curve is empty".into(),
        });
    }
    let mut margins = Vec::with_capacity(empirical.len());
    let mut violations = Vec::new();
    for (k, &value) in empirical.iter().enumerate() {
        let margin = which.eval(k, p) - value;
        if margin < -mc_tolerance {
            violations.push(BoundViolation { k, margin });
        }
        margins.push(margin);
    }
    Ok(BoundCheckReport {
        which,
        margins,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Canonical parameter set: the matching-pennies game, alpha = 0.05,
    /// uniform sampling, zero initial table.
    fn mp2_params() -> BoundParams {
        BoundParams::new(
            0.05,
            0.5,
            0.25,
            0.25,
            4,
            0.0,
            8.0_f64.sqrt(),
            2.0,
            ExponentVariant::Printed,
        )
        .unwrap()
    }

    #[test]
    fn decay_rate_arithmetic() {
        assert!((decay_rate(0.1, 0.25, 0.5).unwrap() - 0.9875).abs() < 1e-15);
        assert!((decay_rate(0.1, 0.05, 0.9).unwrap() - 0.9995).abs() < 1e-15);
    }

    #[test]
    fn decay_rate_rejects_boundary_parameters() {
        assert!(decay_rate(0.0, 0.25, 0.5).is_err());
        assert!(decay_rate(1.0, 0.25, 0.5).is_err());
        assert!(decay_rate(0.1, 0.0, 0.5).is_err());
        assert!(decay_rate(0.1, 0.25, 1.0).is_err());
    }

    #[test]
    fn rho_stays_inside_unit_interval() {
        for &alpha in &[0.01, 0.3, 0.99] {
            for &d_min in &[0.001, 0.2, 0.9] {
                for &gamma in &[0.0, 0.5, 0.99] {
                    let rho = decay_rate(alpha, d_min, gamma).unwrap();
                    assert!(rho > 0.0 && rho < 1.0);
                }
            }
        }
    }

    #[test]
    fn moment_constants_examples() {
        let dims = crate::game::Dims::new(2, 2, 1).unwrap();
        let q1 = QTable::constant(dims, 1.0);
        let (q_max, _) = constants(&q1, 0.9).unwrap();
        assert!((q_max - 10.0).abs() < 1e-12);
        let (_, w_max) = constants(&q1, 0.5).unwrap();
        assert!((w_max - 36.0).abs() < 1e-12);
        let q_small = QTable::constant(dims, 0.3);
        let (q_max, _) = constants(&q_small, 0.5).unwrap();
        assert!((q_max - 2.0).abs() < 1e-12); // the max{1, .} clamp
    }

    #[test]
    fn thm1_value_at_zero_matches_hand_arithmetic() {
        let p = mp2_params();
        // 3 sqrt(0.05) 4 / (sqrt(0.25) 0.5^1.5) = 24 sqrt(0.4), plus 4 sqrt(8)
        let expect = 15.178932768808222 + 11.313708498984761;
        assert!((bound_thm1(0, &p) - expect).abs() < 1e-9);
    }

    #[test]
    fn thm1_is_monotone_and_converges_to_its_floor() {
        let p = mp2_params();
        let floor = 3.0 * 0.05_f64.sqrt() * 4.0 / (0.25_f64.sqrt() * 0.5_f64.powf(1.5));
        let mut prev = f64::INFINITY;
        for k in 0..5_000 {
            let v = bound_thm1(k, &p);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        assert!((bound_thm1(50_000, &p) - floor).abs() < 1e-9);
    }

    #[test]
    fn thm2_at_zero_has_no_coupling_term() {
        let p = mp2_params();
        let t1 = 9.0 * 0.25 * 4.0 * 0.05_f64.sqrt() / (0.25_f64.powf(1.5) * 0.5_f64.powf(2.5));
        let t2 = 2.0 * 4.0_f64.powf(1.5) / 0.5;
        assert!((bound_thm2(0, &p) - (t1 + t2)).abs() < 1e-9);
    }

    #[test]
    fn thm2_coupling_term_peaks_near_inverse_log_rho() {
        let p = mp2_params();
        let coupling = |k: usize| {
            4.0 * p.alpha * p.gamma * p.d_max * p.n_variant() * k as f64 * p.rho.powi(k as i32 - 1)
                / (1.0 - p.gamma)
        };
        let mut best_k = 0;
        let mut best = 0.0;
        for k in 0..5_000 {
            let v = coupling(k);
            if v > best {
                best = v;
                best_k = k;
            }
        }
        let stationary = -1.0 / p.rho.ln();
        assert!(
            (best_k as f64 - stationary).abs() <= 1.0,
            "peak at {best_k}, stationary point {stationary}"
        );
    }

    #[test]
    fn thm2_below_eq4_below_eq5_pointwise() {
        let p = mp2_params();
        for k in 0..10_000 {
            let t2 = bound_thm2(k, &p);
            let e4 = bound_cor1(k, &p, Cor1Form::Eq4);
            let e5 = bound_cor1(k, &p, Cor1Form::Eq5);
            assert!(t2 <= e4 + 1e-9, "k={k}: {t2} > {e4}");
            assert!(e4 <= e5 + 1e-9, "k={k}: {e4} > {e5}");
        }
    }

    #[test]
    fn scanned_coupling_max_respects_the_closed_form() {
        for &rho in &[0.9_f64, 0.99, 0.9995] {
            let closed = (-2.0 / rho.ln()) * rho.powf(-1.0 / rho.ln() - 1.0);
            let mut scanned = 0.0_f64;
            for k in 0..1_000_000usize {
                let v = k as f64 * ((k as f64 - 1.0) * rho.ln()).exp();
                scanned = scanned.max(v);
            }
            assert!(scanned <= closed + 1e-9, "rho={rho}: {scanned} > {closed}");
        }
    }

    #[test]
    fn cor1_finite_at_zero() {
        let p = mp2_params();
        for form in [Cor1Form::Eq4, Cor1Form::Eq5] {
            let v = bound_cor1(0, &p, form);
            assert!(v.is_finite() && v > 0.0);
        }
    }

    #[test]
    fn thm4_equals_cor1_eq5() {
        let p = mp2_params();
        for k in (0..10_000).step_by(7) {
            let lhs = bound_thm4(k, &p);
            let rhs = bound_cor1(k, &p, Cor1Form::Eq5);
            assert!((lhs - rhs).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn thm4_decreasing_for_k_at_least_two() {
        let p = mp2_params();
        let mut prev = bound_thm4(2, &p);
        for k in 3..10_000 {
            let v = bound_thm4(k, &p);
            assert!(v <= prev + 1e-12, "k={k}");
            prev = v;
        }
        assert!(bound_thm4(0, &p).is_finite());
    }

    #[test]
    fn thm5_matches_three_times_eq5_on_leading_terms() {
        // As printed, the third term carries an extra factor 3 relative to
        // three times the eq5 coupling term; the first two terms triple
        // exactly and the whole bound dominates 3 * eq5 pointwise.
        let p = mp2_params();
        for k in (0..10_000).step_by(11) {
            let eq5_coupling = 8.0 * p.gamma * p.d_max * p.n_variant() / (1.0 - p.gamma)
                * (1.0 / (p.d_min * (1.0 - p.gamma)))
                * p.rho.powf(k as f64 / 2.0 - 1.0);
            let thm5_coupling = 24.0 * p.gamma * p.d_max * p.n_variant() / (1.0 - p.gamma)
                * (3.0 / (p.d_min * (1.0 - p.gamma)))
                * p.rho.powf(k as f64 / 2.0 - 1.0);
            let lhs = bound_thm5(k, &p) - thm5_coupling;
            let rhs = 3.0 * (bound_cor1(k, &p, Cor1Form::Eq5) - eq5_coupling);
            assert!((lhs - rhs).abs() < 1e-9, "k={k}");
            assert!((thm5_coupling - 9.0 * eq5_coupling).abs() < 1e-9, "k={k}");
            assert!(bound_thm5(k, &p) >= 3.0 * bound_cor1(k, &p, Cor1Form::Eq5) - 1e-12);
        }
    }

    #[test]
    fn thm5_limit_is_its_constant_term() {
        let p = mp2_params();
        let t1 = 27.0 * p.d_max * p.n_f() * p.alpha.sqrt()
            / (p.d_min.powf(1.5) * (1.0 - p.gamma).powf(2.5));
        assert!((bound_thm5(200_000, &p) - t1).abs() < 1e-9);
        assert!(bound_thm5(0, &p).is_finite() && bound_thm5(0, &p) > 0.0);
    }

    #[test]
    fn monotone_from_two_on_the_canonical_set() {
        for alpha in [0.05, 0.1] {
            let p = BoundParams::new(
                alpha,
                0.5,
                0.25,
                0.25,
                4,
                0.0,
                8.0_f64.sqrt(),
                2.0,
                ExponentVariant::Printed,
            )
            .unwrap();
            for id in [
                BoundId::Thm1,
                BoundId::Thm2,
                BoundId::Cor1Eq4,
                BoundId::Cor1Eq5,
                BoundId::Thm4,
                BoundId::Thm5,
            ] {
                let mut prev = id.eval(2, &p);
                for k in 3..5_000 {
                    let v = id.eval(k, &p);
                    assert!(v <= prev + 1e-12, "{id} rises at k={k} (alpha={alpha})");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn exponent_variant_changes_only_the_coupling_term() {
        let printed = mp2_params();
        let mut three_halves = mp2_params();
        three_halves.variant = ExponentVariant::ThreeHalves;
        // n = 4: 4^(3/2) = 8 > 4^(2/3), so the variant bound is larger
        assert!(bound_thm2(10, &three_halves) > bound_thm2(10, &printed));
        // thm1 has no n^(2/3) factor
        assert_eq!(bound_thm1(10, &three_halves), bound_thm1(10, &printed));
    }

    #[test]
    fn empirical_comparator_flags_violations_and_rejects_empty_input() {
        let p = mp2_params();
        assert!(empirical_vs_bound(&[], &p, BoundId::Thm1, 0.0).is_err());
        let curve = vec![1.0; 100];
        let report = empirical_vs_bound(&curve, &p, BoundId::Thm1, 0.0).unwrap();
        assert!(report.is_ok());
        let huge = vec![1.0e9; 3];
        let report = empirical_vs_bound(&huge, &p, BoundId::Thm1, 0.0).unwrap();
        assert_eq!(report.violations.len(), 3);
    }
}
