//! Posterior propriety checks for the single-penalty model with prior
//! `pi(lambda) ∝ lambda^(a-1) exp(-b lambda)`.
//!
//! * necessary (b = 0 only): `a` must lie in `(-(n+1)/2, 0)`;
//! * sufficient, via geometric ergodicity of the Gibbs sampler:
//!   (i) `b > 0` or `a < b = 0`;
//!   (ii) some `s` in `(0, 1]` with `Γ((n+1)/2 + a - s) / Γ((n+1)/2 + a) < 2^s`;
//!   (iii) `k_jj != 0` and `k_ij / k_jj != 1` for all `i != j`.

use serde::{Deserialize, Serialize};

use crate::kernels::{check_condition_iii, DesignMatrix};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Necessary {
    Holds,
    Fails,
    /// `b > 0`: the prior has an exponential tail and the condition does not apply.
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum GammaRatioCondition {
    Holds { s: f64 },
    Fails,
}

impl GammaRatioCondition {
    pub fn holds(&self) -> bool {
        matches!(self, GammaRatioCondition::Holds { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub necessary_ok: Necessary,
    pub sufficient_ok: bool,
    pub condition_i: bool,
    pub condition_ii: GammaRatioCondition,
    pub condition_iii: bool,
    pub condition_iii_violations: Vec<(usize, usize)>,
    /// `f(y | lambda) ~ lambda^(n/2)` near zero when `K` has full row rank,
    /// so with `b = 0` the lambda-marginal needs `a > -n/2`, a tighter bound
    /// than the necessary interval above.
    pub marginal_integrable: bool,
    pub notes: Vec<String>,
}

impl ProprietyReport {
    /// Proven improper: `b = 0` and `a` outside the necessary interval, or
    /// the lambda-marginal diverges at the origin.
    pub fn proven_improper(&self) -> bool {
        self.necessary_ok == Necessary::Fails || !self.marginal_integrable
    }
}

/// Evaluates `Γ(x - s) / Γ(x) < 2^s` with `x = (n+1)/2 + a`, in log form.
/// `false` when `x - s <= 0`.
pub fn gamma_ratio_holds(n: usize, a: f64, s: f64) -> bool {
    let x = (n as f64 + 1.0) / 2.0 + a;
    if !(x - s > 0.0) {
        return false;
    }
    (x - s).lgamma() - x.lgamma() < s * std::f64::consts::LN_2
}

/// Searches `s` in `{0.01, ..., 1.00}` (trying `s = 1` first) and returns the
/// largest feasible value.
pub fn find_gamma_ratio_s(n: usize, a: f64) -> GammaRatioCondition {
    if gamma_ratio_holds(n, a, 1.0) {
        return GammaRatioCondition::Holds { s: 1.0 };
    }
    (1..100)
        .rev()
        .map(|k| k as f64 / 100.0)
        .find(|&s| gamma_ratio_holds(n, a, s))
        .map_or(GammaRatioCondition::Fails, |s| GammaRatioCondition::Holds { s })
}

pub fn check_propriety<T: Real>(a: f64, b: f64, n: usize, k: &DesignMatrix<T>) -> ProprietyReport {
    let mut notes = Vec::new();
    let half = (n as f64 + 1.0) / 2.0;

    let necessary_ok = if b == 0.0 {
        if a > -half && a < 0.0 {
            Necessary::Holds
        } else {
            notes.push(format!(
                "b = 0 requires a in (-(n+1)/2, 0) = ({}, 0); got a = {a}",
                -half
            ));
            Necessary::Fails
        }
    } else {
        Necessary::NotApplicable
    };

    let marginal_integrable = b > 0.0 || a > -(n as f64) / 2.0;
    if !marginal_integrable && necessary_ok == Necessary::Holds {
        notes.push(format!(
            "lambda-marginal diverges at zero: b = 0 with full-row-rank K needs a > -n/2 = {}; got a = {a}",
            -(n as f64) / 2.0
        ));
    }

    let condition_i = b > 0.0 || (a < 0.0 && b == 0.0);
    if !condition_i {
        notes.push("condition (i) needs b > 0, or b = 0 with a < 0".into());
    }

    let condition_ii = find_gamma_ratio_s(n, a);
    if !condition_ii.holds() {
        if half + a - 0.01 <= 0.0 {
            notes.push(format!(
                "condition (ii): Γ((n+1)/2 + a - s) has a pole or negative argument for every grid s ((n+1)/2 + a = {})",
                half + a
            ));
        } else {
            notes.push("condition (ii): no s in (0, 1] satisfies the gamma-ratio bound".into());
        }
    }

    let iii = check_condition_iii(k);
    if !iii.holds {
        notes.push(format!(
            "condition (iii) violated at {} pair(s), e.g. {:?}",
            iii.violations.len(),
            iii.violations.first()
        ));
    }

    ProprietyReport {
        necessary_ok,
        sufficient_ok: condition_i && condition_ii.holds() && iii.holds,
        condition_i,
        condition_ii,
        condition_iii: iii.holds,
        condition_iii_violations: iii.violations,
        marginal_integrable,
        notes,
    }
}
