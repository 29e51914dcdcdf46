//! Guarantees attached to a run of `k` rejected refinement offers: the
//! gradient-angle bound, the `kappa` parameter, the implied `eps` for
//! weak Pareto optimality, and a brute-force certificate used to check them.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TradeError};
use crate::geometry::{angle_between, dot, norm};
use crate::model::{is_feasible, raw_benefit, OfferLimits, QuadraticUtility, Side, Utility};
use crate::stcr::shrink_factor;

/// Grids above this many points are refused.
pub const MAX_GRID_POINTS: u128 = 10_000_000;

/// Offset subtracted from `k` in the shrink exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentForm {
    /// `floor((k - n) / (n - 1))`: one quadrant stage, then batches of `n - 1`.
    #[default]
    KMinusN,
    /// `floor((k - 1) / (n - 1))`.
    KMinusOne,
}

/// `floor((k - n) / (n - 1))`; requires `k >= n >= 2`.
pub fn exponent(n: usize, k: usize) -> Result<u32> {
    exponent_with(n, k, ExponentForm::KMinusN)
}

pub fn exponent_with(n: usize, k: usize, form: ExponentForm) -> Result<u32> {
    if n < 2 || k < n {
        return Err(TradeError::InvalidParameter(format!("need k >= n >= 2, got n={n}, k={k}")));
    }
    let shift = match form {
        ExponentForm::KMinusN => n,
        ExponentForm::KMinusOne => 1,
    };
    Ok(((k - shift) / (n - 1)) as u32)
}

/// `sqrt(1 - 1/(2n))^floor((k - n)/(n - 1))`.
pub fn shrink_power(n: usize, k: usize) -> Result<f64> {
    shrink_power_with(n, k, ExponentForm::KMinusN)
}

pub fn shrink_power_with(n: usize, k: usize, form: ExponentForm) -> Result<f64> {
    Ok(shrink_factor(n).powi(exponent_with(n, k, form)? as i32))
}

/// `coef * sqrt(1 - ((kappa^2 - m)/(kappa^2 + m))^2)` with `m = n - 1`, in
/// the algebraically equal form `coef * 2 kappa sqrt(m) / (kappa^2 + m)`.
pub fn kappa_rhs(n: usize, kappa: f64, coef: f64) -> f64 {
    let m = (n - 1) as f64;
    coef * 2.0 * kappa * m.sqrt() / (kappa * kappa + m)
}

/// `kappa >= sqrt(n - 1)` balancing the shrink power against
/// [`kappa_rhs`] with coefficient `2n`.
pub fn solve_kappa(n: usize, k: usize, tol: f64) -> Result<f64> {
    solve_kappa_with(n, k, tol, 2.0 * n as f64)
}

/// [`solve_kappa`] with an explicit right-hand coefficient.
pub fn solve_kappa_with(n: usize, k: usize, tol: f64, coef: f64) -> Result<f64> {
    solve_kappa_general(n, k, tol, coef, ExponentForm::KMinusN)
}

/// The right side falls monotonically from `coef` at `sqrt(n - 1)` towards
/// zero, so bisection applies whenever the shrink power is at most `coef`.
pub fn solve_kappa_general(n: usize, k: usize, tol: f64, coef: f64, form: ExponentForm) -> Result<f64> {
    if !(tol > 0.0) || !(coef > 0.0) {
        return Err(TradeError::InvalidParameter("tol and coef must be positive".into()));
    }
    let target = shrink_power_with(n, k, form)?;
    let lo0 = ((n - 1) as f64).sqrt();
    if target > coef {
        return Err(TradeError::InvalidParameter(format!("no kappa: {target} exceeds coefficient {coef}")));
    }
    let (mut lo, mut hi) = (lo0, 2.0 * lo0);
    while kappa_rhs(n, hi, coef) > target {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let r = kappa_rhs(n, mid, coef);
        if (r - target).abs() <= 0.5 * tol || hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
        if r > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `2 asin(sqrt(1 - 1/(2n))^floor((k - n)/(n - 1)))`.
pub fn angle_bound(n: usize, k: usize) -> Result<f64> {
    Ok(2.0 * shrink_power(n, k)?.clamp(0.0, 1.0).asin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub n: usize,
    pub k: usize,
    pub d: f64,
    pub beta: f64,
    pub lipschitz: f64,
    pub delta: f64,
    pub kappa: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        exponent(self.n, self.k)?;
        let nonneg = [self.d, self.beta, self.lipschitz, self.delta, self.kappa];
        if nonneg.iter().any(|x| !(*x >= 0.0)) {
            return Err(TradeError::InvalidParameter(format!("{self:?}")));
        }
        if self.kappa < ((self.n - 1) as f64).sqrt() - 1e-12 {
            return Err(TradeError::InvalidParameter("kappa below sqrt(n - 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonCase {
    /// Gradients nearly aligned: `delta L sin(angle_bound)`.
    Angle,
    /// Responder gradient small: `d kappa sqrt(n) beta delta`.
    Norm,
}

pub fn epsilon_bounds(p: &TheoryParams, case: EpsilonCase) -> Result<f64> {
    p.validate()?;
    match case {
        EpsilonCase::Angle => {
            if exponent(p.n, p.k)? == 0 {
                return Err(TradeError::VacuousBound(format!(
                    "angle bound is pi at k={} for n={}; no refinement has happened",
                    p.k, p.n
                )));
            }
            Ok(p.delta * p.lipschitz * angle_bound(p.n, p.k)?.sin())
        }
        EpsilonCase::Norm => Ok(p.d * p.kappa * (p.n as f64).sqrt() * p.beta * p.delta),
    }
}

/// `2 max |eig(Q)|`, by power iteration on `Q^2`.
pub fn smoothness_constant(f: &QuadraticUtility) -> f64 {
    let n = f.dim();
    if f.is_linear() {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    // two starts guard against a start orthogonal to the top eigenvector
    for start in 0..2 {
        let mut v: Vec<f64> = (0..n).map(|i| if start == 0 { 1.0 } else { 1.0 / (i + 1) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 } }).collect();
        let mut lambda = 0.0;
        for _ in 0..100_000 {
            let w = f.mat_vec(&f.mat_vec(&v));
            let len = norm(&w);
            if len == 0.0 {
                break;
            }
            let next = dot(&v, &w) / dot(&v, &v);
            v = w.iter().map(|x| x / len).collect();
            if (next - lambda).abs() <= 1e-12 * next.abs().max(1e-300) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        best = best.max(lambda);
    }
    2.0 * best.max(0.0).sqrt()
}

/// Refinement disjunction evaluated at a terminal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementCertificate {
    pub n: usize,
    pub k: usize,
    pub angle: f64,
    pub angle_bound: f64,
    pub grad_b_norm: f64,
    pub norm_bound: f64,
    pub kappa: f64,
}

impl RefinementCertificate {
    pub fn angle_holds(&self) -> bool {
        self.angle < self.angle_bound
    }

    pub fn norm_holds(&self) -> bool {
        self.grad_b_norm <= self.norm_bound
    }

    pub fn holds(&self) -> bool {
        self.angle_holds() || self.norm_holds()
    }
}

/// After `k` rejected refinement offers: either the gradients are within
/// [`angle_bound`] of each other or `|grad f_B| <= kappa sqrt(n) beta d`.
pub fn refinement_certificate(
    k: usize,
    grad_a: &[f64],
    grad_b: &[f64],
    beta: f64,
    d: f64,
) -> Result<RefinementCertificate> {
    let n = grad_a.len();
    let kappa = solve_kappa(n, k, 1e-9)?;
    let angle = if norm(grad_a) == 0.0 || norm(grad_b) == 0.0 {
        0.0
    } else {
        angle_between(grad_a, grad_b)?
    };
    Ok(RefinementCertificate {
        n,
        k,
        angle,
        angle_bound: angle_bound(n, k)?,
        grad_b_norm: norm(grad_b),
        norm_bound: kappa * (n as f64).sqrt() * beta * d,
        kappa,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoWitness {
    pub trade: Vec<f64>,
    pub offering_benefit: f64,
    pub responding_benefit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoCertificate {
    pub certified: bool,
    pub witness: Option<ParetoWitness>,
    pub points_checked: u64,
}

/// Exhaustive search of the trade grid with spacing `grid_step` inside the
/// offer caps for a feasible trade improving both agents by more than `eps`.
pub fn pareto_certify(
    s_a: &[f64],
    s_b: &[f64],
    f_a: &dyn Utility,
    f_b: &dyn Utility,
    eps: f64,
    limits: &OfferLimits,
    grid_step: f64,
) -> Result<ParetoCertificate> {
    if !(grid_step > 0.0) {
        return Err(TradeError::InvalidParameter("grid_step must be positive".into()));
    }
    let n = s_a.len();
    let reach = limits.per_category_cap.unwrap_or(limits.norm_cap).min(limits.norm_cap);
    if !reach.is_finite() {
        return Err(TradeError::InvalidParameter("certification needs a finite cap".into()));
    }
    let steps = (reach / grid_step + 1e-9).floor() as i64;
    let points = (2 * steps as u128 + 1).checked_pow(n as u32).unwrap_or(u128::MAX);
    if points > MAX_GRID_POINTS {
        return Err(TradeError::GridTooLarge { points, limit: MAX_GRID_POINTS });
    }
    let mut checked = 0u64;
    for idx in (0..n).map(|_| -steps..=steps).multi_cartesian_product() {
        let t: Vec<f64> = idx.iter().map(|&i| i as f64 * grid_step).collect();
        if !is_feasible(s_a, s_b, &t, limits) {
            continue;
        }
        checked += 1;
        let a = raw_benefit(f_a, s_a, &t, Side::Offering);
        if a <= eps {
            continue;
        }
        let b = raw_benefit(f_b, s_b, &t, Side::Responding);
        if b > eps {
            return Ok(ParetoCertificate {
                certified: false,
                witness: Some(ParetoWitness { trade: t, offering_benefit: a, responding_benefit: b }),
                points_checked: checked,
            });
        }
    }
    Ok(ParetoCertificate { certified: true, witness: None, points_checked: checked })
}
