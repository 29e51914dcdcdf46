//! Problem model: agent holdings, trade offers, feasibility, utilities and the
//! greedy response rule.
//!
//! A trade `T` is written from the offering agent's side: positive components
//! are received by the offering agent, so the transition is
//! `(S_A, S_B) -> (S_A + T, S_B - T)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, TradeError};
use crate::geometry::{add, dot, norm, sub};

/// Slack allowed when checking nonnegativity of post-trade holdings.
pub const FEAS_TOL: f64 = 1e-9;

/// Nonnegative per-category holdings of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AgentState(Vec<f64>);

impl AgentState {
    pub fn new(resources: Vec<f64>) -> Result<Self> {
        if resources.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(TradeError::Domain(format!(
                "holdings must be finite and nonnegative: {resources:?}"
            )));
        }
        Ok(Self(resources))
    }

    pub fn uniform(n: usize, amount: f64) -> Self {
        Self(vec![amount; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for AgentState {
    type Error = TradeError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AgentState> for Vec<f64> {
    fn from(s: AgentState) -> Self {
        s.0
    }
}

/// Signed change vector; positive components go to the offering agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeOffer {
    pub delta: Vec<f64>,
    #[serde(default)]
    pub discrete: bool,
}

impl TradeOffer {
    pub fn continuous(delta: Vec<f64>) -> Self {
        Self { delta, discrete: false }
    }

    /// Integer offer; panics in debug builds if a component is fractional.
    pub fn integer(delta: Vec<f64>) -> Self {
        debug_assert!(delta.iter().all(|x| x.fract() == 0.0), "non-integer offer {delta:?}");
        Self { delta, discrete: true }
    }

    pub fn zeros(n: usize) -> Self {
        Self::continuous(vec![0.0; n])
    }

    pub fn norm(&self) -> f64 {
        norm(&self.delta)
    }

    pub fn is_zero(&self) -> bool {
        self.delta.iter().all(|x| *x == 0.0)
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }
}

/// A differentiable utility over holdings.
pub trait Utility {
    fn dim(&self) -> usize;
    fn evaluate(&self, s: &[f64]) -> f64;
    fn gradient(&self, s: &[f64]) -> Vec<f64>;
}

/// `f(S) = S^T Q S + 2 S^T u` with symmetric negative semi-definite `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadraticRepr", into = "QuadraticRepr")]
pub struct QuadraticUtility {
    n: usize,
    /// Row-major, symmetrized on construction.
    q: Vec<f64>,
    u: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct QuadraticRepr {
    n: usize,
    #[serde(rename = "Q")]
    q: Vec<f64>,
    u: Vec<f64>,
}

impl TryFrom<QuadraticRepr> for QuadraticUtility {
    type Error = TradeError;
    fn try_from(r: QuadraticRepr) -> Result<Self> {
        if r.n * r.n != r.q.len() {
            return Err(TradeError::Dimension { expected: r.n * r.n, got: r.q.len() });
        }
        let rows: Vec<Vec<f64>> = r.q.chunks(r.n.max(1)).map(|c| c.to_vec()).collect();
        QuadraticUtility::new(&rows, r.u)
    }
}

impl From<QuadraticUtility> for QuadraticRepr {
    fn from(f: QuadraticUtility) -> Self {
        Self { n: f.n, q: f.q, u: f.u }
    }
}

impl QuadraticUtility {
    /// Builds the utility from the rows of `Q`, replacing `Q` by `(Q + Q^T)/2`.
    /// Rejects matrices with a positive eigenvalue above `1e-9` (relative).
    pub fn new(q_rows: &[Vec<f64>], u: Vec<f64>) -> Result<Self> {
        let n = u.len();
        check_dim(n, q_rows.len())?;
        let mut q = vec![0.0; n * n];
        for (i, row) in q_rows.iter().enumerate() {
            check_dim(n, row.len())?;
            for j in 0..n {
                q[i * n + j] = 0.5 * (row[j] + q_rows[j][i]);
            }
        }
        if q.iter().chain(&u).any(|x| !x.is_finite()) {
            return Err(TradeError::Domain("non-finite utility coefficients".into()));
        }
        let f = Self { n, q, u };
        let top = f.max_eigenvalue();
        let scale = f.q.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if top > 1e-9 * scale {
            return Err(TradeError::Domain(format!(
                "Q must be negative semi-definite (largest eigenvalue {top})"
            )));
        }
        Ok(f)
    }

    /// Linear utility `2 S^T u`.
    pub fn linear(u: Vec<f64>) -> Self {
        let n = u.len();
        Self { n, q: vec![0.0; n * n], u }
    }

    /// `-S^T S + 2 S^T target`, maximized at `target`.
    pub fn target(target: &[f64]) -> Self {
        let n = target.len();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = -1.0;
        }
        Self { n, q, u: target.to_vec() }
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn q_rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.n).map(|c| c.to_vec()).collect()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn mat_vec(&self, s: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.q[i * self.n..(i + 1) * self.n], s))
            .collect()
    }

    pub fn is_linear(&self) -> bool {
        self.q.iter().all(|x| *x == 0.0)
    }

    /// Largest eigenvalue of the symmetric `Q`, by Jacobi rotations.
    fn max_eigenvalue(&self) -> f64 {
        symmetric_eigenvalues(&self.q, self.n)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Restriction to the coordinates `idx`, the rest frozen at `base`.
    /// Differs from the full utility by a constant, so benefits agree.
    pub fn restrict(&self, idx: &[usize], base: &[f64]) -> Self {
        let n = idx.len();
        let mut q = vec![0.0; n * n];
        let mut u = vec![0.0; n];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                q[a * n + b] = self.q(i, j);
            }
            u[a] = self.u[i]
                + (0..self.n)
                    .filter(|j| !idx.contains(j))
                    .map(|j| self.q(i, j) * base[j])
                    .sum::<f64>();
        }
        Self { n, q, u }
    }

    /// Convex combination `(w_self * self + w_other * other) / (w_self + w_other)`.
    pub fn mix(&self, w_self: f64, other: &Self, w_other: f64) -> Result<Self> {
        check_dim(self.n, other.n)?;
        let total = w_self + w_other;
        let q: Vec<f64> = self
            .q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (w_self * a + w_other * b) / total)
            .collect();
        let u: Vec<f64> = self
            .u
            .iter()
            .zip(&other.u)
            .map(|(a, b)| (w_self * a + w_other * b) / total)
            .collect();
        Ok(Self { n: self.n, q, u })
    }
}

/// Eigenvalues of a small symmetric row-major matrix (cyclic Jacobi).
pub(crate) fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

impl Utility for QuadraticUtility {
    fn dim(&self) -> usize {
        self.n
    }

    fn evaluate(&self, s: &[f64]) -> f64 {
        dot(s, &self.mat_vec(s)) + 2.0 * dot(s, &self.u)
    }

    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        self.mat_vec(s)
            .iter()
            .zip(&self.u)
            .map(|(qs, u)| 2.0 * qs + 2.0 * u)
            .collect()
    }
}

pub fn utility_eval(f: &(impl Utility + ?Sized), s: &AgentState) -> Result<f64> {
    check_dim(f.dim(), s.dim())?;
    Ok(f.evaluate(s.as_slice()))
}

pub fn utility_gradient(f: &(impl Utility + ?Sized), s: &AgentState) -> Result<Vec<f64>> {
    check_dim(f.dim(), s.dim())?;
    Ok(f.gradient(s.as_slice()))
}

/// Which side of the trade a benefit is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Offering,
    Responding,
}

/// Utility change of one agent under `T`: `f(S+T) - f(S)` for the offering
/// side, `f(S-T) - f(S)` for the responding side.
pub fn benefit(f: &(impl Utility + ?Sized), s: &[f64], t: &[f64], side: Side) -> Result<f64> {
    check_dim(f.dim(), s.len())?;
    check_dim(s.len(), t.len())?;
    let post = match side {
        Side::Offering => add(s, t),
        Side::Responding => sub(s, t),
    };
    if post.iter().any(|x| *x < -FEAS_TOL) {
        return Err(TradeError::Infeasible(format!("post-trade holdings {post:?}")));
    }
    Ok(f.evaluate(&post) - f.evaluate(s))
}

/// Unchecked benefit for internal hot loops where feasibility is already known.
pub(crate) fn raw_benefit(f: &(impl Utility + ?Sized), s: &[f64], t: &[f64], side: Side) -> f64 {
    let post = match side {
        Side::Offering => add(s, t),
        Side::Responding => sub(s, t),
    };
    f.evaluate(&post) - f.evaluate(s)
}

/// Reply of the responding agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Accept,
    Reject,
}

/// Greedy response rule. Offers that would drive the responder negative are
/// rejected rather than reported as errors.
pub fn respond(f_b: &(impl Utility + ?Sized), s_b: &[f64], t: &[f64]) -> Response {
    match benefit(f_b, s_b, t, Side::Responding) {
        Ok(b) if b >= 0.0 => Response::Accept,
        _ => Response::Reject,
    }
}

/// Norm and per-category bounds on a single offer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfferLimits {
    pub norm_cap: f64,
    pub per_category_cap: Option<f64>,
}

impl OfferLimits {
    pub fn new(norm_cap: f64, per_category_cap: Option<f64>) -> Result<Self> {
        if !(norm_cap > 0.0) || per_category_cap.is_some_and(|c| !(c > 0.0)) {
            return Err(TradeError::InvalidParameter("offer caps must be positive".into()));
        }
        Ok(Self { norm_cap, per_category_cap })
    }

    /// `d = cap * sqrt(n)` together with the per-category cap.
    pub fn per_category(n: usize, cap: f64) -> Self {
        Self { norm_cap: cap * (n as f64).sqrt(), per_category_cap: Some(cap) }
    }

    /// Only resource feasibility applies.
    pub fn unbounded() -> Self {
        Self { norm_cap: f64::INFINITY, per_category_cap: None }
    }

    /// Largest magnitude any integer component may take.
    pub fn integer_box(&self) -> i64 {
        let c = self.per_category_cap.unwrap_or(self.norm_cap).min(self.norm_cap);
        (c + 1e-9).floor() as i64
    }
}

pub fn is_feasible(s_a: &[f64], s_b: &[f64], t: &[f64], limits: &OfferLimits) -> bool {
    if s_a.len() != t.len() || s_b.len() != t.len() {
        return false;
    }
    let holdings_ok = s_a
        .iter()
        .zip(s_b)
        .zip(t)
        .all(|((a, b), ti)| a + ti >= -FEAS_TOL && b - ti >= -FEAS_TOL);
    let norm_ok = norm(t) <= limits.norm_cap * (1.0 + 1e-12) + 1e-12;
    let cap_ok = limits
        .per_category_cap
        .is_none_or(|c| t.iter().all(|ti| ti.abs() <= c + 1e-12));
    holdings_ok && norm_ok && cap_ok
}

/// Largest `s >= 0` with `s * dir` feasible.
pub fn max_feasible_scale(s_a: &[f64], s_b: &[f64], dir: &[f64], limits: &OfferLimits) -> f64 {
    let mut s = f64::INFINITY;
    let n = norm(dir);
    if n == 0.0 {
        return 0.0;
    }
    s = s.min(limits.norm_cap / n);
    for ((a, b), d) in s_a.iter().zip(s_b).zip(dir) {
        if *d > 0.0 {
            s = s.min(b / d);
            if let Some(c) = limits.per_category_cap {
                s = s.min(c / d);
            }
        } else if *d < 0.0 {
            s = s.min(a / -d);
            if let Some(c) = limits.per_category_cap {
                s = s.min(c / -d);
            }
        }
    }
    s.max(0.0)
}

/// Applies a feasible trade, returning `(S_A + T, S_B - T)`.
pub fn apply_trade(
    s_a: &AgentState,
    s_b: &AgentState,
    t: &TradeOffer,
) -> Result<(AgentState, AgentState)> {
    check_dim(s_a.dim(), t.dim())?;
    check_dim(s_b.dim(), t.dim())?;
    if !is_feasible(s_a.as_slice(), s_b.as_slice(), &t.delta, &OfferLimits::unbounded()) {
        return Err(TradeError::Infeasible(format!("trade {:?} overdraws holdings", t.delta)));
    }
    let a = add(s_a.as_slice(), &t.delta).into_iter().map(|x| x.max(0.0)).collect();
    let b = sub(s_b.as_slice(), &t.delta).into_iter().map(|x| x.max(0.0)).collect();
    Ok((AgentState(a), AgentState(b)))
}

/// Categories in which both agents still hold a positive amount.
pub fn active_categories(s_a: &[f64], s_b: &[f64]) -> Vec<usize> {
    s_a.iter()
        .zip(s_b)
        .enumerate()
        .filter(|(_, (a, b))| **a > 0.0 && **b > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Benefits of one trade to each side and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BenefitRecord {
    pub offering_benefit: f64,
    pub responding_benefit: f64,
    pub societal_benefit: f64,
}

impl BenefitRecord {
    pub fn new(offering_benefit: f64, responding_benefit: f64) -> Self {
        Self {
            offering_benefit,
            responding_benefit,
            societal_benefit: offering_benefit + responding_benefit,
        }
    }
}
