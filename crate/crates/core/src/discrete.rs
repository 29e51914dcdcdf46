//! Cone refinement with integer offers.
//!
//! Integer offers cannot be made exactly orthogonal, so the candidate set is
//! tracked explicitly: on the hyperplane `{tau + M x}` (the chart) the cone's
//! cross-section is bounded by a cube and every rejected offer `T` adds the
//! trace of `<T, x> >= 0`. The polytope is enclosed by a sphere built from
//! its two farthest corners, the sphere by a cone, and that cone replaces the
//! current one once it is no wider. Otherwise the next offer bisects the
//! farthest pair.

use std::f64::consts::FRAC_PI_2;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TradeError};
use crate::geometry::{dot, norm, normalize, orthonormal_extension, scale, sub, GradientCone, Halfspace};
use crate::model::Response;
use crate::negotiation::{AlgoEvent, Negotiator, Proposal, Stage, TerminalReason, View};
use crate::stcr::{ensure_beneficial, echo_worthy, quadrant_offer, quadrant_sign, stage1_heuristic, StcrConfig};

/// Corners must satisfy every constraint to within this slack.
pub const CORNER_TOL: f64 = 1e-8;
/// Corners closer than this are merged.
pub const CORNER_DEDUP: f64 = 1e-7;
/// Multiplier applied to `theta` while the polytope is empty.
pub const EXPANSION_FACTOR: f64 = 1.1;

/// Orthonormal coordinates on the hyperplane through `tau` normal to `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneChart {
    tau: Vec<f64>,
    /// `n - 1` orthonormal vectors spanning the complement of `tau`.
    basis: Vec<Vec<f64>>,
}

impl HyperplaneChart {
    pub fn new(tau: &[f64]) -> Result<Self> {
        let tau = normalize(tau)?;
        let basis = orthonormal_extension(std::slice::from_ref(&tau), tau.len())?;
        Ok(Self { tau, basis })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Full dimension `n`; chart coordinates have `n - 1` components.
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    /// `M x`.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (xi, v) in x.iter().zip(&self.basis) {
            for k in 0..out.len() {
                out[k] += xi * v[k];
            }
        }
        out
    }

    /// `tau + M x`.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut p = self.embed(x);
        for (pk, tk) in p.iter_mut().zip(&self.tau) {
            *pk += tk;
        }
        p
    }

    /// `M^T p`.
    pub fn project(&self, p: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|v| dot(v, p)).collect()
    }

    /// Chart trace of `<a, y> >= 0`: `(M^T a)^T x >= -<a, tau>`. `None` when
    /// `a` is parallel to `tau`, in which case the constraint is constant.
    pub fn trace(&self, a: &[f64]) -> Option<Halfspace> {
        let g = self.project(a);
        if norm(&g) <= 1e-12 * norm(a).max(1.0) {
            return None;
        }
        Some(Halfspace { normal: g, offset: -dot(a, &self.tau) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientPolytope {
    pub chart: HyperplaneChart,
    pub cube_halfspaces: Vec<Halfspace>,
    pub offer_halfspaces: Vec<Halfspace>,
    /// Set when some cut is parallel to `tau` and excludes the whole chart.
    pub contradicted: bool,
}

impl GradientPolytope {
    pub fn halfspaces(&self) -> impl Iterator<Item = &Halfspace> {
        self.cube_halfspaces.iter().chain(&self.offer_halfspaces)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        !self.contradicted && self.halfspaces().all(|h| h.contains(x, tol))
    }
}

/// Cube `|x_i| <= tan(theta)` cut by the traces of `<a, y> >= 0` for each
/// full-space normal `a` (rejected offers, negated counteroffers).
pub fn build_polytope(theta: f64, cuts: &[Vec<f64>], chart: &HyperplaneChart) -> Result<GradientPolytope> {
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return Err(TradeError::Domain(format!("polytope needs theta in (0, pi/2), got {theta}")));
    }
    let m = chart.dim() - 1;
    let t = theta.tan();
    let mut cube = Vec::with_capacity(2 * m);
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        cube.push(Halfspace { normal: e.clone(), offset: -t });
        cube.push(Halfspace { normal: scale(&e, -1.0), offset: -t });
    }
    let mut offers = Vec::new();
    let mut contradicted = false;
    for a in cuts {
        match chart.trace(a) {
            Some(h) => offers.push(h),
            None => contradicted |= dot(a, chart.tau()) < 0.0,
        }
    }
    Ok(GradientPolytope { chart: chart.clone(), cube_halfspaces: cube, offer_halfspaces: offers, contradicted })
}

/// Solves the square system `A x = b` by Gaussian elimination with partial
/// pivoting; `None` when `A` is numerically singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        let scale = a[piv].iter().fold(0.0f64, |s, x| s.max(x.abs()));
        if a[piv][col].abs() <= 1e-12 * scale.max(1e-300) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (off, r) in rest.iter_mut().enumerate() {
            let f = r[col] / pivot_row[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + off] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Vertices of the polytope, sorted lexicographically; empty when the
/// polytope is empty.
pub fn polytope_corners(p: &GradientPolytope) -> Vec<Vec<f64>> {
    if p.contradicted {
        return Vec::new();
    }
    let hs: Vec<&Halfspace> = p.halfspaces().collect();
    let m = p.chart.dim() - 1;
    let mut corners: Vec<Vec<f64>> = Vec::new();
    for subset in (0..hs.len()).combinations(m) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| hs[i].normal.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| hs[i].offset).collect();
        let Some(x) = solve(a, b) else { continue };
        if !hs.iter().all(|h| h.contains(&x, CORNER_TOL)) {
            continue;
        }
        if corners.iter().all(|c| norm(&sub(c, &x)) > CORNER_DEDUP) {
            corners.push(x);
        }
    }
    corners.sort_by(|a, b| a.partial_cmp(b).expect("finite corners"));
    corners
}

/// Drops offer halfspaces that are not tight at any corner.
pub fn prune_redundant(p: &mut GradientPolytope, corners: &[Vec<f64>]) -> Vec<bool> {
    let keep: Vec<bool> = p
        .offer_halfspaces
        .iter()
        .map(|h| {
            let scale = norm(&h.normal).max(1.0);
            corners.iter().any(|c| h.slack(c).abs() <= 1e-7 * scale)
        })
        .collect();
    let mut it = keep.iter();
    p.offer_halfspaces.retain(|_| *it.next().expect("one flag per halfspace"));
    keep
}

/// Pair at maximal distance; the first such pair in index order, which for
/// sorted corners is the lexicographically smallest.
pub fn farthest_pair(corners: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if corners.len() < 2 {
        return Err(TradeError::Degenerate(format!("{} corners", corners.len())));
    }
    let mut best = (0, 1, f64::NEG_INFINITY);
    for i in 0..corners.len() {
        for j in i + 1..corners.len() {
            let d = norm(&sub(&corners[i], &corners[j]));
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    Ok((corners[best.0].clone(), corners[best.1].clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnclosingSphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Sphere centered between the farthest pair with radius `sqrt(3)/2` times
/// their distance. Any point within that distance of both endpoints lies
/// inside it, hence so does every corner.
pub fn enclosing_sphere(x1: &[f64], x2: &[f64]) -> EnclosingSphere {
    let center = x1.iter().zip(x2).map(|(a, b)| 0.5 * (a + b)).collect();
    let radius = 0.5 * 3f64.sqrt() * norm(&sub(x1, x2));
    EnclosingSphere { center, radius }
}

/// Angle between `(1, a, b)` and `(1, c, 0)`.
fn lifted_angle(a: f64, b: f64, c: f64) -> f64 {
    let cross = ((b * c).powi(2) + b * b + (c - a).powi(2)).sqrt();
    cross.atan2(1.0 + a * c)
}

/// Narrowest cone around `tau + M c` containing the lifted sphere.
///
/// The axis goes through the lifted center. By rotational symmetry about
/// that axis the widest boundary point lies in the plane spanned by `tau`
/// and `M c`, where the angle is a function of a single parameter; it is
/// maximized by a dense scan followed by golden-section refinement.
pub fn sphere_to_cone(s: &EnclosingSphere, chart: &HyperplaneChart) -> Result<GradientCone> {
    let c = norm(&s.center);
    let r = s.radius;
    let axis = chart.lift(&s.center);
    if r == 0.0 {
        return GradientCone::new(&axis, 0.0);
    }
    let f = |phi: f64| lifted_angle(c + r * phi.cos(), r * phi.sin(), c);
    const STEPS: usize = 4096;
    let h = std::f64::consts::PI / STEPS as f64;
    let k = (0..=STEPS).max_by(|&i, &j| f(i as f64 * h).total_cmp(&f(j as f64 * h))).expect("non-empty scan");
    let (mut lo, mut hi) = (((k as f64) - 1.0) * h, ((k as f64) + 1.0) * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let angle = f(0.5 * (lo + hi)).max(f(k as f64 * h));
    if angle > FRAC_PI_2 {
        return Err(TradeError::Degenerate(format!("sphere spans {angle} rad around its axis")));
    }
    GradientCone::new(&axis, angle)
}

/// Integer candidates for rounding a real offer `target`: the whole cap box
/// for `n <= 4`, otherwise `+-1` neighbourhoods of the nearest integer point
/// at 1, 2 and 4 times the target.
fn rounding_candidates(target: &[f64], cap: i64) -> Vec<Vec<f64>> {
    let n = target.len();
    if n <= 4 {
        return (0..n)
            .map(|_| -cap..=cap)
            .multi_cartesian_product()
            .map(|v| v.into_iter().map(|x| x as f64).collect())
            .collect();
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mult in [1.0, 2.0, 4.0] {
        let base: Vec<i64> = target.iter().map(|x| (x * mult).round() as i64).collect();
        for delta in (0..n).map(|_| -1i64..=1).multi_cartesian_product() {
            let v: Vec<f64> = base
                .iter()
                .zip(&delta)
                .map(|(b, d)| (b + d).clamp(-cap, cap) as f64)
                .collect();
            out.push(v);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out.dedup();
    out
}

/// Integer offer closest in angle to `target` among the feasible,
/// offering-beneficial candidates accepted by `keep`.
pub fn round_offer(target: &[f64], view: &View<'_>, keep: impl Fn(&[f64]) -> bool) -> Option<Vec<f64>> {
    let g = view.grad_a();
    let tn = norm(target);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in rounding_candidates(target, view.limits.integer_box()) {
        let cn = norm(&cand);
        if cn == 0.0 || dot(&cand, &g) < 0.0 || !view.feasible(&cand) || !keep(&cand) {
            continue;
        }
        let cos = dot(&cand, target) / (cn * tn);
        if best.as_ref().is_none_or(|(b, _)| cos > *b) {
            best = Some((cos, cand));
        }
    }
    best.map(|(_, v)| v)
}

/// Integer offer whose rejection cut separates `x1` from `x2`.
///
/// The real bisector of the pair in the chart is `a^T x = b`; its lift is the
/// offer direction `M a - b tau`, signed to benefit the offering agent. The
/// rounded offer is the candidate closest in angle whose own cut still
/// separates the pair strictly.
pub fn bisecting_offer(x1: &[f64], x2: &[f64], chart: &HyperplaneChart, view: &View<'_>) -> Option<Vec<f64>> {
    let diff = sub(x1, x2);
    let dist = norm(&diff);
    if dist == 0.0 {
        return None;
    }
    let a = scale(&diff, 1.0 / dist);
    let b = (dot(x1, x1) - dot(x2, x2)) / (2.0 * dist);
    let ma = chart.embed(&a);
    let mut lifted: Vec<f64> = ma.iter().zip(chart.tau()).map(|(m, t)| m - b * t).collect();
    lifted = normalize(&lifted).ok()?;
    if dot(&lifted, &view.grad_a()) < 0.0 {
        lifted = scale(&lifted, -1.0);
    }
    let target = scale(&lifted, view.limits.norm_cap);
    let p1 = chart.lift(x1);
    let p2 = chart.lift(x2);
    round_offer(&target, view, |t| {
        let s1 = dot(t, &p1);
        let s2 = dot(t, &p2);
        s1 * s2 < 0.0 && s1.abs() > 1e-12 && s2.abs() > 1e-12
    })
}

/// Outcome of one polytope update.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    /// Cone replaced; the caller clears the cuts.
    Adopted { cone: GradientCone, corners: usize, radius: f64 },
    /// Farthest pair to bisect with the next offer.
    Bisect { x1: Vec<f64>, x2: Vec<f64>, corners: usize, radius: f64 },
    /// Polytope is empty at this angle.
    Empty,
    /// Polytope shrank to a point.
    Collapsed { direction: Vec<f64> },
}

/// One pass of the discrete update: rebuild the polytope from `cuts`, prune
/// redundant cuts, and either adopt the enclosing cone or ask for a
/// bisection. `has_cuts` gates adoption so an uncut cube never replaces its
/// own cone.
pub fn discrete_refine_step(cone: &GradientCone, chart: &HyperplaneChart, cuts: &mut Vec<Vec<f64>>) -> Result<StepOutcome> {
    let mut poly = build_polytope(cone.angle(), cuts, chart)?;
    let corners = polytope_corners(&poly);
    if corners.is_empty() {
        return Ok(StepOutcome::Empty);
    }
    // keep cuts tight at some corner; parallel-to-tau ones never are
    let traced: Vec<usize> = (0..cuts.len()).filter(|&i| chart.trace(&cuts[i]).is_some()).collect();
    let keep = prune_redundant(&mut poly, &corners);
    let mut drop = vec![false; cuts.len()];
    for (flag, &i) in keep.iter().zip(&traced) {
        drop[i] = !flag;
    }
    for i in 0..cuts.len() {
        if chart.trace(&cuts[i]).is_none() {
            drop[i] = true;
        }
    }
    let mut it = drop.iter();
    cuts.retain(|_| !*it.next().expect("one flag per cut"));
    if corners.len() < 2 {
        return Ok(StepOutcome::Collapsed { direction: chart.lift(&corners[0]) });
    }
    let (x1, x2) = farthest_pair(&corners)?;
    let sphere = enclosing_sphere(&x1, &x2);
    if !cuts.is_empty() {
        if let Ok(cand) = sphere_to_cone(&sphere, chart) {
            if cand.angle() <= cone.angle() {
                return Ok(StepOutcome::Adopted { cone: cand, corners: corners.len(), radius: sphere.radius });
            }
        }
    }
    Ok(StepOutcome::Bisect { x1, x2, corners: corners.len(), radius: sphere.radius })
}

/// Cone spanned by a probed orthant: the orthant's center ray, opened just
/// enough to contain the whole orthant.
pub fn quadrant_cone(quadrant: &[f64]) -> Result<GradientCone> {
    let n = quadrant.len();
    let signs: Vec<f64> = quadrant.iter().map(|q| if *q >= 0.0 { 1.0 } else { -1.0 }).collect();
    GradientCone::new(&signs, (1.0 / (n as f64).sqrt()).acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Quadrant { next: usize },
    Refine,
}

/// Integer-offer cone refinement negotiator.
#[derive(Debug, Clone)]
pub struct DiscreteStcr {
    cfg: StcrConfig,
    n: usize,
    phase: Phase,
    quadrant: Vec<f64>,
    cone: Option<GradientCone>,
    chart: Option<HyperplaneChart>,
    /// Full-space normals `a` of the recorded constraints `<a, x> >= 0`.
    cuts: Vec<Vec<f64>>,
    t_prev: Option<Vec<f64>>,
    heuristic_due: bool,
    echo: Option<Vec<f64>>,
    last_stage: Option<Stage>,
    rejections: usize,
    events: Vec<AlgoEvent>,
}

impl DiscreteStcr {
    pub fn new(cfg: StcrConfig) -> Self {
        Self {
            cfg,
            n: 0,
            phase: Phase::Quadrant { next: 0 },
            quadrant: Vec::new(),
            cone: None,
            chart: None,
            cuts: Vec::new(),
            t_prev: None,
            heuristic_due: false,
            echo: None,
            last_stage: None,
            rejections: 0,
            events: Vec::new(),
        }
    }

    pub fn refinement_rejections(&self) -> usize {
        self.rejections
    }

    pub fn cuts(&self) -> &[Vec<f64>] {
        &self.cuts
    }

    fn restart_refinement(&mut self) {
        self.phase = Phase::Quadrant { next: 0 };
        self.quadrant = vec![0.0; self.n];
        self.cone = None;
        self.chart = None;
    }

    fn set_cone(&mut self, cone: GradientCone) -> bool {
        match HyperplaneChart::new(cone.direction()) {
            Ok(chart) => {
                self.chart = Some(chart);
                self.cone = Some(cone);
                true
            }
            Err(_) => false,
        }
    }
}

impl Negotiator for DiscreteStcr {
    fn name(&self) -> &'static str {
        if self.cfg.use_prev_trade_heuristic {
            "stcr"
        } else {
            "stcr-noheur"
        }
    }

    fn reset(&mut self, n: usize) {
        *self = Self { n, quadrant: vec![0.0; n], ..Self::new(self.cfg.clone()) };
    }

    fn propose(&mut self, view: &View<'_>) -> Proposal {
        if let Some(e) = self.echo.take() {
            self.last_stage = Some(Stage::Counteroffer);
            return Proposal::Offer { delta: e, stage: Stage::Counteroffer };
        }
        if std::mem::take(&mut self.heuristic_due) && self.cfg.use_prev_trade_heuristic {
            if let Some(t) = stage1_heuristic(self.t_prev.as_deref(), view) {
                self.last_stage = Some(Stage::Heuristic);
                return Proposal::Offer { delta: t, stage: Stage::Heuristic };
            }
        }
        let mut guard = 0;
        loop {
            guard += 1;
            if guard > 1000 {
                self.events.push(AlgoEvent::Note { message: "refinement loop did not settle".into() });
                return Proposal::Stop(TerminalReason::NoFeasibleOffer);
            }
            match self.phase {
                Phase::Quadrant { next } if next == self.n => {
                    let Ok(cone) = quadrant_cone(&self.quadrant) else {
                        return Proposal::Stop(TerminalReason::NoFeasibleOffer);
                    };
                    self.events.push(AlgoEvent::QuadrantInitialized {
                        tau: cone.direction().to_vec(),
                        theta: cone.angle(),
                    });
                    if !self.set_cone(cone) {
                        return Proposal::Stop(TerminalReason::NoFeasibleOffer);
                    }
                    self.phase = Phase::Refine;
                }
                Phase::Quadrant { next } => {
                    let sign = quadrant_sign(&view.grad_a(), next);
                    if let Some(t) = quadrant_offer(next, view, &self.cfg) {
                        self.last_stage = Some(Stage::Quadrant);
                        return Proposal::Offer { delta: t, stage: Stage::Quadrant };
                    }
                    self.events.push(AlgoEvent::Note {
                        message: format!("axis {next} has no feasible beneficial probe"),
                    });
                    self.quadrant[next] = sign;
                    self.phase = Phase::Quadrant { next: next + 1 };
                }
                Phase::Refine => {
                    let cone = self.cone.clone().expect("refine phase has a cone");
                    let chart = self.chart.clone().expect("refine phase has a chart");
                    if cone.angle() < self.cfg.angle_threshold {
                        return Proposal::Stop(TerminalReason::AngleThreshold);
                    }
                    let outcome = match discrete_refine_step(&cone, &chart, &mut self.cuts) {
                        Ok(o) => o,
                        Err(e) => {
                            self.events.push(AlgoEvent::Note { message: e.to_string() });
                            return Proposal::Stop(TerminalReason::NoFeasibleOffer);
                        }
                    };
                    match outcome {
                        StepOutcome::Empty => {
                            let widened = cone.angle() * EXPANSION_FACTOR;
                            self.events.push(AlgoEvent::Expanded {
                                theta_before: cone.angle(),
                                theta_after: widened.min(FRAC_PI_2),
                            });
                            if widened >= FRAC_PI_2 {
                                self.cuts.clear();
                                self.restart_refinement();
                            } else {
                                let c = GradientCone::new(cone.direction(), widened).expect("valid angle");
                                self.cone = Some(c);
                            }
                        }
                        StepOutcome::Collapsed { direction } => {
                            let c = GradientCone::new(&direction, 0.0).expect("nonzero lift");
                            self.events.push(AlgoEvent::ConeAdopted {
                                theta_before: cone.angle(),
                                theta_after: 0.0,
                                corners: 1,
                                radius: 0.0,
                            });
                            self.cone = Some(c);
                            return Proposal::Stop(TerminalReason::AngleThreshold);
                        }
                        StepOutcome::Adopted { cone: cand, corners, radius } => {
                            self.events.push(AlgoEvent::ConeAdopted {
                                theta_before: cone.angle(),
                                theta_after: cand.angle(),
                                corners,
                                radius,
                            });
                            if cand.angle() < self.cfg.angle_threshold {
                                self.cone = Some(cand);
                                return Proposal::Stop(TerminalReason::AngleThreshold);
                            }
                            if !self.set_cone(cand) {
                                return Proposal::Stop(TerminalReason::NoFeasibleOffer);
                            }
                            self.cuts.clear();
                        }
                        StepOutcome::Bisect { x1, x2, .. } => {
                            let offer = bisecting_offer(&x1, &x2, &chart, view).and_then(|t| {
                                ensure_beneficial(&t, view.f_a, view.s_a, true, 0.0)
                            });
                            return match offer {
                                Some(t) => {
                                    self.last_stage = Some(Stage::Bisecting);
                                    Proposal::Offer { delta: t, stage: Stage::Bisecting }
                                }
                                None => Proposal::Stop(TerminalReason::NoFeasibleOffer),
                            };
                        }
                    }
                }
            }
        }
    }

    fn observe(&mut self, _view: &View<'_>, offer: &[f64], response: Response) {
        let stage = self.last_stage.take();
        match response {
            Response::Accept => {
                self.t_prev = Some(offer.to_vec());
                self.heuristic_due = true;
                self.echo = None;
                self.rejections = 0;
                self.cuts.clear();
                let warm = match (&self.cone, self.phase) {
                    (Some(c), Phase::Refine) if self.cfg.use_cone_warm_start => Some(c.clone()),
                    _ => None,
                };
                match warm {
                    Some(c) => {
                        let theta = c.angle() + self.cfg.cone_expansion_rate * norm(offer);
                        let reinit = theta >= FRAC_PI_2 - 1e-9;
                        self.events.push(AlgoEvent::WarmStart {
                            theta_before: c.angle(),
                            theta_after: theta.min(FRAC_PI_2),
                            reinit,
                        });
                        if reinit || !self.set_cone(GradientCone::new(c.direction(), theta).expect("valid angle")) {
                            self.restart_refinement();
                        }
                    }
                    None => self.restart_refinement(),
                }
            }
            Response::Reject => match stage {
                Some(Stage::Quadrant) => {
                    if let Phase::Quadrant { next } = self.phase {
                        self.quadrant[next] = if offer[next] >= 0.0 { 1.0 } else { -1.0 };
                        self.phase = Phase::Quadrant { next: next + 1 };
                    }
                    self.rejections += 1;
                }
                Some(Stage::Bisecting) => {
                    self.cuts.push(offer.to_vec());
                    self.rejections += 1;
                }
                Some(Stage::Counteroffer) => self.cuts.push(offer.to_vec()),
                _ => {}
            },
        }
    }

    fn counteroffer(&mut self, view: &View<'_>, counter: &[f64]) {
        if norm(counter) == 0.0 {
            return;
        }
        self.cuts.push(scale(counter, -1.0));
        if echo_worthy(view, counter) {
            self.echo = Some(counter.to_vec());
        } else {
            self.events.push(AlgoEvent::Note { message: "counteroffer not beneficial".into() });
        }
    }

    fn cone(&self) -> Option<&GradientCone> {
        self.cone.as_ref()
    }

    fn take_events(&mut self) -> Vec<AlgoEvent> {
        std::mem::take(&mut self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_between;
    use crate::model::{OfferLimits, QuadraticUtility, Utility};
    use std::f64::consts::FRAC_PI_4;

    fn chart_z() -> HyperplaneChart {
        HyperplaneChart::new(&[0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn chart_round_trip() {
        let chart = HyperplaneChart::new(&[1.0, 2.0, 2.0]).unwrap();
        let x = [0.3, -1.2];
        let back = chart.project(&sub(&chart.lift(&x), chart.tau()));
        assert!(norm(&sub(&back, &x)) < 1e-12);
        for v in chart.basis() {
            assert!(dot(v, chart.tau()).abs() < 1e-12);
        }
    }

    #[test]
    fn polytope_segment_in_two_dimensions() {
        let chart = HyperplaneChart::new(&[0.0, 1.0]).unwrap();
        let p = build_polytope(FRAC_PI_4, &[], &chart).unwrap();
        assert_eq!(p.cube_halfspaces.len(), 2);
        let corners = polytope_corners(&p);
        assert_eq!(corners.len(), 2);
        assert!((corners[0][0] + 1.0).abs() < 1e-12 && (corners[1][0] - 1.0).abs() < 1e-12);
        assert!(build_polytope(FRAC_PI_2, &[], &chart).is_err());
    }

    #[test]
    fn offer_halfspace_offsets() {
        let chart = chart_z();
        // orthogonal to tau: central cut
        let h = chart.trace(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(h.offset, 0.0);
        // 60 degrees from tau with norm 2: offset -2 cos 60 = -1
        let t = [3f64.sqrt(), 0.0, 1.0];
        let h = chart.trace(&t).unwrap();
        assert!((h.offset + 1.0).abs() < 1e-12);
        // substitution check: <T, tau + M x> >= 0  <=>  g^T x >= offset
        for x in [[0.5, 0.2], [-0.7, 1.0], [-0.5773, 0.0]] {
            let full = dot(&t, &chart.lift(&x));
            assert!((full - h.slack(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn square_corners_with_and_without_cut() {
        let chart = chart_z();
        let p = build_polytope(FRAC_PI_4, &[], &chart).unwrap();
        assert_eq!(polytope_corners(&p).len(), 4);
        // a cut whose trace is x + y >= 0 in chart coordinates
        let m = chart.basis();
        let cut: Vec<f64> = (0..3).map(|k| m[0][k] + m[1][k]).collect();
        let p = build_polytope(FRAC_PI_4, &[cut], &chart).unwrap();
        let corners = polytope_corners(&p);
        // oracle: the half-square is the triangle (1,1), (-1,1), (1,-1)
        let mut expected = vec![vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]];
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(corners.len(), 3);
        for (c, e) in corners.iter().zip(&expected) {
            assert!(norm(&sub(c, e)) < 1e-9);
        }
        // contradictory cuts empty the square
        let a: Vec<f64> = scale(&m[0], 1.0).iter().zip(chart.tau()).map(|(x, t)| x - 2.0 * t).collect();
        let b: Vec<f64> = scale(&m[0], -1.0).iter().zip(chart.tau()).map(|(x, t)| x - 2.0 * t).collect();
        let p = build_polytope(FRAC_PI_4, &[a, b], &chart).unwrap();
        assert!(polytope_corners(&p).is_empty());
    }

    /// Grid oracle for the cut square: every feasible grid point lies in the
    /// convex hull of the enumerated corners (checked via the triangle's
    /// barycentric coordinates).
    #[test]
    fn corners_agree_with_grid_oracle() {
        let chart = chart_z();
        let m = chart.basis();
        let cut: Vec<f64> = (0..3).map(|k| m[0][k] + m[1][k]).collect();
        let p = build_polytope(FRAC_PI_4, &[cut], &chart).unwrap();
        let c = polytope_corners(&p);
        let area = |a: &[f64], b: &[f64], q: &[f64]| ((b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])) / 2.0;
        let total = area(&c[0], &c[1], &c[2]).abs();
        for i in 0..=40 {
            for j in 0..=40 {
                let x = [-1.0 + i as f64 / 20.0, -1.0 + j as f64 / 20.0];
                if p.contains(&x, 1e-12) {
                    let s = area(&c[0], &c[1], &x).abs() + area(&c[1], &c[2], &x).abs() + area(&c[2], &c[0], &x).abs();
                    assert!((s - total).abs() < 1e-9, "{x:?} outside hull");
                }
            }
        }
    }

    #[test]
    fn farthest_pair_examples() {
        let sq = vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]];
        let (a, b) = farthest_pair(&sq).unwrap();
        assert!((norm(&sub(&a, &b)) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!((a, b), (vec![-1.0, -1.0], vec![1.0, 1.0]));
        let two = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        assert_eq!(farthest_pair(&two).unwrap(), (two[0].clone(), two[1].clone()));
        assert!(farthest_pair(&two[..1]).is_err());
    }

    #[test]
    fn sphere_examples() {
        let s = enclosing_sphere(&[1.0, 0.0], &[-1.0, 0.0]);
        assert_eq!(s.center, vec![0.0, 0.0]);
        assert!((s.radius - 3f64.sqrt()).abs() < 1e-15);
        // equilateral worst case: the apex sits exactly on the sphere
        let s = enclosing_sphere(&[-1.0, 0.0], &[1.0, 0.0]);
        let apex = [0.0, 3f64.sqrt()];
        assert!((norm(&sub(&apex, &s.center)) - s.radius).abs() < 1e-12);
    }

    /// Largest angle to `axis` over `samples` boundary points of the sphere.
    fn sampled_max_angle(s: &EnclosingSphere, chart: &HyperplaneChart, axis: &[f64], samples: usize) -> f64 {
        (0..samples)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                let x = [s.center[0] + s.radius * phi.cos(), s.center[1] + s.radius * phi.sin()];
                angle_between(&chart.lift(&x), axis).unwrap()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn sphere_to_cone_examples() {
        let chart = chart_z();
        let s = EnclosingSphere { center: vec![0.0, 0.0], radius: 1.0 };
        let cone = sphere_to_cone(&s, &chart).unwrap();
        assert!((cone.angle() - FRAC_PI_4).abs() < 1e-9);
        assert!(norm(&sub(cone.direction(), chart.tau())) < 1e-12);
        let sampled = sampled_max_angle(&s, &chart, cone.direction(), 100_000);
        assert!((sampled - cone.angle()).abs() < 1e-6);

        let s = EnclosingSphere { center: vec![1.0, 0.0], radius: 0.5 };
        let cone = sphere_to_cone(&s, &chart).unwrap();
        let sampled = sampled_max_angle(&s, &chart, cone.direction(), 100_000);
        assert!((sampled - cone.angle()).abs() < 1e-6, "{sampled} vs {}", cone.angle());
        let expected_axis = normalize(&chart.lift(&[1.0, 0.0])).unwrap();
        assert!(norm(&sub(cone.direction(), &expected_axis)) < 1e-12);

        let point = EnclosingSphere { center: vec![0.2, -0.1], radius: 0.0 };
        let cone = sphere_to_cone(&point, &chart).unwrap();
        assert_eq!(cone.angle(), 0.0);
    }

    fn discrete_view<'a>(s: &'a [f64], f: &'a QuadraticUtility, limits: &'a OfferLimits) -> View<'a> {
        View { s_a: s, s_b: s, f_a: f, limits, discrete: true }
    }

    #[test]
    fn bisecting_offer_separates_pairs() {
        let chart = chart_z();
        let f = QuadraticUtility::linear(vec![1.0, 1.0, 1.0]);
        let limits = OfferLimits::per_category(3, 5.0);
        let s = [100.0; 3];
        let v = discrete_view(&s, &f, &limits);
        for (x1, x2) in [([1.0, 0.0], [-1.0, 0.0]), ([1.0, 0.0], [0.0, 0.0]), ([0.3, 0.9], [-0.4, -0.2])] {
            let t = bisecting_offer(&x1, &x2, &chart, &v).unwrap();
            assert!(t.iter().all(|x| x.fract() == 0.0));
            let s1 = dot(&t, &chart.lift(&x1));
            let s2 = dot(&t, &chart.lift(&x2));
            assert!(s1 * s2 < 0.0, "{t:?} does not separate");
            assert!(dot(&t, &f.gradient(&s)) >= 0.0);
        }
    }

    #[test]
    fn rounding_matches_exhaustive_enumeration() {
        let f = QuadraticUtility::linear(vec![1.0, 0.5, -0.2]);
        let limits = OfferLimits::per_category(3, 5.0);
        let s = [100.0; 3];
        let v = discrete_view(&s, &f, &limits);
        let target = [3.7, 1.1, -2.3];
        let got = round_offer(&target, &v, |_| true).unwrap();
        let g = f.gradient(&s);
        let mut best = (f64::NEG_INFINITY, vec![]);
        for a in -5..=5 {
            for b in -5..=5 {
                for c in -5..=5 {
                    let t = [a as f64, b as f64, c as f64];
                    if norm(&t) == 0.0 || norm(&t) > limits.norm_cap + 1e-12 || dot(&t, &g) < 0.0 {
                        continue;
                    }
                    let cos = dot(&t, &target) / (norm(&t) * norm(&target));
                    if cos > best.0 {
                        best = (cos, t.to_vec());
                    }
                }
            }
        }
        assert_eq!(got, best.1);
    }

    #[test]
    fn quadrant_cone_covers_orthant() {
        let c = quadrant_cone(&[5.0, -5.0, 5.0]).unwrap();
        for corner in [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]] {
            assert!(angle_between(&corner, c.direction()).unwrap() <= c.angle() + 1e-12);
        }
    }

    #[test]
    fn refine_step_adopts_after_orthogonal_cuts() {
        // cuts from a linear responder whose gradient is near tau
        let tau = normalize(&[1.0, 1.0, 1.0]).unwrap();
        let cone = GradientCone::new(&tau, (1.0 / 3f64.sqrt()).acos()).unwrap();
        let chart = HyperplaneChart::new(&tau).unwrap();
        let truth = [1.0, 1.1, 0.9];
        let mut cuts: Vec<Vec<f64>> = Vec::new();
        let mut adopted = None;
        for _ in 0..20 {
            match discrete_refine_step(&cone, &chart, &mut cuts).unwrap() {
                StepOutcome::Adopted { cone: c, .. } => {
                    adopted = Some(c);
                    break;
                }
                StepOutcome::Bisect { x1, x2, .. } => {
                    // lifted bisector M a - b tau of the farthest pair
                    let diff = sub(&x1, &x2);
                    let a = scale(&diff, 1.0 / norm(&diff));
                    let b = (dot(&x1, &x1) - dot(&x2, &x2)) / (2.0 * norm(&diff));
                    let ma = chart.embed(&a);
                    let t: Vec<f64> = ma.iter().zip(chart.tau()).map(|(m, t)| m - b * t).collect();
                    // a linear responder rejects whichever sign has positive product with its gradient
                    let cut = if dot(&t, &truth) > 0.0 { t } else { scale(&t, -1.0) };
                    cuts.push(cut);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        let c = adopted.expect("cone adopted");
        assert!(c.angle() <= cone.angle());
        assert!(angle_between(&truth, c.direction()).unwrap() <= c.angle() + 1e-9);
    }
}
