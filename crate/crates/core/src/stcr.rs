//! Cone refinement with continuous offers.
//!
//! The offering agent keeps a cone `C(tau, theta)` believed to contain the
//! responder's utility gradient. Every rejected offer `T` implies, to first
//! order, `<T, grad f_B> > 0`. After the axis probes fix the orthant, offers
//! orthogonal to `tau` are made in batches of `n - 1`; a fully rejected batch
//! shrinks `sin(theta)` by `sqrt(1 - 1/(2n))`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TradeError};
use crate::geometry::{
    axpy, dot, mirror, norm, normalize, orthonormal_extension, project_out, scale, unit, GradientCone, Halfspace,
};
use crate::model::{is_feasible, OfferLimits, Response, Side, Utility};
use crate::negotiation::{AlgoEvent, NegotiationParams, Negotiator, Proposal, Stage, TerminalReason, View};

/// Knobs of the cone-refinement negotiators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StcrConfig {
    pub angle_threshold: f64,
    pub cone_expansion_rate: f64,
    pub use_prev_trade_heuristic: bool,
    pub use_cone_warm_start: bool,
    /// Halving stops once the offer is shorter than this fraction of `d`.
    pub halving_floor: f64,
    /// Offers shorter than this fraction of `d` count as infeasible.
    pub min_scale_fraction: f64,
}

impl Default for StcrConfig {
    fn default() -> Self {
        Self {
            angle_threshold: 1e-5,
            cone_expansion_rate: 0.02,
            use_prev_trade_heuristic: true,
            use_cone_warm_start: true,
            halving_floor: 1.0 / 16.0,
            min_scale_fraction: 0.1,
        }
    }
}

impl From<&NegotiationParams> for StcrConfig {
    fn from(p: &NegotiationParams) -> Self {
        Self {
            angle_threshold: p.angle_threshold,
            cone_expansion_rate: p.cone_expansion_rate,
            use_prev_trade_heuristic: p.use_prev_trade_heuristic,
            use_cone_warm_start: p.use_cone_warm_start,
            ..Self::default()
        }
    }
}

/// `sqrt(1 - 1/(2n))`, the per-update ratio `sin(theta') / sin(theta)`.
pub fn shrink_factor(n: usize) -> f64 {
    (1.0 - 1.0 / (2.0 * n as f64)).sqrt()
}

/// Cone after a batch of `n - 1` rejected offers orthogonal to `tau` and to
/// each other.
pub fn refine_cone(cone: &GradientCone, batch: &[Vec<f64>]) -> Result<GradientCone> {
    let n = cone.dim();
    if batch.len() + 1 != n {
        return Err(TradeError::Domain(format!("refinement needs {} offers, got {}", n - 1, batch.len())));
    }
    let tau = cone.direction();
    let units = batch.iter().map(|t| normalize(t)).collect::<Result<Vec<_>>>()?;
    for (i, a) in units.iter().enumerate() {
        if dot(a, tau).abs() > 1e-6 || units[..i].iter().any(|b| dot(a, b).abs() > 1e-6) {
            return Err(TradeError::Domain("refinement batch is not orthogonal".into()));
        }
    }
    let (s, c) = cone.angle().sin_cos();
    let mut sum = tau.to_vec();
    for t in &units {
        for k in 0..n {
            sum[k] += tau[k] * c + t[k] * s;
        }
    }
    let angle = (s * shrink_factor(n)).clamp(0.0, 1.0).asin();
    GradientCone::new(&sum, angle)
}

/// Outcome of widening the cone after an accepted trade.
#[derive(Debug, Clone, PartialEq)]
pub enum WarmStart {
    Cone(GradientCone),
    /// The widened angle passed `pi/2`; the orthant must be probed again.
    Reinit,
}

pub fn warm_start_cone(prev: &GradientCone, accepted_norm: f64, b: f64) -> WarmStart {
    let theta = prev.angle() + b * accepted_norm;
    if theta > FRAC_PI_2 {
        WarmStart::Reinit
    } else {
        WarmStart::Cone(GradientCone::new(prev.direction(), theta).expect("angle within (0, pi/2]"))
    }
}

/// Cone spanned by the orthant of the rejected axis probes.
pub fn init_quadrant(quadrant: &[f64]) -> Result<GradientCone> {
    GradientCone::new(quadrant, FRAC_PI_2)
}

/// Shrinks an offer whose first-order gain overshoots into a real loss.
///
/// Continuous offers are halved until beneficial; `None` once shorter than
/// `floor`. Integer offers step down through the integer multiples of their
/// primitive direction and settle on the smallest one, whose loss is bounded
/// by `beta |T|^2 / 2`.
pub fn ensure_beneficial(
    t: &[f64],
    f_a: &dyn Utility,
    s_a: &[f64],
    discrete: bool,
    floor: f64,
) -> Option<Vec<f64>> {
    let gain = |x: &[f64]| crate::model::raw_benefit(f_a, s_a, x, Side::Offering);
    if norm(t) == 0.0 {
        return None;
    }
    if discrete {
        let g = t.iter().fold(0u64, |acc, x| gcd(acc, x.abs().round() as u64));
        if g == 0 {
            return None;
        }
        let base: Vec<f64> = t.iter().map(|x| x / g as f64).collect();
        for k in (1..=g).rev() {
            let cand = scale(&base, k as f64);
            if gain(&cand) >= 0.0 {
                return Some(cand);
            }
        }
        return Some(base);
    }
    let mut cand = t.to_vec();
    loop {
        if gain(&cand) >= 0.0 {
            return Some(cand);
        }
        cand = scale(&cand, 0.5);
        if norm(&cand) < floor {
            return None;
        }
    }
}

pub(crate) fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The previously accepted trade, if it is still feasible and not harmful.
pub fn stage1_heuristic(t_prev: Option<&[f64]>, view: &View<'_>) -> Option<Vec<f64>> {
    let t = t_prev?;
    if t.len() != view.dim() || !view.feasible(t) {
        return None;
    }
    let g = view.grad_a();
    (dot(t, &g) >= 0.0 && view.benefit_a(t) >= 0.0).then(|| t.to_vec())
}

/// Sign of the axis probe along category `i`; `+` on a zero partial.
pub fn quadrant_sign(grad: &[f64], i: usize) -> f64 {
    if grad[i] >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Axis probe for category `i`, scaled to the feasible region and shrunk if
/// it overshoots.
pub fn quadrant_offer(i: usize, view: &View<'_>, cfg: &StcrConfig) -> Option<Vec<f64>> {
    let n = view.dim();
    let g = view.grad_a();
    let dir = scale(&unit(n, i), quadrant_sign(&g, i));
    let t = if view.discrete {
        integer_along(&dir, view)?
    } else {
        view.scale_to_feasible(&dir, cfg.min_scale_fraction)?
    };
    ensure_beneficial(&t, view.f_a, view.s_a, view.discrete, cfg.halving_floor * view.limits.norm_cap)
}

/// Largest integer multiple of an integer direction that stays feasible.
pub(crate) fn integer_along(dir: &[f64], view: &View<'_>) -> Option<Vec<f64>> {
    let mut k = view.limits.integer_box();
    while k > 0 {
        let t = scale(dir, k as f64);
        if view.feasible(&t) {
            return Some(t);
        }
        k -= 1;
    }
    None
}

/// Incremental state of one refinement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementState {
    pub cone: Option<GradientCone>,
    /// Unit directions of the rejected offers since the last cone update.
    pub batch: Vec<Vec<f64>>,
    /// Orthant probe outcomes, `+-d` per category.
    pub quadrant: Vec<f64>,
    pub offers_made: usize,
    pub extra_constraints: Vec<Halfspace>,
    /// Complement directions abandoned because no beneficial offer exists
    /// along them.
    pub excluded: Vec<Vec<f64>>,
}

impl RefinementState {
    pub fn new(n: usize) -> Self {
        Self {
            cone: None,
            batch: Vec::new(),
            quadrant: vec![0.0; n],
            offers_made: 0,
            extra_constraints: Vec::new(),
            excluded: Vec::new(),
        }
    }
}

/// Next offer orthogonal to `tau` and the current batch. With `r` batch
/// slots left, the offer takes a `1/sqrt(r)` share of the offering agent's
/// gradient projection onto the complement, so every offer of the batch has
/// the same first-order gain `|p| / sqrt(n - 1)`. Taking the whole projection
/// at once would leave the remaining slots orthogonal to the gradient, where
/// a strictly concave agent only loses. Directions that cannot carry a
/// feasible beneficial offer are moved to `state.excluded`; `None` once the
/// complement is exhausted.
pub fn generate_orthogonal_offer(
    state: &mut RefinementState,
    view: &View<'_>,
    cfg: &StcrConfig,
) -> Option<Vec<f64>> {
    let cone = state.cone.as_ref()?;
    let n = view.dim();
    let g = view.grad_a();
    loop {
        let mut fixed = vec![cone.direction().to_vec()];
        fixed.extend(state.batch.iter().cloned());
        fixed.extend(state.excluded.iter().cloned());
        if fixed.len() >= n {
            return None;
        }
        let complement = orthonormal_extension(&fixed, n).ok()?;
        let slots = (n - 1 - state.batch.len()).min(complement.len());
        let mut p = vec![0.0; n];
        for c in &complement {
            let w = dot(&g, c);
            for k in 0..n {
                p[k] += w * c[k];
            }
        }
        let dir = if norm(&p) > 1e-12 * norm(&g).max(1.0) {
            let p_hat = normalize(&p).ok()?;
            let side = complement
                .iter()
                .map(|c| project_out(c, std::slice::from_ref(&p_hat)))
                .find(|w| norm(w) > 1e-9)
                .and_then(|w| normalize(&w).ok());
            match side {
                Some(w) if slots > 1 => {
                    let share = 1.0 / (slots as f64).sqrt();
                    axpy(&scale(&p_hat, share), (1.0 - share * share).sqrt(), &w)
                }
                _ => p_hat,
            }
        } else {
            complement[0].clone()
        };
        let dir = normalize(&dir).ok()?;
        let offer = view
            .scale_to_feasible(&dir, cfg.min_scale_fraction)
            .and_then(|t| ensure_beneficial(&t, view.f_a, view.s_a, false, cfg.halving_floor * view.limits.norm_cap));
        match offer {
            Some(t) => return Some(t),
            None => state.excluded.push(dir),
        }
    }
}

/// Records the halfspace `<-T_c, x> >= 0` implied by a counteroffer.
pub fn incorporate_counteroffer(state: &mut RefinementState, counter: &[f64]) -> Option<Halfspace> {
    let h = Halfspace::new(scale(counter, -1.0), 0.0).ok()?;
    state.extra_constraints.push(h.clone());
    Some(h)
}

/// Reflects `tau` across every recorded constraint it violates.
fn respect_constraints(tau: &[f64], constraints: &[Halfspace]) -> Vec<f64> {
    let mut t = tau.to_vec();
    for h in constraints {
        if dot(&h.normal, &t) < 0.0 {
            t = mirror(&t, &h.normal);
        }
    }
    t
}

/// Counteroffers are echoed when they help the offering agent and fit both
/// agents' holdings; the per-offer caps bind only the algorithm's own offers.
pub(crate) fn echo_worthy(view: &View<'_>, counter: &[f64]) -> bool {
    counter.len() == view.dim()
        && is_feasible(view.s_a, view.s_b, counter, &OfferLimits::unbounded())
        && (!view.discrete || counter.iter().all(|x| x.fract() == 0.0))
        && view.benefit_a(counter) >= 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Quadrant { next: usize },
    Refine,
}

/// Continuous-offer cone refinement negotiator.
#[derive(Debug, Clone)]
pub struct Stcr {
    cfg: StcrConfig,
    n: usize,
    state: RefinementState,
    phase: Phase,
    t_prev: Option<Vec<f64>>,
    heuristic_due: bool,
    echo: Option<Vec<f64>>,
    last_stage: Option<Stage>,
    rejections: usize,
    events: Vec<AlgoEvent>,
}

impl Stcr {
    pub fn new(cfg: StcrConfig) -> Self {
        Self {
            cfg,
            n: 0,
            state: RefinementState::new(0),
            phase: Phase::Quadrant { next: 0 },
            t_prev: None,
            heuristic_due: false,
            echo: None,
            last_stage: None,
            rejections: 0,
            events: Vec::new(),
        }
    }

    pub fn state(&self) -> &RefinementState {
        &self.state
    }

    /// Refinement offers rejected since the last acceptance or reset.
    pub fn refinement_rejections(&self) -> usize {
        self.rejections
    }

    fn restart_refinement(&mut self) {
        self.state.cone = None;
        self.state.batch.clear();
        self.state.excluded.clear();
        self.state.quadrant = vec![0.0; self.n];
        self.phase = Phase::Quadrant { next: 0 };
    }
}

impl Negotiator for Stcr {
    fn name(&self) -> &'static str {
        if self.cfg.use_prev_trade_heuristic {
            "stcr"
        } else {
            "stcr-noheur"
        }
    }

    fn reset(&mut self, n: usize) {
        self.n = n;
        self.state = RefinementState::new(n);
        self.phase = Phase::Quadrant { next: 0 };
        self.t_prev = None;
        self.heuristic_due = false;
        self.echo = None;
        self.last_stage = None;
        self.rejections = 0;
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
        loop {
            match self.phase {
                Phase::Quadrant { next } if next == self.n => {
                    let cone = match init_quadrant(&self.state.quadrant) {
                        Ok(c) => c,
                        Err(_) => return Proposal::Stop(TerminalReason::NoFeasibleOffer),
                    };
                    let tau = respect_constraints(cone.direction(), &self.state.extra_constraints);
                    let cone = GradientCone::new(&tau, cone.angle()).expect("unit direction");
                    self.events.push(AlgoEvent::QuadrantInitialized {
                        tau: cone.direction().to_vec(),
                        theta: cone.angle(),
                    });
                    self.state.cone = Some(cone);
                    self.state.batch.clear();
                    self.state.excluded.clear();
                    self.phase = Phase::Refine;
                }
                Phase::Quadrant { next } => {
                    match quadrant_offer(next, view, &self.cfg) {
                        Some(t) => {
                            self.last_stage = Some(Stage::Quadrant);
                            self.state.offers_made += 1;
                            return Proposal::Offer { delta: t, stage: Stage::Quadrant };
                        }
                        None => {
                            // unprobed axes stay 0 so the half-space holds whatever their sign
                            self.events.push(AlgoEvent::Note {
                                message: format!("axis {next} has no feasible beneficial probe"),
                            });
                            self.state.quadrant[next] = 0.0;
                            self.phase = Phase::Quadrant { next: next + 1 };
                        }
                    }
                }
                Phase::Refine => {
                    let cone = self.state.cone.clone().expect("refine phase has a cone");
                    if cone.angle() < self.cfg.angle_threshold {
                        return Proposal::Stop(TerminalReason::AngleThreshold);
                    }
                    if self.state.batch.len() + 1 == self.n {
                        let refined = match refine_cone(&cone, &self.state.batch) {
                            Ok(c) => c,
                            Err(e) => {
                                self.events.push(AlgoEvent::Note { message: e.to_string() });
                                return Proposal::Stop(TerminalReason::NoFeasibleOffer);
                            }
                        };
                        let tau = respect_constraints(refined.direction(), &self.state.extra_constraints);
                        let refined = GradientCone::new(&tau, refined.angle()).expect("unit direction");
                        self.events.push(AlgoEvent::ConeRefined {
                            n: self.n,
                            theta_before: cone.angle(),
                            theta_after: refined.angle(),
                            tau: refined.direction().to_vec(),
                        });
                        self.state.cone = Some(refined);
                        self.state.batch.clear();
                        self.state.excluded.clear();
                        continue;
                    }
                    return match generate_orthogonal_offer(&mut self.state, view, &self.cfg) {
                        Some(t) => {
                            self.last_stage = Some(Stage::Orthogonal);
                            self.state.offers_made += 1;
                            Proposal::Offer { delta: t, stage: Stage::Orthogonal }
                        }
                        None => Proposal::Stop(TerminalReason::NoFeasibleOffer),
                    };
                }
            }
        }
    }

    fn observe(&mut self, view: &View<'_>, offer: &[f64], response: Response) {
        let stage = self.last_stage.take();
        match response {
            Response::Accept => {
                self.t_prev = Some(offer.to_vec());
                self.heuristic_due = true;
                self.echo = None;
                self.rejections = 0;
                self.state.extra_constraints.clear();
                let warm = match (&self.state.cone, self.phase) {
                    (Some(c), Phase::Refine) if self.cfg.use_cone_warm_start => {
                        Some((c.angle(), warm_start_cone(c, norm(offer), self.cfg.cone_expansion_rate)))
                    }
                    _ => None,
                };
                match warm {
                    Some((before, WarmStart::Cone(c))) => {
                        self.events.push(AlgoEvent::WarmStart {
                            theta_before: before,
                            theta_after: c.angle(),
                            reinit: false,
                        });
                        self.state.cone = Some(c);
                        self.state.batch.clear();
                        self.state.excluded.clear();
                    }
                    Some((before, WarmStart::Reinit)) => {
                        self.events.push(AlgoEvent::WarmStart {
                            theta_before: before,
                            theta_after: FRAC_PI_2,
                            reinit: true,
                        });
                        self.restart_refinement();
                    }
                    None => self.restart_refinement(),
                }
            }
            Response::Reject => match stage {
                Some(Stage::Quadrant) => {
                    if let Phase::Quadrant { next } = self.phase {
                        let sign = if offer[next] >= 0.0 { 1.0 } else { -1.0 };
                        self.state.quadrant[next] = sign * view.limits.norm_cap;
                        self.phase = Phase::Quadrant { next: next + 1 };
                    }
                    self.rejections += 1;
                }
                Some(Stage::Orthogonal) => {
                    if let Ok(u) = normalize(offer) {
                        self.state.batch.push(u);
                    }
                    self.rejections += 1;
                }
                Some(Stage::Counteroffer) => {
                    if let Ok(h) = Halfspace::new(offer.to_vec(), 0.0) {
                        self.state.extra_constraints.push(h);
                    }
                }
                _ => {}
            },
        }
    }

    fn counteroffer(&mut self, view: &View<'_>, counter: &[f64]) {
        if incorporate_counteroffer(&mut self.state, counter).is_none() {
            return;
        }
        if echo_worthy(view, counter) {
            self.echo = Some(counter.to_vec());
        } else {
            self.events.push(AlgoEvent::Note { message: "counteroffer not beneficial".into() });
        }
    }

    fn cone(&self) -> Option<&GradientCone> {
        self.state.cone.as_ref()
    }

    fn take_events(&mut self) -> Vec<AlgoEvent> {
        std::mem::take(&mut self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_between;
    use crate::model::QuadraticUtility;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};

    fn view<'a>(s_a: &'a [f64], s_b: &'a [f64], f: &'a QuadraticUtility, limits: &'a OfferLimits) -> View<'a> {
        View { s_a, s_b, f_a: f, limits, discrete: false }
    }

    #[test]
    fn refine_two_dimensional_closed_form() {
        let cone = GradientCone::new(&[0.0, 1.0], FRAC_PI_2).unwrap();
        let c1 = refine_cone(&cone, &[vec![3.0, 0.0]]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c1.direction()[0] - s).abs() < 1e-12 && (c1.direction()[1] - s).abs() < 1e-12);
        assert!((c1.angle() - FRAC_PI_3).abs() < 1e-12);
        let c2 = GradientCone::new(&[0.0, 1.0], FRAC_PI_3).unwrap();
        let c2 = refine_cone(&c2, &[vec![1.0, 0.0]]).unwrap();
        assert!((c2.angle() - 0.75f64.asin()).abs() < 1e-12);
        assert!((c2.angle() - 0.848_062_078_981_481).abs() < 1e-12);
    }

    /// Brute-force enclosure: sample the cut cone `C(tau, theta)` intersected
    /// with `<T, x> >= 0` and measure the largest angle to the refined axis.
    #[test]
    fn refined_cone_encloses_cut_cone_by_sampling() {
        let theta = FRAC_PI_3;
        let cone = GradientCone::new(&[0.0, 1.0], theta).unwrap();
        let refined = refine_cone(&cone, &[vec![1.0, 0.0]]).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=20_000 {
            let phi = -theta + 2.0 * theta * k as f64 / 20_000.0;
            let x = [phi.sin(), phi.cos()];
            if x[0] >= 0.0 {
                worst = worst.max(angle_between(&x, refined.direction()).unwrap());
            }
        }
        assert!(worst <= refined.angle() + 1e-9, "{worst} > {}", refined.angle());
    }

    #[test]
    fn refine_rejects_bad_batches() {
        let cone = GradientCone::new(&[0.0, 0.0, 1.0], 1.0).unwrap();
        assert!(refine_cone(&cone, &[vec![1.0, 0.0, 0.0]]).is_err());
        assert!(refine_cone(&cone, &[vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]).is_err());
        assert!(refine_cone(&cone, &[vec![1.0, 0.0, 0.1], vec![0.0, 1.0, 0.0]]).is_err());
    }

    #[test]
    fn warm_start_examples() {
        let c = GradientCone::new(&[1.0, 0.0], 1.0).unwrap();
        assert_eq!(warm_start_cone(&c, 8.66, 0.0), WarmStart::Cone(c.clone()));
        match warm_start_cone(&c, 8.66, 0.01) {
            WarmStart::Cone(w) => assert!((w.angle() - 1.0866).abs() < 1e-12),
            WarmStart::Reinit => panic!("no reinit expected"),
        }
        let c = GradientCone::new(&[1.0, 0.0], 1.5).unwrap();
        assert_eq!(warm_start_cone(&c, 5.0, 0.1), WarmStart::Reinit);
    }

    #[test]
    fn ensure_beneficial_scalar_quadratic() {
        // f(x) = -(x - 1)^2 = -x^2 + 2x - 1; constants do not affect benefits
        let f = QuadraticUtility::target(&[1.0]);
        let s = [0.9];
        let out = ensure_beneficial(&[0.5], &f, &s, false, 1.0 / 16.0).unwrap();
        // oracle: enumerate halvings and keep the first non-negative gain
        let gain = |t: f64| -((0.9 + t) - 1.0f64).powi(2) + (0.9 - 1.0f64).powi(2);
        let mut t = 0.5;
        while gain(t) < 0.0 {
            t /= 2.0;
        }
        assert_eq!(out, vec![t]);
        assert_eq!(t, 0.125);
        // linear utilities never overshoot
        let lin = QuadraticUtility::linear(vec![1.0, 2.0]);
        assert_eq!(ensure_beneficial(&[3.0, 1.0], &lin, &[5.0, 5.0], false, 0.1), Some(vec![3.0, 1.0]));
        // at the optimum every direction loses
        assert_eq!(ensure_beneficial(&[0.5], &f, &[1.0], false, 1.0 / 16.0), None);
    }

    #[test]
    fn ensure_beneficial_integer_multiples() {
        let f = QuadraticUtility::target(&[51.0, 50.0]);
        // 4 units along e1 overshoot the optimum one unit away
        let out = ensure_beneficial(&[4.0, 0.0], &f, &[50.0, 50.0], true, 0.0).unwrap();
        assert_eq!(out, vec![2.0, 0.0]);
        let at_opt = ensure_beneficial(&[2.0, 2.0], &f, &[51.0, 50.0], true, 0.0).unwrap();
        assert_eq!(at_opt, vec![1.0, 1.0]);
    }

    #[test]
    fn orthogonal_offer_examples() {
        let f = QuadraticUtility::linear(vec![0.5, 0.0]);
        let limits = OfferLimits::new(2.0, None).unwrap();
        let s = [100.0, 100.0];
        let v = view(&s, &s, &f, &limits);
        let mut st = RefinementState::new(2);
        st.cone = Some(GradientCone::new(&[1.0, 1.0], FRAC_PI_2).unwrap());
        let t = generate_orthogonal_offer(&mut st, &v, &StcrConfig::default()).unwrap();
        let r = std::f64::consts::SQRT_2;
        assert!((t[0] - r).abs() < 1e-12 && (t[1] + r).abs() < 1e-12);

        // zero projection: first complement vector, + sign
        let f = QuadraticUtility::linear(vec![1.0, 1.0]);
        let v = view(&s, &s, &f, &limits);
        let t = generate_orthogonal_offer(&mut st, &v, &StcrConfig::default()).unwrap();
        assert!(dot(&t, &[1.0, 1.0]).abs() < 1e-12 && (norm(&t) - 2.0).abs() < 1e-12);

        let f = QuadraticUtility::linear(vec![0.3, -0.2, 0.7]);
        let s3 = [100.0; 3];
        let v = view(&s3, &s3, &f, &limits);
        let mut st = RefinementState::new(3);
        st.cone = Some(GradientCone::new(&[1.0, 0.0, 0.0], 1.0).unwrap());
        st.batch.push(vec![0.0, 1.0, 0.0]);
        let t = generate_orthogonal_offer(&mut st, &v, &StcrConfig::default()).unwrap();
        assert!(t[0].abs() < 1e-12 && t[1].abs() < 1e-12 && (t[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn batch_offers_share_the_gain_equally() {
        let g = [0.3, -0.2, 0.7, 0.4];
        let f = QuadraticUtility::linear(g.iter().map(|x| x / 2.0).collect());
        let limits = OfferLimits::new(1.0, None).unwrap();
        let s = [100.0; 4];
        let v = view(&s, &s, &f, &limits);
        let tau = [1.0, 0.0, 0.0, 0.0];
        let mut st = RefinementState::new(4);
        st.cone = Some(GradientCone::new(&tau, 1.0).unwrap());
        // projection of g onto the complement of tau
        let p_norm = (0.2f64.powi(2) + 0.7f64.powi(2) + 0.4f64.powi(2)).sqrt();
        for _ in 0..3 {
            let t = generate_orthogonal_offer(&mut st, &v, &StcrConfig::default()).unwrap();
            assert!((dot(&t, &g) - p_norm / 3f64.sqrt()).abs() < 1e-12);
            assert!(dot(&t, &tau).abs() < 1e-12);
            for b in &st.batch {
                assert!(dot(&t, b).abs() < 1e-12);
            }
            st.batch.push(t);
        }
        assert!(generate_orthogonal_offer(&mut st, &v, &StcrConfig::default()).is_none());
    }

    #[test]
    fn counteroffer_constraint_orientation() {
        let mut st = RefinementState::new(3);
        let h = incorporate_counteroffer(&mut st, &[-10.0, 5.0, 0.0]).unwrap();
        assert_eq!(h.normal, vec![10.0, -5.0, 0.0]);
        assert_eq!(h.offset, 0.0);
        assert!(incorporate_counteroffer(&mut st, &[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn quadrant_offers_follow_gradient_signs() {
        let f = QuadraticUtility::target(&[33.0, 33.0, 80.0]);
        let limits = OfferLimits::per_category(3, 5.0);
        let s = [50.0; 3];
        let v = view(&s, &s, &f, &limits);
        let cfg = StcrConfig::default();
        assert_eq!(quadrant_offer(0, &v, &cfg).unwrap(), vec![-5.0, 0.0, 0.0]);
        assert_eq!(quadrant_offer(2, &v, &cfg).unwrap(), vec![0.0, 0.0, 5.0]);
        let c = init_quadrant(&[5.0, 5.0]).unwrap();
        assert!((c.angle() - FRAC_PI_2).abs() < 1e-15);
        assert!((c.direction()[0] - FRAC_PI_4.cos()).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shrinkage_ratio_is_exact(
                n in 2usize..7,
                theta in 0.05f64..FRAC_PI_2,
                seed in proptest::collection::vec(-1.0f64..1.0, 7),
            ) {
                let tau = normalize(&seed[..n].iter().map(|x| x + 1.5).collect::<Vec<_>>()).unwrap();
                let cone = GradientCone::new(&tau, theta).unwrap();
                let batch = orthonormal_extension(std::slice::from_ref(&tau), n).unwrap();
                let refined = refine_cone(&cone, &batch).unwrap();
                let ratio = refined.angle().sin() / theta.sin();
                prop_assert!((ratio - shrink_factor(n)).abs() < 1e-12);
                prop_assert!((norm(refined.direction()) - 1.0).abs() < 1e-12);
            }
        }
    }
}
