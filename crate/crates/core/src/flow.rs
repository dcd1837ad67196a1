//! Explicit time integration of the centro-affine normal flow and its dual on
//! support functions, plus the closed-form ball solution and extinction-time
//! bookkeeping.

use serde::{Deserialize, Serialize};

use crate::affine;
use crate::body::Body;
use crate::error::{Error, Result};
use crate::sphere::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `ds/dt = -s (K / s^{n+2})^beta`
    Contracting,
    /// `ds/dt = +s (K / s^{n+2})^{-beta}`, the flow induced on polar bodies.
    Dual,
}

/// Flow power and the exponents derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub p: f64,
    pub n: usize,
    pub direction: Direction,
    /// Speed exponent `p / (p + n + 1)`.
    pub beta: f64,
    /// Homogeneity degree `-1 + 2 (n + 1) beta` of the speed.
    pub alpha: f64,
    /// `n p / ((p + 1)(n + 1))`.
    pub harnack_exponent: f64,
}

impl FlowParams {
    pub fn new(p: f64, n: usize, direction: Direction) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "flow power must be finite and > 1, got {p}"
            )));
        }
        if !(1..=2).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        let nf = n as f64;
        let beta = p / (p + nf + 1.0);
        Ok(Self {
            p,
            n,
            direction,
            beta,
            alpha: -1.0 + 2.0 * (nf + 1.0) * beta,
            harnack_exponent: nf * p / ((p + 1.0) * (nf + 1.0)),
        })
    }

    pub fn contracting(p: f64, n: usize) -> Result<Self> {
        Self::new(p, n, Direction::Contracting)
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self { direction, ..*self }
    }

    /// `1 + alpha = 2 (n + 1) p / (p + n + 1)`.
    pub fn one_plus_alpha(&self) -> f64 {
        1.0 + self.alpha
    }

    /// Extinction time `R0^{1+alpha} / (1+alpha)` of a ball of radius `r0`.
    pub fn ball_extinction_time(&self, r0: f64) -> f64 {
        r0.powf(self.one_plus_alpha()) / self.one_plus_alpha()
    }
}

/// Radius at time `t` of a ball of initial radius `r0` under the contracting flow.
pub fn exact_ball_radius(r0: f64, t: f64, params: &FlowParams) -> Result<f64> {
    let a1 = params.one_plus_alpha();
    let extinction = params.ball_extinction_time(r0);
    if t >= extinction {
        return Err(Error::PastExtinction { t, extinction });
    }
    Ok((r0.powf(a1) - a1 * t).powf(1.0 / a1))
}

/// Contracting speed `s (K / s^{n+2})^beta`; equals `R^{-alpha}` on a ball.
pub fn speed(b: &Body, params: &FlowParams) -> ScalarField {
    ScalarField::from_vec_unchecked(speed_values(b, params.beta))
}

/// Expanding speed of the dual flow `s (K / s^{n+2})^{-beta}`; equals
/// `R^{alpha+2}` on a ball of radius `R`.
pub fn dual_speed(b: &Body, params: &FlowParams) -> ScalarField {
    ScalarField::from_vec_unchecked(speed_values(b, -params.beta))
}

fn speed_values(b: &Body, exponent: f64) -> Vec<f64> {
    b.support()
        .iter()
        .zip(b.centro_affine_values())
        .map(|(s, c)| s * c.powf(exponent))
        .collect()
}

fn rate(b: &Body, params: &FlowParams) -> Vec<f64> {
    match params.direction {
        Direction::Contracting => speed_values(b, params.beta).into_iter().map(|v| -v).collect(),
        Direction::Dual => speed_values(b, -params.beta),
    }
}

/// A body at a time along a flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    body: Body,
    t: f64,
    params: FlowParams,
    dt: Option<f64>,
    steps: usize,
    initial_min_support: f64,
}

impl FlowState {
    pub fn new(body: Body, params: FlowParams) -> Result<Self> {
        Self::at_time(body, params, 0.0)
    }

    pub fn at_time(body: Body, params: FlowParams, t: f64) -> Result<Self> {
        if body.dim() != params.n {
            return Err(Error::GridMismatch);
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
        }
        let initial_min_support = body.support().min();
        Ok(Self {
            body,
            t,
            params,
            dt: None,
            steps: 0,
            initial_min_support,
        })
    }

    /// Rebuild a state part-way through a run, e.g. from a stored snapshot.
    pub fn resume(body: Body, params: FlowParams, t: f64, steps: usize, initial_min_support: f64) -> Result<Self> {
        if !(initial_min_support > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial min support must be positive, got {initial_min_support}"
            )));
        }
        let mut state = Self::at_time(body, params, t)?;
        state.steps = steps;
        state.initial_min_support = initial_min_support;
        Ok(state)
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    /// Step size of the most recent step.
    pub fn last_dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `min s` of the state the run started from.
    pub fn initial_min_support(&self) -> f64 {
        self.initial_min_support
    }
}

/// Largest eigenvalue of the linearised diffusion matrix at each node.
fn diffusion_max(b: &Body, params: &FlowParams) -> f64 {
    let n = params.n as f64;
    let (a, e) = match params.direction {
        Direction::Contracting => (1.0 - (n + 2.0) * params.beta, -params.beta - 1.0),
        Direction::Dual => (1.0 + (n + 2.0) * params.beta, params.beta - 1.0),
    };
    b.support()
        .iter()
        .zip(b.s_n_values())
        .zip(b.radii())
        .map(|((s, sn), r)| params.beta * s.powf(a) * sn.powf(e) * r.cofactor_max_eigenvalue())
        .fold(0.0, f64::max)
}

/// Stable step size `safety * h^2 / max D`, where `h^2 = 2 / Lambda` and
/// `Lambda` bounds the grid Laplacian. `safety = 1` is the stability edge of
/// the midpoint scheme on the frozen-coefficient problem.
pub fn cfl_dt(state: &FlowState, safety: f64) -> f64 {
    let h = state.body.grid().stability_spacing();
    safety * h * h / diffusion_max(&state.body, &state.params)
}

/// One explicit midpoint step of size `dt`.
pub fn step(state: &FlowState, dt: f64) -> Result<FlowState> {
    let bound = cfl_dt(state, 1.0);
    if !(dt > 0.0) || dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    advance(state, dt)
}

fn advance(state: &FlowState, dt: f64) -> Result<FlowState> {
    let grid = state.body.grid().clone();
    let s = state.body.support();
    let k1 = rate(&state.body, &state.params);
    let mid_values = s.iter().zip(&k1).map(|(s, k)| s + 0.5 * dt * k).collect();
    let mid = Body::new(grid.clone(), mid_values).map_err(|e| step_failure(e, dt))?;
    let k2 = rate(&mid, &state.params);
    let values = s.iter().zip(&k2).map(|(s, k)| s + dt * k).collect();
    let body = Body::new(grid, values).map_err(|e| step_failure(e, dt))?;
    Ok(FlowState {
        body,
        t: state.t + dt,
        params: state.params,
        dt: Some(dt),
        steps: state.steps + 1,
        initial_min_support: state.initial_min_support,
    })
}

fn step_failure(e: Error, dt: f64) -> Error {
    match e {
        Error::NonConvex { node, eigenvalue, .. } => Error::StepFailed {
            node,
            reason: format!("radius of curvature fell to {eigenvalue:e}"),
            suggested_dt: 0.5 * dt,
        },
        Error::NonPositiveSupport { node, value } => Error::StepFailed {
            node,
            reason: format!("support value fell to {value:e}"),
            suggested_dt: 0.5 * dt,
        },
        Error::NonFinite { node } => Error::StepFailed {
            node,
            reason: "non-finite support value".into(),
            suggested_dt: 0.5 * dt,
        },
        other => other,
    }
}

/// Extinction-time bracket from the in- and circumradius. The remaining
/// times are kept separately because `T - t` is far below the resolution of
/// `t` near extinction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalEstimate {
    /// Time of the state the bracket was taken from.
    pub t: f64,
    pub remaining_lo: f64,
    pub remaining_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Which frame supplied each end of the bracket.
    pub method: String,
}

impl TerminalEstimate {
    pub fn new(t: f64, remaining_lo: f64, remaining_hi: f64, method: impl Into<String>) -> Self {
        Self {
            t,
            remaining_lo,
            remaining_hi,
            t_lo: t + remaining_lo,
            t_hi: t + remaining_hi,
            method: method.into(),
        }
    }

    pub fn midpoint(&self) -> f64 {
        self.t + 0.5 * (self.remaining_lo + self.remaining_hi)
    }

    pub fn width(&self) -> f64 {
        self.remaining_hi - self.remaining_lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_lo <= t && t <= self.t_hi
    }
}

/// Containment bracket `r_-^{1+alpha}/(1+alpha) <= T - t <= r_+^{1+alpha}/(1+alpha)`,
/// intersected over the identity frame and the SL-normalised frame.
pub fn terminal_estimate(state: &FlowState) -> TerminalEstimate {
    let (r_lo, r_hi) = state.body.radii_bounds();
    let params = &state.params;
    let (mut lo, mut hi) = (params.ball_extinction_time(r_lo), params.ball_extinction_time(r_hi));
    let mut method = "containment:identity";
    if let Ok((_, normalized)) = affine::normalize_sl(&state.body) {
        let (n_lo, n_hi) = normalized.radii_bounds();
        let (n_lo, n_hi) = (params.ball_extinction_time(n_lo), params.ball_extinction_time(n_hi));
        if n_lo > lo || n_hi < hi {
            method = "containment:identity+normalized";
        }
        lo = lo.max(n_lo);
        hi = hi.min(n_hi);
    }
    TerminalEstimate::new(state.t, lo, hi, method)
}

/// Body scaled by `((1+alpha)(T - t))^{-1/(1+alpha)}`.
pub fn rescaled_body(state: &FlowState, terminal: f64) -> Result<Body> {
    if !(terminal > state.t) {
        return Err(Error::PastExtinction {
            t: state.t,
            extinction: terminal,
        });
    }
    rescale(&state.body, &state.params, terminal - state.t)
}

/// [`rescaled_body`] given `T - t` directly.
pub fn rescale(body: &Body, params: &FlowParams, remaining: f64) -> Result<Body> {
    if !(remaining > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "remaining time must be positive, got {remaining}"
        )));
    }
    let a1 = params.one_plus_alpha();
    body.scaled((a1 * remaining).powf(-1.0 / a1))
}

/// `min speed * t^{n p / ((p+1)(n+1))}`, defined as 0 at `t = 0`.
pub fn harnack_quantity(state: &FlowState) -> f64 {
    if state.t == 0.0 {
        return 0.0;
    }
    let min_speed = speed_values(&state.body, state.params.beta)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    min_speed * state.t.powf(state.params.harnack_exponent)
}

/// `(1 - h)(s(t) - s(t0)) + (t - t0) speed(t)` with `h` the Harnack exponent.
pub fn displacement_monitor(earlier: &FlowState, later: &FlowState) -> Result<ScalarField> {
    if earlier.body.grid().descriptor() != later.body.grid().descriptor() || earlier.params != later.params {
        return Err(Error::GridMismatch);
    }
    if later.t < earlier.t {
        return Err(Error::InvalidParameter(format!(
            "later state at t = {} precedes earlier state at t = {}",
            later.t, earlier.t
        )));
    }
    let c = 1.0 - later.params.harnack_exponent;
    let dt = later.t - earlier.t;
    let v = speed_values(&later.body, later.params.beta);
    Ok(ScalarField::from_vec_unchecked(
        later
            .body
            .support()
            .iter()
            .zip(earlier.body.support().iter())
            .zip(&v)
            .map(|((s, s0), v)| c * (s - s0) + dt * v)
            .collect(),
    ))
}

/// When to stop an [`evolve`] run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaltPolicy {
    /// Fraction of the CFL step taken each step.
    pub safety: f64,
    /// Stop once `min s` drops below this fraction of its initial value.
    pub min_support_fraction: f64,
    /// Stop once the adaptive step falls below this.
    pub min_dt: f64,
    /// Stop exactly at this time.
    pub t_end: Option<f64>,
    pub max_steps: Option<usize>,
}

impl Default for HaltPolicy {
    fn default() -> Self {
        Self {
            safety: 0.5,
            min_support_fraction: 1e-3,
            min_dt: 1e-12,
            t_end: None,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Horizon,
    StepCap,
    NearExtinction,
    StepUnderflow,
}

/// Step with adaptive CFL-limited `dt` until the policy halts the run,
/// calling `observe` on every accepted state (including the initial one).
pub fn evolve(
    state: FlowState,
    policy: &HaltPolicy,
    mut observe: impl FnMut(&FlowState) -> Result<()>,
) -> Result<(FlowState, HaltReason)> {
    if !(policy.safety > 0.0 && policy.safety <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "safety must lie in (0, 1], got {}",
            policy.safety
        )));
    }
    let mut state = state;
    observe(&state)?;
    loop {
        if let Some(t_end) = policy.t_end {
            if state.t >= t_end {
                return Ok((state, HaltReason::Horizon));
            }
        }
        if policy.max_steps.is_some_and(|m| state.steps >= m) {
            return Ok((state, HaltReason::StepCap));
        }
        if state.params.direction == Direction::Contracting
            && state.body.support().min() < policy.min_support_fraction * state.initial_min_support
        {
            return Ok((state, HaltReason::NearExtinction));
        }
        let mut dt = cfl_dt(&state, policy.safety);
        if let Some(t_end) = policy.t_end {
            dt = dt.min(t_end - state.t);
        }
        if dt < policy.min_dt {
            return Ok((state, HaltReason::StepUnderflow));
        }
        state = step(&state, dt)?;
        observe(&state)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{build_grid, SphereGrid};
    use std::sync::Arc;

    fn sphere(n: usize) -> Arc<SphereGrid> {
        Arc::new(build_grid(2, n).unwrap())
    }

    fn circle(n: usize) -> Arc<SphereGrid> {
        Arc::new(build_grid(1, n).unwrap())
    }

    #[test]
    fn derived_exponents() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        assert_eq!(f.beta, 0.5);
        assert!((f.alpha - 2.0).abs() < 1e-15);
        assert!((f.harnack_exponent - 0.5).abs() < 1e-15);
        // 1 + alpha = 2 p (n+1) / (p+n+1) = 18 / 6
        assert!((f.one_plus_alpha() - 3.0).abs() < 1e-15);
        assert!(FlowParams::contracting(1.0, 2).is_err());
        assert!(FlowParams::contracting(2.0, 3).is_err());
        for p in [1.01, 1.5, 2.0, 7.0, 100.0] {
            for n in [1, 2] {
                assert!(FlowParams::contracting(p, n).unwrap().alpha > 0.0);
            }
        }
    }

    #[test]
    fn ball_law() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        assert_eq!(exact_ball_radius(1.0, 0.0, &f).unwrap(), 1.0);
        let r = exact_ball_radius(1.0, 1.0 / 6.0, &f).unwrap();
        assert!((r - 0.5_f64.cbrt()).abs() < 1e-15);
        assert!((f.ball_extinction_time(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            exact_ball_radius(1.0, 1.0 / 3.0, &f),
            Err(Error::PastExtinction { .. })
        ));
    }

    #[test]
    fn speeds_on_balls() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let b = Body::ball(sphere(16), 2.0).unwrap();
        for v in speed(&b, &f).iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        for v in dual_speed(&b, &f).iter() {
            assert!((v / 16.0 - 1.0).abs() < 1e-12);
        }
        let unit = Body::ball(circle(32), 1.0).unwrap();
        let f1 = FlowParams::contracting(2.0, 1).unwrap();
        assert!(speed(&unit, &f1).iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(dual_speed(&unit, &f1).iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn ellipse_speed_matches_closed_form() {
        // for an ellipse with semi-axes (a, b): S_1 = a^2 b^2 / s^3, so K / s^3 = 1 / (a b)^2
        let (a, b) = (2.0_f64, 0.5_f64);
        let f = FlowParams::contracting(2.0, 1).unwrap();
        let g = circle(1024);
        let body = Body::ellipsoid(g.clone(), &[a, b]).unwrap();
        let v = speed(&body, &f);
        for (k, z) in g.nodes().iter().enumerate() {
            let s = (a * a * z[0] * z[0] + b * b * z[1] * z[1]).sqrt();
            let exact = s * (a * b).powf(-2.0 * f.beta);
            assert!((v[k] - exact).abs() < 1e-6 * exact);
        }
    }

    #[test]
    fn one_step_on_unit_ball() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let st = FlowState::new(Body::ball(sphere(16), 1.0).unwrap(), f).unwrap();
        let next = step(&st, 1e-4).unwrap();
        let exact = exact_ball_radius(1.0, 1e-4, &f).unwrap();
        for v in next.body().support().iter() {
            assert!((v - exact).abs() < 1e-9);
        }
        assert_eq!(next.t(), 1e-4);
        assert_eq!(next.steps(), 1);

        let dual = FlowState::new(Body::ball(sphere(16), 1.0).unwrap(), f.with_direction(Direction::Dual)).unwrap();
        let grown = step(&dual, 1e-4).unwrap();
        for v in grown.body().support().iter() {
            assert!((v - 1.0 - 1e-4).abs() < 1e-7);
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let f = FlowParams::contracting(2.0, 1).unwrap();
        let st = FlowState::new(Body::ellipsoid(circle(128), &[1.0, 3.0]).unwrap(), f).unwrap();
        let bound = cfl_dt(&st, 1.0);
        assert!(matches!(step(&st, 2.0 * bound), Err(Error::StepTooLarge { .. })));
        assert!(step(&st, 0.5 * bound).is_ok());
    }

    #[test]
    fn cfl_scales_with_grid_and_radius() {
        let f = FlowParams::contracting(3.0, 1).unwrap();
        let st = |n: usize, r: f64| FlowState::new(Body::ball(circle(n), r).unwrap(), f).unwrap();
        let ratio = cfl_dt(&st(64, 1.0), 1.0) / cfl_dt(&st(128, 1.0), 1.0);
        assert!((ratio - 4.0).abs() < 1e-12);
        // D = beta R^{-(1+alpha)} on a ball
        let scaled = cfl_dt(&st(64, 2.0), 1.0) / cfl_dt(&st(64, 1.0), 1.0);
        assert!((scaled - 2.0_f64.powf(f.one_plus_alpha())).abs() < 1e-9);
        let fs = FlowParams::contracting(3.0, 2).unwrap();
        let a = FlowState::new(Body::ball(sphere(16), 1.0).unwrap(), fs).unwrap();
        let b = FlowState::new(Body::ball(sphere(32), 1.0).unwrap(), fs).unwrap();
        let ratio = cfl_dt(&a, 1.0) / cfl_dt(&b, 1.0);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    /// Grows a small high-frequency perturbation of a ball with fixed `dt`.
    fn perturbation_growth(grid: Arc<SphereGrid>, factor: f64) -> f64 {
        let f = FlowParams::contracting(2.0, grid.dim()).unwrap();
        let nyquist: Vec<f64> = (0..grid.len())
            .map(|k| 1.0 + 1e-9 * if k % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let st = FlowState::new(Body::new(grid, nyquist).unwrap(), f).unwrap();
        let dt = factor * cfl_dt(&st, 1.0);
        let mut cur = st;
        let dev = |s: &FlowState| {
            let v = s.body().support();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
        };
        let d0 = dev(&cur);
        for _ in 0..12 {
            cur = advance(&cur, dt).unwrap();
        }
        dev(&cur) / d0
    }

    #[test]
    fn stability_edge_is_where_cfl_puts_it() {
        let below = perturbation_growth(circle(64), 0.9);
        let above = perturbation_growth(circle(64), 1.2);
        assert!(below < 1.0, "{below}");
        assert!(above > 1.0, "{above}");
    }

    #[test]
    fn rescaled_ball_is_unit() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let mut st = FlowState::new(Body::ball(sphere(16), 1.0).unwrap(), f).unwrap();
        for _ in 0..5 {
            let dt = cfl_dt(&st, 0.5);
            st = step(&st, dt).unwrap();
        }
        let r = st.body().support()[0];
        let terminal = st.t() + f.ball_extinction_time(r);
        let rescaled = rescaled_body(&st, terminal).unwrap();
        for v in rescaled.support().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(rescaled_body(&st, st.t()).is_err());
        let est = terminal_estimate(&st);
        assert!((est.t_lo - terminal).abs() < 1e-12 && (est.t_hi - terminal).abs() < 1e-12);
    }

    #[test]
    fn harnack_on_balls() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let st = FlowState::new(Body::ball(sphere(16), 1.0).unwrap(), f).unwrap();
        assert_eq!(harnack_quantity(&st), 0.0);
        // Q(t) = (1 - 3t)^{-2/3} t^{1/2}
        let t = 0.1;
        let r = exact_ball_radius(1.0, t, &f).unwrap();
        let at = FlowState::at_time(Body::ball(sphere(16), r).unwrap(), f, t).unwrap();
        let q = (1.0 - 3.0 * t).powf(-2.0 / 3.0) * t.sqrt();
        assert!((harnack_quantity(&at) - q).abs() < 1e-12);
    }

    #[test]
    fn displacement_vanishes_at_equal_times_and_is_positive_on_balls() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let g = sphere(16);
        let ball_at = |t: f64| {
            let r = exact_ball_radius(1.0, t, &f).unwrap();
            FlowState::at_time(Body::ball(g.clone(), r).unwrap(), f, t).unwrap()
        };
        let a = ball_at(0.05);
        assert!(displacement_monitor(&a, &a).unwrap().iter().all(|v| *v == 0.0));
        for t in [0.06, 0.1, 0.2, 0.3, 0.33] {
            let m = displacement_monitor(&a, &ball_at(t)).unwrap();
            assert!(m.min() > 0.0);
        }
        let other = FlowState::new(Body::ball(sphere(24), 1.0).unwrap(), f).unwrap();
        assert!(matches!(displacement_monitor(&a, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn evolve_halts_near_extinction() {
        let f = FlowParams::contracting(2.0, 1).unwrap();
        let st = FlowState::new(Body::ball(circle(32), 1.0).unwrap(), f).unwrap();
        let mut count = 0;
        let (end, why) = evolve(st, &HaltPolicy::default(), |_| {
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(why, HaltReason::NearExtinction);
        assert!(end.body().support().min() < 1e-3);
        assert_eq!(count, end.steps() + 1);
        assert!((end.t() - f.ball_extinction_time(1.0)).abs() < 1e-4);
    }
}
