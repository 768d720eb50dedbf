//! Time reparameterization and adaptive integration up to the prescribed time.
//!
//! With `s = tan(πt / 2Tp)` we get `ds/dt = (π / 2Tp) k(t)`, so a field of the
//! form `k(t) f(y)` becomes `dy/ds = (2Tp/π) f(y)`: the singular gain is gone
//! and `t → Tp⁻` corresponds to `s → ∞`. The seeking dynamics are integrated
//! in `s` with a Dormand–Prince 5(4) pair.

use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, PI};

use log::{debug, warn};
use nalgebra::DVector;

use crate::dynamics::{equilibrium_residual, GainSchedule, PenaltyMode, SeekerState, SeekerSystem, Switching};
use crate::error::{Error, Result};
use crate::game::QuadraticGame;
use crate::network::Graph;

/// Fraction of `Tp` at which the prescribed time counts as reached. `Tp`
/// itself is an open endpoint.
pub const PRESCRIBED_FRACTION: f64 = 0.99;

/// `s = tan(πt / 2Tp)` for `t ∈ [0, Tp)`.
pub fn reparameterize(tp: f64, t: f64) -> Result<f64> {
    if !(tp > 0.0) || !(0.0..tp).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, Tp = {tp})")));
    }
    Ok((FRAC_PI_2 * t / tp).tan())
}

/// `t = (2Tp/π) arctan(s)` for `s ≥ 0`.
pub fn inverse_reparameterize(tp: f64, s: f64) -> Result<f64> {
    if !(tp > 0.0) || !(s >= 0.0) || s.is_nan() {
        return Err(Error::Domain(format!("s = {s} must be nonnegative (Tp = {tp})")));
    }
    let t = 2.0 * tp / PI * s.atan();
    // atan rounds to π/2 for huge s.
    Ok(if t >= tp { tp * (1.0 - f64::EPSILON) } else { t })
}

/// `q(t) = q(0) exp((2Tp/π) tan(πt / 2Tp))`, the solution of `q̇ = k q`.
///
/// Values above `q_cap` are clamped to it; the second component reports
/// whether that happened.
pub fn closed_form_q(schedule: &GainSchedule, t: f64, q_cap: f64) -> Result<(f64, bool)> {
    let s = reparameterize(schedule.tp(), t)?;
    let q = schedule.q0() * (2.0 * schedule.tp() / PI * s).exp();
    if q > q_cap {
        warn!("q({t}) = {q:.3e} exceeds cap {q_cap:.3e}; capped");
        return Ok((q_cap, true));
    }
    Ok((q, false))
}

/// What happens once `q` reaches `q_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QCapPolicy {
    /// Freeze `q` at the cap, flag it and keep integrating.
    #[default]
    Saturate,
    /// Stop with [`Status::QOverflow`].
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Horizon in reparameterized time.
    pub s_max: f64,
    /// Attempted-step budget (accepted plus rejected).
    pub max_steps: usize,
    pub q_cap: f64,
    pub q_cap_policy: QCapPolicy,
    /// Number of samples, uniform in `t` over `[0, t(s_max)]`. The sample at
    /// `PRESCRIBED_FRACTION · Tp` is always added.
    pub samples: usize,
    /// Stop early once the equilibrium residual falls below this value.
    pub converge_tol: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            s_max: (0.995 * FRAC_PI_2).tan(),
            max_steps: 20_000_000,
            q_cap: 1e12,
            q_cap_policy: QCapPolicy::Saturate,
            samples: 400,
            converge_tol: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::Domain(format!("s_max must be positive, got {}", self.s_max)));
        }
        if !(self.q_cap > 0.0) {
            return Err(Error::Domain("q_cap must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::Domain("need at least two samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Reached `s_max`.
    Completed,
    Converged,
    QOverflow,
    StepBudget,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::Converged => "converged",
            Status::QOverflow => "q_overflow",
            Status::StepBudget => "step_budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub s: f64,
    pub state: SeekerState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tp: f64,
    pub samples: Vec<Sample>,
    pub status: Status,
    pub stats: StepStats,
    /// Model time at which `q` first hit its cap.
    pub q_capped_at: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// First sample with `t ≥ t0`.
    pub fn sample_at_or_after(&self, t0: f64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.t >= t0)
    }

    /// The sample at `PRESCRIBED_FRACTION · Tp`, if the run got that far.
    pub fn prescribed_sample(&self) -> Option<&Sample> {
        self.samples
            .iter()
            .find(|s| (s.t - PRESCRIBED_FRACTION * self.tp).abs() <= 1e-9 * self.tp)
    }
}

/// Hairer's Dormand–Prince 5(4) tableau.
mod tableau {
    pub const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// Fifth-order minus embedded fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

/// Adaptive Dormand–Prince 5(4) stepper with PI step-size control and FSAL.
pub struct DormandPrince<F> {
    f: F,
    s: f64,
    y: Vec<f64>,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
    err_prev: f64,
    k: [Vec<f64>; 7],
    fsal: bool,
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    pub stats: StepStats,
}

const SAFETY: f64 = 0.9;
const ALPHA: f64 = 0.17;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

impl<F: FnMut(f64, &[f64], &mut [f64])> DormandPrince<F> {
    pub fn new(f: F, s0: f64, y0: &[f64], rel_tol: f64, abs_tol: f64) -> Self {
        let n = y0.len();
        Self {
            f,
            s: s0,
            y: y0.to_vec(),
            h: 0.0,
            rel_tol,
            abs_tol,
            err_prev: 1e-4,
            k: std::array::from_fn(|_| vec![0.0; n]),
            fsal: false,
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            stats: StepStats::default(),
        }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Mutable access to the state; invalidates the cached derivative.
    pub fn y_mut(&mut self) -> &mut [f64] {
        self.fsal = false;
        &mut self.y
    }

    fn eval_first(&mut self) {
        if !self.fsal {
            (self.f)(self.s, &self.y, &mut self.k[0]);
            self.stats.evals += 1;
            self.fsal = true;
        }
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.abs_tol + self.rel_tol * a.abs().max(b.abs())
    }

    /// Hairer's starting step heuristic.
    fn initial_step(&mut self, span: f64) -> f64 {
        self.eval_first();
        let n = self.y.len() as f64;
        let (mut d0, mut d1) = (0.0, 0.0);
        for (y, f) in self.y.iter().zip(&self.k[0]) {
            let sc = self.abs_tol + self.rel_tol * y.abs();
            d0 += (y / sc).powi(2);
            d1 += (f / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for ((t, y), f) in self.ytmp.iter_mut().zip(&self.y).zip(&self.k[0]) {
            *t = y + h0 * f;
        }
        (self.f)(self.s + h0, &self.ytmp, &mut self.k[1]);
        self.stats.evals += 1;
        let mut d2 = 0.0;
        for ((f1, f0), y) in self.k[1].iter().zip(&self.k[0]).zip(&self.y) {
            let sc = self.abs_tol + self.rel_tol * y.abs();
            d2 += ((f1 - f0) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Evaluates the stages of a step of size `h`, leaving the fifth-order
    /// solution in `ynew`. Returns the scaled error norm.
    fn stages(&mut self, h: f64) -> f64 {
        use tableau::{A, C, E};
        self.eval_first();
        for stage in 1..7 {
            for (i, t) in self.ytmp.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, a) in A[stage].iter().enumerate().take(stage) {
                    acc += a * self.k[j][i];
                }
                *t = self.y[i] + h * acc;
            }
            let (_, tail) = self.k.split_at_mut(stage);
            (self.f)(self.s + C[stage] * h, &self.ytmp, &mut tail[0]);
        }
        self.stats.evals += 6;
        // Stage 7 was evaluated at the fifth-order solution, held in ytmp.
        std::mem::swap(&mut self.ynew, &mut self.ytmp);

        let n = self.y.len();
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, w) in E.iter().enumerate() {
                e += w * self.k[j][i];
            }
            let sc = self.scale(self.y[i], self.ynew[i]);
            err += (h * e / sc).powi(2);
        }
        (err / n as f64).sqrt()
    }

    fn commit(&mut self, s_new: f64) {
        self.s = s_new;
        std::mem::swap(&mut self.y, &mut self.ynew);
        self.k.swap(0, 6);
        self.stats.accepted += 1;
    }

    /// Attempts one step of at most `s_end − s`. Returns whether it was
    /// accepted.
    pub fn try_step(&mut self, s_end: f64) -> Result<bool> {
        if self.h == 0.0 {
            self.h = self.initial_step(s_end - self.s);
        }
        let remaining = s_end - self.s;
        let last = self.h >= remaining;
        let h = if last { remaining } else { self.h };
        if h <= 1e-14 * self.s.abs().max(1.0) && !last {
            return Err(Error::StepUnderflow { s: self.s });
        }
        let err = self.stages(h);

        if err <= 1.0 && err.is_finite() {
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-ALPHA) * self.err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX)
            };
            self.err_prev = err.max(1e-4);
            self.commit(if last { s_end } else { self.s + h });
            if !last || fac * h > self.h {
                self.h = h * fac;
            }
            Ok(true)
        } else {
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-ALPHA)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            self.h = h * fac;
            self.stats.rejected += 1;
            Ok(false)
        }
    }

    /// Steps to `s_end` in a single step, without error control. Meant for
    /// retaking part of an accepted step.
    pub fn force_step(&mut self, s_end: f64) {
        let h = s_end - self.s;
        self.stages(h);
        self.commit(s_end);
    }

    /// Resets the position to `(s, y)`, for instance to the start of an
    /// accepted step. The step-size controller state is kept.
    pub fn rewind(&mut self, s: f64, y: &[f64]) {
        self.s = s;
        self.y.copy_from_slice(y);
        self.fsal = false;
    }

    /// Forgets the cached derivative, after the field itself changed.
    pub fn field_changed(&mut self) {
        self.fsal = false;
    }

    /// Integrates up to `s_end` exactly. `after_step` runs on every accepted
    /// step and may modify the state (returning `true` if it did).
    /// Returns `false` if the attempted-step budget ran out first.
    pub fn advance_to<P>(&mut self, s_end: f64, budget: usize, mut after_step: P) -> Result<bool>
    where
        P: FnMut(f64, &mut [f64]) -> bool,
    {
        while self.s < s_end {
            if self.stats.accepted + self.stats.rejected >= budget {
                return Ok(false);
            }
            if self.try_step(s_end)? && after_step(self.s, &mut self.y) {
                self.fsal = false;
            }
        }
        Ok(true)
    }
}

/// Classical fixed-step RK4 from `s0` to `s1` in `steps` steps.
pub fn rk4_fixed<F>(mut f: F, s0: f64, y0: &[f64], s1: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let h = (s1 - s0) / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for step in 0..steps {
        let s = s0 + step as f64 * h;
        f(s, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(s + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(s + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(s + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// Sample times: uniform in `t` on `[0, t_end]`, plus the prescribed-time
/// checkpoint when it lies inside the horizon.
fn sample_times(tp: f64, t_end: f64, count: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..count).map(|k| t_end * k as f64 / (count - 1) as f64).collect();
    let checkpoint = PRESCRIBED_FRACTION * tp;
    if checkpoint <= t_end && !ts.iter().any(|&t| (t - checkpoint).abs() <= 1e-12 * tp) {
        ts.push(checkpoint);
        ts.sort_by(f64::total_cmp);
    }
    ts
}

/// Width of the band around a constraint boundary (in `g`) and around the
/// ends of the sliding interval (in `θ`) inside which penalty modes switch.
pub const SWITCH_TOL: f64 = 1e-10;

/// The penalty mode a player's switching data calls for.
fn classify(sw: &Switching) -> PenaltyMode {
    if sw.g > SWITCH_TOL || (sw.g >= -SWITCH_TOL && sw.theta >= 1.0) {
        PenaltyMode::Active
    } else if sw.g < -SWITCH_TOL || sw.theta <= 0.0 {
        PenaltyMode::Inactive
    } else {
        PenaltyMode::Sliding
    }
}

/// Positive once some player has left the region its mode is valid in.
fn switch_excess(modes: &[Cell<PenaltyMode>], switching: &[Option<Switching>]) -> f64 {
    modes
        .iter()
        .zip(switching)
        .filter_map(|(m, sw)| {
            sw.map(|sw| match m.get() {
                PenaltyMode::Inactive => sw.g - SWITCH_TOL,
                PenaltyMode::Active => -sw.g - SWITCH_TOL,
                PenaltyMode::Sliding => (sw.theta - 1.0).max(-sw.theta) - SWITCH_TOL,
            })
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Retakes the step from `(s0, y0)` so that it ends inside the switching
/// band, by Illinois regula falsi on the end point.
fn locate_switch<F>(
    stepper: &mut DormandPrince<F>,
    system: &SeekerSystem<'_>,
    modes: &[Cell<PenaltyMode>],
    (s0, y0, e0): (f64, &[f64], f64),
    (s1, e1): (f64, f64),
) where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (mut a, mut fa, mut b, mut fb) = (s0, e0.max(-1e300), s1, e1);
    let mut side = 0;
    for _ in 0..200 {
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
            break;
        }
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        stepper.rewind(s0, y0);
        stepper.force_step(c);
        let fc = switch_excess(modes, &system.switching(stepper.y()));
        if fc > 0.0 {
            (b, fb) = (c, fc);
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else if fc >= -SWITCH_TOL {
            return;
        } else {
            (a, fa) = (c, fc);
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    stepper.rewind(s0, y0);
    stepper.force_step(b);
}

/// Integrates the seeking dynamics from `initial` (at `t = 0`) in
/// reparameterized time up to `cfg.s_max`.
///
/// The penalty is discontinuous across each constraint boundary. Every
/// player therefore carries a [`PenaltyMode`]; steps are retaken so that
/// they end where a mode stops being valid, and the mode is switched there.
/// A player whose field points outward but whose full penalty points back
/// inward slides along its boundary with the intermediate subgradient that
/// keeps it there.
///
/// A step that would decrease some `σ_i` or `ω_i` keeps its value from the
/// start of the step. The stepper carries `ln q` in place of `q`.
pub fn simulate(
    game: &QuadraticGame,
    graph: &Graph,
    schedule: &GainSchedule,
    initial: &SeekerState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !graph.is_connected() {
        return Err(Error::GraphDisconnected);
    }
    let system = SeekerSystem::new(game, graph, schedule)?;
    initial.check(game, graph)?;
    if !(initial.q > 0.0) {
        return Err(Error::Domain("initial q must be positive".into()));
    }

    let players = game.n_players();
    let tp = schedule.tp();
    let dsdt_scale = 2.0 * tp / PI;
    let q_index = system.flat_len() - 1;
    let q_cap = cfg.q_cap;

    let modes: Vec<Cell<PenaltyMode>> = vec![Cell::new(PenaltyMode::Inactive); players];
    let mut current = vec![PenaltyMode::Inactive; players];
    let ln_q_cap = q_cap.ln();
    let to_state = |y: &[f64]| {
        let mut state = SeekerState::from_flat(y, players);
        state.q = if y[q_index] >= ln_q_cap { q_cap } else { y[q_index].exp() };
        state
    };
    let mut scratch = vec![0.0; system.flat_len()];
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        for (c, m) in current.iter_mut().zip(&modes) {
            *c = m.get();
        }
        scratch.copy_from_slice(y);
        scratch[q_index] = y[q_index].exp();
        system.modal_field(&scratch, &current, dy);
        dy[q_index] = if y[q_index] >= ln_q_cap { 0.0 } else { 1.0 };
        dy.iter_mut().for_each(|v| *v *= dsdt_scale);
    };

    let t_end = inverse_reparameterize(tp, cfg.s_max)?;
    let times = sample_times(tp, t_end, cfg.samples);
    let mut y0 = initial.to_flat();
    let mut q_capped_at = None;
    if y0[q_index] > q_cap {
        y0[q_index] = q_cap;
        q_capped_at = Some(0.0);
    }
    let state0 = SeekerState::from_flat(&y0, players);
    y0[q_index] = y0[q_index].ln();
    let mut stepper = DormandPrince::new(rhs, 0.0, &y0, cfg.rel_tol, cfg.abs_tol);
    let mut samples = vec![Sample {
        t: 0.0,
        s: 0.0,
        state: state0,
    }];
    let mut status = Status::Completed;
    let mut y_start = y0.clone();
    let mut switches = 0usize;

    for &t in times.iter().skip(1) {
        let s_target = if t >= t_end { cfg.s_max } else { reparameterize(tp, t)? };
        let mut capped_now = false;
        let mut finished = true;
        while stepper.s() < s_target {
            if stepper.stats.accepted + stepper.stats.rejected >= cfg.max_steps {
                finished = false;
                break;
            }
            let sw0 = system.switching(stepper.y());
            let mut changed = false;
            for (m, sw) in modes.iter().zip(&sw0) {
                if let Some(sw) = sw {
                    let next = classify(sw);
                    if next != m.get() {
                        m.set(next);
                        changed = true;
                    }
                }
            }
            if changed {
                switches += 1;
                stepper.field_changed();
            }
            let s0 = stepper.s();
            y_start.copy_from_slice(stepper.y());
            if !stepper.try_step(s_target)? {
                continue;
            }
            let e1 = switch_excess(&modes, &system.switching(stepper.y()));
            if e1 > 0.0 {
                let e0 = switch_excess(&modes, &sw0);
                let s1 = stepper.s();
                locate_switch(&mut stepper, &system, &modes, (s0, &y_start, e0), (s1, e1));
            }
            let gains = q_index - 2 * players..q_index;
            if stepper.y()[gains.clone()].iter().zip(&y_start[gains.clone()]).any(|(new, old)| new < old) {
                for (new, old) in stepper.y_mut()[gains.clone()].iter_mut().zip(&y_start[gains]) {
                    *new = new.max(*old);
                }
            }
            if stepper.y()[q_index] > ln_q_cap {
                stepper.y_mut()[q_index] = ln_q_cap;
                capped_now = true;
            }
        }
        let s = stepper.s();
        if capped_now && q_capped_at.is_none() {
            let t_cap = inverse_reparameterize(tp, s)?;
            warn!("q reached cap {q_cap:.3e} near t = {t_cap:.6}");
            q_capped_at = Some(t_cap);
        }
        let state = to_state(stepper.y());
        if !state.is_finite() {
            return Err(Error::NonFinite { sample: samples.len(), s });
        }
        let sample_t = if finished { t.min(t_end) } else { inverse_reparameterize(tp, s)? };
        samples.push(Sample { t: sample_t, s, state });

        if !finished {
            status = Status::StepBudget;
            break;
        }
        if capped_now && cfg.q_cap_policy == QCapPolicy::Stop {
            status = Status::QOverflow;
            break;
        }
        if let Some(tol) = cfg.converge_tol {
            let last = &samples.last().unwrap().state;
            let r = equilibrium_residual(game, graph, &last.x, &last.sigma)?;
            if r.max() <= tol {
                status = Status::Converged;
                break;
            }
        }
    }
    debug!(
        "simulate: status {} after {} accepted / {} rejected steps, {} mode switches",
        status.as_str(),
        stepper.stats.accepted,
        stepper.stats.rejected,
        switches
    );
    Ok(Trajectory {
        tp,
        samples,
        status,
        stats: stepper.stats,
        q_capped_at,
    })
}

/// Initial state with explicit estimates and uniform adaptive gains.
pub fn initial_state(x: DVector<f64>, players: usize, sigma0: f64, omega0: f64, q0: f64) -> SeekerState {
    SeekerState {
        x,
        sigma: DVector::from_element(players, sigma0),
        omega: DVector::from_element(players, omega0),
        q: q0,
    }
}
