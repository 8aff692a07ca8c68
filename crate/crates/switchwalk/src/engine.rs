//! Path sampling for the switched jump-diffusion.
//!
//! Between switches the process follows one regime: Euler–Maruyama diffusion
//! steps plus thinned big jumps (sizes > δ; the compensator of the dropped
//! small jumps is folded into the drift). Switching is driven by the additive
//! clock `A_t = ∫ -q_ii(X_s) ds` raced against a unit exponential threshold;
//! when it rings the level redistributes by `-q_ij/q_ii` (cemetery with the
//! leftover mass) and a fresh threshold is drawn.
//!
//! Within one step the order is: clock, then move, then boundary — a fixed
//! tie-break, the continuum events coincide with probability zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientSet, SwitchField};
use crate::error::{Error, Result};
use crate::geom::{self, Ball};

/// Default small-jump cutoff.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Continuity-correction constant `-ζ(1/2)/√(2π)` for discretely monitored
/// boundary crossings.
pub const BOUNDARY_SHIFT_CONST: f64 = 0.582_597_480_423_405_4;

/// Exit-detection rule.
///
/// Discrete monitoring misses excursions between grid times, which inflates
/// exit times by `O(√dt)`. `ShiftedGrid` absorbs that bias by detecting
/// against the inward-shifted radius `r - 0.5826·σₙ·√dt` (with `σₙ` the
/// normal-direction diffusion scale) and projecting diffusive exit points
/// onto the sphere; `PlainGrid` is the uncorrected first-grid-time rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    ShiftedGrid,
    PlainGrid,
}

/// Discretization and guard controls for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimControls {
    /// Base time step.
    pub dt: f64,
    /// Small-jump cutoff in (0, 1].
    pub delta: f64,
    /// Horizon guard; paths reaching it are flagged, never silently dropped.
    pub max_time: f64,
    /// Envelope bound for jump thinning (acceptance `b₂/Θ₃`).
    pub theta3: f64,
    /// Exit-detection rule.
    pub boundary_policy: BoundaryPolicy,
}

impl SimControls {
    /// Defaults for exits from `ball`: `dt = min(1e-4, (r/50)²)` so the
    /// boundary layer is resolved, horizon `10³ r²`.
    pub fn for_ball(ball: &Ball) -> Self {
        let r = ball.radius;
        Self {
            dt: (1e-4f64).min((r / 50.0) * (r / 50.0)),
            delta: DEFAULT_DELTA,
            max_time: 1e3 * r * r,
            theta3: 1.0,
            boundary_policy: BoundaryPolicy::ShiftedGrid,
        }
    }

    /// Free-space controls (no exit ball), e.g. for switching-time functionals.
    pub fn free(dt: f64, max_time: f64) -> Self {
        Self {
            dt,
            delta: DEFAULT_DELTA,
            max_time,
            theta3: 1.0,
            boundary_policy: BoundaryPolicy::ShiftedGrid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParam(format!("delta ∉ (0,1]: {}", self.delta)));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::InvalidParam("max_time must be > 0".into()));
        }
        if !(self.theta3 >= 0.0) {
            return Err(Error::InvalidParam("theta3 must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Why a sampled segment or path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitReason {
    /// Left the ball.
    Boundary,
    /// The switching clock rang first (pre-switch subprocess lifetime).
    SwitchBeforeBoundary,
    /// Redistribution sent the path to the cemetery.
    Killed,
    /// Horizon guard; the record carries the flag.
    Horizon,
}

/// Event kinds in a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    DiffusionStep,
    Jump,
    Switch,
    Kill,
    Exit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub t: f64,
    pub x: Vec<f64>,
    pub level: usize,
    pub kind: EventKind,
}

/// One sampled trajectory with its events and exit data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedPathRecord {
    pub events: Vec<PathEvent>,
    pub exit_state: Option<(Vec<f64>, usize)>,
    pub exit_time: f64,
    pub exit_reason: ExitReason,
    pub rng_stream_id: u64,
}

impl SwitchedPathRecord {
    /// Distance the exit position overshoots the sphere (diffusion-grid bias
    /// diagnostic); `None` for non-boundary exits.
    pub fn exit_overshoot(&self, ball: &Ball) -> Option<f64> {
        if self.exit_reason != ExitReason::Boundary {
            return None;
        }
        self.exit_state.as_ref().map(|(x, _)| geom::dist(x, &ball.center) - ball.radius)
    }
}

/// Streaming hooks over a path; estimators fold over steps without
/// materializing trajectories.
pub trait PathObserver {
    /// Pre-move state of each step that the process survives whole.
    #[inline]
    fn occupation(&mut self, _t: f64, _x: &[f64], _level: usize, _dt: f64) {}
    /// Accepted big jump (position after the jump).
    #[inline]
    fn jump(&mut self, _t: f64, _x_after: &[f64], _level: usize) {}
    /// Level switch at time `t` from `from` to `to`, position `x` (left limit).
    #[inline]
    fn switch(&mut self, _t: f64, _x: &[f64], _from: usize, _to: usize) {}
}

/// Observer that ignores everything.
pub struct NullObserver;
impl PathObserver for NullObserver {}

/// Terminal data of one killed-exit segment (single regime).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub t: f64,
    pub x: Vec<f64>,
    pub level: usize,
    pub reason: ExitReason,
    /// Whether the last move before a boundary exit was a jump.
    pub exited_by_jump: bool,
}

/// Terminal data of a switched path.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedOutcome {
    pub t: f64,
    /// Exit or kill position; the left limit for kills.
    pub x: Vec<f64>,
    pub level: usize,
    pub reason: ExitReason,
    /// Time, position and level before the first switch, when one happened.
    pub first_switch: Option<(f64, Vec<f64>, usize)>,
    pub n_switches: usize,
    pub exited_by_jump: bool,
}

enum DriftMode {
    /// Per-level constant effective drift.
    Cached(Vec<Vec<f64>>),
    /// Even kernel (or no jumps): effective drift is the plain drift field.
    Plain,
    /// `b₁(x,i) - b₂(x,·,i) · moment` with a z-independent modulator.
    ScaledMoment { moment: Vec<f64> },
    /// Full quadrature per step (custom modulators).
    Generic,
}

enum SwitchMode {
    Absent,
    /// Constant matrix: per-level hazard, cumulative redistribution rows.
    Constant { hazard: Vec<f64>, rows: Vec<Vec<f64>> },
    /// Spatially varying: evaluate the matrix at the pre-move point.
    Dynamic,
}

/// Prepared simulation state for one coefficient set.
pub struct Engine<'a> {
    coeffs: &'a CoefficientSet,
    pub controls: SimControls,
    sqrt_dt: f64,
    /// Per-level big-jump intensity Λᵢ(δ).
    pub big_rate: Vec<f64>,
    /// Per-level `1 - exp(-Λᵢ(δ) dt)`.
    jump_prob: Vec<f64>,
    const_chol: Option<Vec<f64>>,
    drift_mode: DriftMode,
    switch_mode: SwitchMode,
}

/// Reusable per-path buffers.
pub struct Scratch {
    chol: Vec<f64>,
    drift: Vec<f64>,
    gauss: Vec<f64>,
    zbuf: Vec<f64>,
    qbuf: Vec<f64>,
}

impl Scratch {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            chol: vec![0.0; d * d],
            drift: vec![0.0; d],
            gauss: vec![0.0; d],
            zbuf: vec![0.0; d],
            qbuf: vec![0.0; m * m],
        }
    }
}

impl<'a> Engine<'a> {
    pub fn new(coeffs: &'a CoefficientSet, controls: SimControls) -> Result<Self> {
        controls.validate()?;
        let d = coeffs.d;
        let m = coeffs.m;
        let mut big_rate = Vec::with_capacity(m);
        let mut jump_prob = Vec::with_capacity(m);
        for _level in 0..m {
            let lam = coeffs.envelope_rate(controls.delta, controls.theta3)?;
            if !lam.is_finite() {
                return Err(Error::InvalidParam("big-jump intensity is not finite".into()));
            }
            big_rate.push(lam);
            jump_prob.push(1.0 - (-lam * controls.dt).exp());
        }
        let const_chol = if coeffs.diffusion.is_constant() {
            let mut l = vec![0.0; d * d];
            coeffs.diffusion.cholesky_into(&vec![0.0; d], 0, &mut l)?;
            Some(l)
        } else {
            None
        };
        let drift_mode = Self::plan_drift(coeffs, &controls)?;
        let switch_mode = Self::plan_switching(coeffs)?;
        Ok(Self {
            coeffs,
            controls,
            sqrt_dt: controls.dt.sqrt(),
            big_rate,
            jump_prob,
            const_chol,
            drift_mode,
            switch_mode,
        })
    }

    fn plan_drift(coeffs: &CoefficientSet, controls: &SimControls) -> Result<DriftMode> {
        use crate::coeffs::{DriftField, JumpModulator};
        if coeffs.jump.is_none() || coeffs.jump.is_even_in_z() && coeffs.b2.is_z_independent() {
            match &coeffs.drift {
                DriftField::Zero | DriftField::Constant(_) => {
                    let mut cached = Vec::with_capacity(coeffs.m);
                    for level in 0..coeffs.m {
                        cached.push(coeffs.effective_drift(
                            &vec![0.0; coeffs.d],
                            level,
                            controls.delta,
                        )?);
                    }
                    return Ok(DriftMode::Cached(cached));
                }
                DriftField::Custom(_) => return Ok(DriftMode::Plain),
            }
        }
        if coeffs.b2.is_z_independent() {
            let moment = coeffs.jump.compensator_moment(coeffs.d, controls.delta)?;
            match (&coeffs.drift, &coeffs.b2) {
                (DriftField::Zero | DriftField::Constant(_), JumpModulator::Constant(_)) => {
                    let mut cached = Vec::with_capacity(coeffs.m);
                    for level in 0..coeffs.m {
                        cached.push(coeffs.effective_drift(
                            &vec![0.0; coeffs.d],
                            level,
                            controls.delta,
                        )?);
                    }
                    Ok(DriftMode::Cached(cached))
                }
                _ => Ok(DriftMode::ScaledMoment { moment }),
            }
        } else {
            Ok(DriftMode::Generic)
        }
    }

    fn plan_switching(coeffs: &CoefficientSet) -> Result<SwitchMode> {
        let m = coeffs.m;
        match &coeffs.switching {
            SwitchField::Zero => Ok(SwitchMode::Absent),
            SwitchField::Constant(q) => {
                if q.iter().all(|&v| v == 0.0) {
                    return Ok(SwitchMode::Absent);
                }
                let mut hazard = Vec::with_capacity(m);
                let mut rows = Vec::with_capacity(m);
                for i in 0..m {
                    hazard.push(-q[i * m + i]);
                    rows.push(q[i * m..(i + 1) * m].to_vec());
                }
                Ok(SwitchMode::Constant { hazard, rows })
            }
            _ => Ok(SwitchMode::Dynamic),
        }
    }

    #[inline]
    fn hazard_at(&self, x: &[f64], level: usize, scratch: &mut Scratch) -> f64 {
        match &self.switch_mode {
            SwitchMode::Absent => 0.0,
            SwitchMode::Constant { hazard, .. } => hazard[level],
            SwitchMode::Dynamic => {
                let m = self.coeffs.m;
                self.coeffs.switching.eval_into(x, m, &mut scratch.qbuf);
                -scratch.qbuf[level * m + level]
            }
        }
    }

    /// Redistribution draw at a ring: `Ok(Some(j))` to switch, `Ok(None)` to
    /// kill. `x` is the pre-switch position.
    fn redistribute(
        &self,
        x: &[f64],
        level: usize,
        scratch: &mut Scratch,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<usize>> {
        let m = self.coeffs.m;
        let row: &[f64] = match &self.switch_mode {
            SwitchMode::Absent => unreachable!("no ring without hazard"),
            SwitchMode::Constant { rows, .. } => &rows[level],
            SwitchMode::Dynamic => {
                self.coeffs.switching.eval_into(x, m, &mut scratch.qbuf);
                &scratch.qbuf[level * m..(level + 1) * m]
            }
        };
        let qii = row[level];
        if !(qii < 0.0) {
            return Err(Error::ConditionBreach(format!(
                "clock rang where q_ii = {qii} ≥ 0 at x = {x:?}"
            )));
        }
        let mut total = 0.0;
        let u: f64 = rng.random();
        for j in 0..m {
            if j == level {
                continue;
            }
            let p = row[j] / -qii;
            if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                return Err(Error::ConditionBreach(format!(
                    "redistribution probability {p} outside [0,1] at x = {x:?}"
                )));
            }
            total += p.clamp(0.0, 1.0);
            if u < total {
                return Ok(Some(j));
            }
        }
        if total > 1.0 + 1e-12 {
            return Err(Error::ConditionBreach(format!(
                "redistribution row sums to {total} > 1 at x = {x:?}"
            )));
        }
        Ok(None) // cemetery
    }

    #[inline]
    fn effective_drift_into(
        &self,
        x: &[f64],
        level: usize,
        scratch_drift: &mut [f64],
    ) -> Result<()> {
        match &self.drift_mode {
            DriftMode::Cached(per_level) => {
                scratch_drift.copy_from_slice(&per_level[level]);
            }
            DriftMode::Plain => {
                self.coeffs.drift.eval_into(x, level, scratch_drift);
            }
            DriftMode::ScaledMoment { moment } => {
                self.coeffs.drift.eval_into(x, level, scratch_drift);
                let factor = self.coeffs.b2.eval(x, moment, level);
                for k in 0..scratch_drift.len() {
                    scratch_drift[k] -= factor * moment[k];
                }
            }
            DriftMode::Generic => {
                let b = self.coeffs.effective_drift(x, level, self.controls.delta)?;
                scratch_drift.copy_from_slice(&b);
            }
        }
        Ok(())
    }

    /// One Euler–Maruyama move of `x` in place (no jump, no clock).
    #[inline]
    fn diffuse(
        &self,
        x: &mut [f64],
        level: usize,
        scratch: &mut Scratch,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let d = x.len();
        let dt = self.controls.dt;
        self.effective_drift_into(x, level, &mut scratch.drift)?;
        let chol: &[f64] = if let Some(l) = &self.const_chol {
            l
        } else {
            self.coeffs.diffusion.cholesky_into(x, level, &mut scratch.chol)?;
            &scratch.chol
        };
        for g in scratch.gauss.iter_mut() {
            *g = rng.sample::<f64, _>(StandardNormal);
        }
        for k in 0..d {
            let mut dx = scratch.drift[k] * dt;
            let row = &chol[k * d..(k + 1) * d];
            for l in 0..=k {
                dx += row[l] * scratch.gauss[l] * self.sqrt_dt;
            }
            x[k] += dx;
        }
        Ok(())
    }

    /// Propose-and-thin one big jump; returns true when a jump was accepted
    /// and applied to `x`.
    #[inline]
    fn try_jump(
        &self,
        x: &mut [f64],
        level: usize,
        scratch: &mut Scratch,
        rng: &mut ChaCha8Rng,
    ) -> Result<bool> {
        let p = self.jump_prob[level];
        if p == 0.0 {
            return Ok(false);
        }
        if rng.random::<f64>() >= p {
            return Ok(false);
        }
        self.coeffs.jump.sample_big_jump(x.len(), self.controls.delta, rng, &mut scratch.zbuf)?;
        let b2 = self.coeffs.b2.eval(x, &scratch.zbuf, level);
        if b2 > self.controls.theta3 * (1.0 + 1e-12) {
            return Err(Error::ConditionBreach(format!(
                "b₂ = {b2} exceeds the thinning envelope Θ₃ = {}",
                self.controls.theta3
            )));
        }
        if rng.random::<f64>() < b2 / self.controls.theta3 {
            for k in 0..x.len() {
                x[k] += scratch.zbuf[k];
            }
            return Ok(true);
        }
        Ok(false)
    }

    /// Run one single-regime segment from `(start, level)` at time `t0`:
    /// until the ball boundary (when `ball` is given), the clock ring, or the
    /// horizon. The exponential threshold is supplied so switched paths can
    /// redraw it per epoch.
    #[allow(clippy::too_many_arguments)]
    pub fn run_segment<O: PathObserver>(
        &self,
        ball: Option<&Ball>,
        start: &[f64],
        level: usize,
        t0: f64,
        threshold: f64,
        scratch: &mut Scratch,
        rng: &mut ChaCha8Rng,
        observer: &mut O,
    ) -> Result<SegmentOutcome> {
        let dt = self.controls.dt;
        // Smallest possible detection radius: below it the full boundary
        // check can be skipped; `0.0` forces the full check every step.
        let quick_sq = ball.map(|b| match self.controls.boundary_policy {
            BoundaryPolicy::PlainGrid => b.radius * b.radius,
            BoundaryPolicy::ShiftedGrid => match self.coeffs.diffusion.sigma_sup() {
                Some(s) => {
                    let rd_min = (b.radius - BOUNDARY_SHIFT_CONST * s * self.sqrt_dt)
                        .max(0.5 * b.radius);
                    rd_min * rd_min
                }
                None => 0.0,
            },
        });
        let mut x = start.to_vec();
        let mut t = t0;
        let mut clock = 0.0f64;
        loop {
            if t >= self.controls.max_time {
                return Ok(SegmentOutcome {
                    t,
                    x,
                    level,
                    reason: ExitReason::Horizon,
                    exited_by_jump: false,
                });
            }
            // Clock first (tie-break rule): hazard frozen at the pre-move point.
            let rate = self.hazard_at(&x, level, scratch);
            if rate > 0.0 && clock + rate * dt >= threshold {
                let frac = ((threshold - clock) / (rate * dt)).clamp(0.0, 1.0);
                let ring_t = t + frac * dt;
                // The slice [t, ring) is still occupied at x.
                observer.occupation(t, &x, level, frac * dt);
                return Ok(SegmentOutcome {
                    t: ring_t,
                    x,
                    level,
                    reason: ExitReason::SwitchBeforeBoundary,
                    exited_by_jump: false,
                });
            }
            clock += rate * dt;
            observer.occupation(t, &x, level, dt);

            // Diffusion move, then the diffusive boundary check (shifted
            // radius, projected exit point).
            self.diffuse(&mut x, level, scratch, rng)?;
            t += dt;
            if let Some(b) = ball {
                let dsq = geom::dist_sq(&x, &b.center);
                if dsq >= quick_sq.unwrap() {
                    let dist = dsq.sqrt();
                    let detect_radius = match self.controls.boundary_policy {
                        BoundaryPolicy::PlainGrid => b.radius,
                        BoundaryPolicy::ShiftedGrid => {
                            let shift = BOUNDARY_SHIFT_CONST
                                * self.normal_std(&x, b, level, scratch)
                                * self.sqrt_dt;
                            (b.radius - shift).max(0.5 * b.radius)
                        }
                    };
                    if dist >= detect_radius {
                        // A diffusive crossing detected inside the sphere
                        // stands in for the continuum exit point: project it
                        // radially.
                        if dist < b.radius {
                            let scale = b.radius / dist;
                            for k in 0..x.len() {
                                x[k] = b.center[k] + scale * (x[k] - b.center[k]);
                            }
                        }
                        return Ok(SegmentOutcome {
                            t,
                            x,
                            level,
                            reason: ExitReason::Boundary,
                            exited_by_jump: false,
                        });
                    }
                }
            }

            // At most one thinned jump; its landing point is exact, so the
            // jump-exit check uses the true radius. A jump into the shift
            // shell stays inside and the walk continues.
            let jumped = self.try_jump(&mut x, level, scratch, rng)?;
            if jumped {
                observer.jump(t, &x, level);
                if let Some(b) = ball {
                    if geom::dist_sq(&x, &b.center) >= b.radius * b.radius {
                        return Ok(SegmentOutcome {
                            t,
                            x,
                            level,
                            reason: ExitReason::Boundary,
                            exited_by_jump: true,
                        });
                    }
                }
            }
        }
    }

    /// Diffusion scale in the outward normal direction at `x`,
    /// `√(nᵀ a(x,i) n)` with `n = (x - c)/|x - c|`, via the step's factor.
    #[inline]
    fn normal_std(&self, x: &[f64], ball: &Ball, level: usize, scratch: &mut Scratch) -> f64 {
        let d = x.len();
        let chol: &[f64] = if let Some(l) = &self.const_chol {
            l
        } else {
            // The factor from the generating step is stale by one move; the
            // O(√dt) shift tolerates an O(√dt)-old coefficient.
            if self.coeffs.diffusion.cholesky_into(x, level, &mut scratch.chol).is_err() {
                return 0.0;
            }
            &scratch.chol
        };
        let mut nsq = 0.0;
        for k in 0..d {
            nsq += (x[k] - ball.center[k]) * (x[k] - ball.center[k]);
        }
        if nsq == 0.0 {
            return 0.0;
        }
        let inv = nsq.sqrt().recip();
        // |Lᵀ n|²
        let mut total = 0.0;
        for k in 0..d {
            let mut v = 0.0;
            for i in k..d {
                v += chol[i * d + k] * (x[i] - ball.center[i]) * inv;
            }
            total += v * v;
        }
        total.sqrt()
    }

    /// Full switched path from `(start, level)`: iterate segments, redrawing
    /// the exponential threshold after each switch; terminate at the domain
    /// boundary, a kill, or the horizon.
    pub fn run_switched<O: PathObserver>(
        &self,
        domain: &Ball,
        start: &[f64],
        level: usize,
        scratch: &mut Scratch,
        rng: &mut ChaCha8Rng,
        observer: &mut O,
    ) -> Result<SwitchedOutcome> {
        if !domain.contains(start) {
            return Err(Error::Domain("start point must lie inside the domain ball".into()));
        }
        let mut x = start.to_vec();
        let mut lvl = level;
        let mut t = 0.0;
        let mut first_switch = None;
        let mut n_switches = 0usize;
        loop {
            let threshold = sample_exp1(rng);
            let seg =
                self.run_segment(Some(domain), &x, lvl, t, threshold, scratch, rng, observer)?;
            match seg.reason {
                ExitReason::Boundary | ExitReason::Horizon => {
                    return Ok(SwitchedOutcome {
                        t: seg.t,
                        x: seg.x,
                        level: lvl,
                        reason: seg.reason,
                        first_switch,
                        n_switches,
                        exited_by_jump: seg.exited_by_jump,
                    });
                }
                ExitReason::SwitchBeforeBoundary => {
                    if first_switch.is_none() {
                        first_switch = Some((seg.t, seg.x.clone(), lvl));
                    }
                    match self.redistribute(&seg.x, lvl, scratch, rng)? {
                        Some(j) => {
                            observer.switch(seg.t, &seg.x, lvl, j);
                            n_switches += 1;
                            x = seg.x;
                            lvl = j;
                            t = seg.t;
                        }
                        None => {
                            return Ok(SwitchedOutcome {
                                t: seg.t,
                                x: seg.x,
                                level: lvl,
                                reason: ExitReason::Killed,
                                first_switch,
                                n_switches,
                                exited_by_jump: false,
                            });
                        }
                    }
                }
                ExitReason::Killed => unreachable!("segments do not kill"),
            }
        }
    }
}

#[inline]
fn sample_exp1(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::Exp1)
}

/// One Euler–Maruyama displacement step (mean `b_eff dt`, covariance `a dt`).
pub fn step_diffusion(
    coeffs: &CoefficientSet,
    x: &[f64],
    level: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if dt == 0.0 {
        return Ok(x.to_vec());
    }
    let mut controls = SimControls::free(dt, f64::INFINITY);
    controls.theta3 = 1.0;
    let engine = Engine::new(coeffs, controls)?;
    let mut scratch = Scratch::new(coeffs.d, coeffs.m);
    let mut out = x.to_vec();
    engine.diffuse(&mut out, level, &mut scratch, rng)?;
    Ok(out)
}

/// Propose one thinned big jump over a step of length `dt`; `None` when no
/// jump fires or the proposal is rejected.
pub fn sample_jump(
    coeffs: &CoefficientSet,
    x: &[f64],
    level: usize,
    delta: f64,
    dt: f64,
    theta3: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec<f64>>> {
    let mut controls = SimControls::free(dt, f64::INFINITY);
    controls.delta = delta;
    controls.theta3 = theta3;
    let engine = Engine::new(coeffs, controls)?;
    let mut scratch = Scratch::new(coeffs.d, coeffs.m);
    let mut moved = x.to_vec();
    if engine.try_jump(&mut moved, level, &mut scratch, rng)? {
        Ok(Some(geom::sub(&moved, x)))
    } else {
        Ok(None)
    }
}

struct Recorder {
    events: Vec<PathEvent>,
    record_steps: bool,
}

impl PathObserver for Recorder {
    fn occupation(&mut self, t: f64, x: &[f64], level: usize, dt: f64) {
        let _ = dt;
        if self.record_steps {
            self.events.push(PathEvent { t, x: x.to_vec(), level, kind: EventKind::DiffusionStep });
        }
    }
    fn jump(&mut self, t: f64, x_after: &[f64], level: usize) {
        self.events.push(PathEvent { t, x: x_after.to_vec(), level, kind: EventKind::Jump });
    }
    fn switch(&mut self, t: f64, x: &[f64], _from: usize, to: usize) {
        self.events.push(PathEvent { t, x: x.to_vec(), level: to, kind: EventKind::Switch });
    }
}

/// Sample the pre-switch subprocess from `start` in `ball` and record it:
/// a single regime killed at the clock ring, the boundary, or the horizon.
pub fn simulate_killed_exit(
    coeffs: &CoefficientSet,
    ball: &Ball,
    start: (&[f64], usize),
    controls: SimControls,
    stream: crate::rng::RngStream,
) -> Result<SwitchedPathRecord> {
    if !ball.contains(start.0) {
        return Err(Error::Domain("start point must lie inside the ball".into()));
    }
    let engine = Engine::new(coeffs, controls)?;
    let mut scratch = Scratch::new(coeffs.d, coeffs.m);
    let mut rng = stream.rng();
    let mut rec = Recorder { events: Vec::new(), record_steps: true };
    let threshold = sample_exp1(&mut rng);
    let seg = engine.run_segment(
        Some(ball),
        start.0,
        start.1,
        0.0,
        threshold,
        &mut scratch,
        &mut rng,
        &mut rec,
    )?;
    let kind = match seg.reason {
        ExitReason::Boundary => EventKind::Exit,
        ExitReason::SwitchBeforeBoundary => EventKind::Switch,
        ExitReason::Horizon => EventKind::Exit,
        ExitReason::Killed => EventKind::Kill,
    };
    rec.events.push(PathEvent { t: seg.t, x: seg.x.clone(), level: seg.level, kind });
    Ok(SwitchedPathRecord {
        events: rec.events,
        exit_state: Some((seg.x, seg.level)),
        exit_time: seg.t,
        exit_reason: seg.reason,
        rng_stream_id: stream.stream_id,
    })
}

/// Sample a full switched path from `start` in `domain` and record it.
pub fn simulate_switched(
    coeffs: &CoefficientSet,
    domain: &Ball,
    start: (&[f64], usize),
    controls: SimControls,
    stream: crate::rng::RngStream,
) -> Result<SwitchedPathRecord> {
    let engine = Engine::new(coeffs, controls)?;
    let mut scratch = Scratch::new(coeffs.d, coeffs.m);
    let mut rng = stream.rng();
    let mut rec = Recorder { events: Vec::new(), record_steps: true };
    let out = engine.run_switched(domain, start.0, start.1, &mut scratch, &mut rng, &mut rec)?;
    let kind = match out.reason {
        ExitReason::Boundary | ExitReason::Horizon => EventKind::Exit,
        ExitReason::Killed => EventKind::Kill,
        ExitReason::SwitchBeforeBoundary => unreachable!(),
    };
    rec.events.push(PathEvent { t: out.t, x: out.x.clone(), level: out.level, kind });
    Ok(SwitchedPathRecord {
        events: rec.events,
        exit_state: match out.reason {
            ExitReason::Killed => None,
            _ => Some((out.x.clone(), out.level)),
        },
        exit_time: out.t,
        exit_reason: out.reason,
        rng_stream_id: stream.stream_id,
    })
}
