//! Monte Carlo functionals over sampled paths: boundary functionals, killed
//! resolvents, switch-time laws, occupation-measure Green densities, the
//! coupling-strength probe and truncated level-coupling expansions.
//!
//! Parallelism is deterministic: paths are keyed by stream id, executed in
//! fixed chunks, and reduced in chunk order, so estimates are bit-identical
//! for any worker count.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::engine::{Engine, ExitReason, PathObserver, Scratch, SimControls};
use crate::error::{Error, Result};
use crate::geom::{self, Ball};
use crate::rng::RngStream;

/// Fixed path-chunk size for order-independent parallel reduction.
pub const CHUNK: u64 = 1024;

/// Boundary payoff `φ(x, level)`, evaluable on and outside the domain.
#[derive(Clone)]
pub struct Payoff(Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>);

impl Payoff {
    pub fn new<F: Fn(&[f64], usize) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], level: usize) -> f64 {
        (self.0)(x, level)
    }

    pub fn constant(v: f64) -> Self {
        Self::new(move |_x, _l| v)
    }

    /// `shift + g · x`, positive on the unit sphere when `shift > |g|`.
    pub fn linear(shift: f64, gradient: Vec<f64>) -> Self {
        Self::new(move |x, _l| shift + geom::dot(&gradient, x))
    }

    /// Indicator of the half-space `x_axis > threshold`.
    pub fn halfspace(axis: usize, threshold: f64) -> Self {
        Self::new(move |x, _l| if x[axis] > threshold { 1.0 } else { 0.0 })
    }

    /// Payoff carried by a single level only.
    pub fn level_indicator(level: usize) -> Self {
        Self::new(move |_x, l| if l == level { 1.0 } else { 0.0 })
    }
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Payoff(..)")
    }
}

/// Scalar field `φ(x)` for resolvent-type integrals.
#[derive(Clone)]
pub struct ScalarField(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl ScalarField {
    pub fn new<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }

    pub fn constant(v: f64) -> Self {
        Self::new(move |_x| v)
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarField(..)")
    }
}

/// Mean, spread and provenance of one Monte Carlo functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over √n.
    pub stderr: f64,
    pub n: u64,
    pub ci95: (f64, f64),
    /// Paths cut by the horizon guard (they contribute zero).
    pub n_censored: u64,
}

impl MCEstimate {
    pub fn from_samples(values: &[f64], n_censored: u64) -> Self {
        let n = values.len() as u64;
        if n == 0 {
            return Self { mean: 0.0, stderr: 0.0, n, ci95: (0.0, 0.0), n_censored };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        let stderr = (var / n as f64).sqrt();
        Self {
            mean,
            stderr,
            n,
            ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
            n_censored,
        }
    }

    /// Censoring above 1% makes the estimate unreliable.
    pub fn censor_flagged(&self) -> bool {
        self.n > 0 && self.n_censored as f64 > 0.01 * self.n as f64
    }
}

/// Run `n` paths keyed by stream id with chunk-local state, returning the
/// per-path values in stream order.
pub fn run_chunked<T, S, FI, FP>(n: u64, init: FI, per_path: FP) -> Result<Vec<T>>
where
    T: Send,
    FI: Fn() -> S + Sync,
    FP: Fn(u64, &mut S) -> Result<T> + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Vec<u64> = (0..n_chunks).collect();
    let nested: Result<Vec<Vec<T>>> = chunks
        .par_iter()
        .map(|&c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            let mut state = init();
            (lo..hi).map(|sid| per_path(sid, &mut state)).collect()
        })
        .collect();
    Ok(nested?.into_iter().flatten().collect())
}

/// Which functional of the exit state to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `φ` at the exit of the switched process (zero on kills).
    Full,
    /// `φ` restricted to exits before the first switch.
    PreSwitch,
}

/// `E[φ(X_τ, Λ_τ)]` (mode `Full`) or `E[φ(X_τ, Λ_τ); τ < τ₁]` (`PreSwitch`)
/// for the exit `τ` from `domain`.
pub fn estimate_boundary_functional(
    coeffs: &CoefficientSet,
    domain: &Ball,
    start: (&[f64], usize),
    payoff: &Payoff,
    mode: BoundaryMode,
    n: u64,
    controls: SimControls,
    seed: u64,
) -> Result<MCEstimate> {
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let start_x = start.0.to_vec();
    let values = run_chunked(
        n,
        || Scratch::new(d, m),
        |sid, scratch| {
            let mut rng = RngStream::new(seed, sid).rng();
            let mut obs = crate::engine::NullObserver;
            let out = engine.run_switched(domain, &start_x, start.1, scratch, &mut rng, &mut obs)?;
            let censored = out.reason == ExitReason::Horizon;
            let value = match (out.reason, mode) {
                (ExitReason::Boundary, BoundaryMode::Full) => payoff.eval(&out.x, out.level),
                (ExitReason::Boundary, BoundaryMode::PreSwitch) => {
                    if out.first_switch.is_none() {
                        payoff.eval(&out.x, out.level)
                    } else {
                        0.0
                    }
                }
                _ => 0.0, // kills and censored paths contribute zero
            };
            Ok((value, censored))
        },
    )?;
    let censored = values.iter().filter(|(_, c)| *c).count() as u64;
    let samples: Vec<f64> = values.into_iter().map(|(v, _)| v).collect();
    Ok(MCEstimate::from_samples(&samples, censored))
}

/// Difference `E[φ(exit from a)] - E[φ(exit from b)]` with common random
/// numbers: both starts consume identical streams, so the shared noise
/// cancels pathwise and the difference error scales with the separation.
#[allow(clippy::too_many_arguments)]
pub fn estimate_boundary_difference(
    coeffs: &CoefficientSet,
    domain: &Ball,
    a: &[f64],
    b: &[f64],
    level: usize,
    payoff: &Payoff,
    n: u64,
    controls: SimControls,
    seed: u64,
) -> Result<MCEstimate> {
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let a = a.to_vec();
    let b = b.to_vec();
    let values = run_chunked(
        n,
        || Scratch::new(d, m),
        |sid, scratch| {
            let eval = |start: &[f64], scratch: &mut Scratch| -> Result<(f64, bool)> {
                let mut rng = RngStream::new(seed, sid).rng();
                let mut obs = crate::engine::NullObserver;
                let out = engine.run_switched(domain, start, level, scratch, &mut rng, &mut obs)?;
                Ok((
                    if out.reason == ExitReason::Boundary {
                        payoff.eval(&out.x, out.level)
                    } else {
                        0.0
                    },
                    out.reason == ExitReason::Horizon,
                ))
            };
            let (va, ca) = eval(&a, scratch)?;
            let (vb, cb) = eval(&b, scratch)?;
            Ok((va - vb, ca || cb))
        },
    )?;
    let censored = values.iter().filter(|(_, c)| *c).count() as u64;
    let samples: Vec<f64> = values.into_iter().map(|(v, _)| v).collect();
    Ok(MCEstimate::from_samples(&samples, censored))
}

struct ResolventObserver<'a> {
    field: &'a ScalarField,
    alpha: f64,
    acc: f64,
    prev: Option<f64>, // previous integrand sample for the trapezoid rule
}

impl PathObserver for ResolventObserver<'_> {
    #[inline]
    fn occupation(&mut self, t: f64, x: &[f64], _level: usize, dt: f64) {
        let cur = (-self.alpha * t).exp() * self.field.eval(x);
        let prev = self.prev.unwrap_or(cur);
        self.acc += 0.5 * (prev + cur) * dt;
        self.prev = Some(cur);
    }
}

/// Killed resolvent `E[∫₀^{τ₁} e^{-αs} φ(X_s) ds]` for the single-regime
/// subprocess at `level` (free space; the horizon guard flags runaways).
pub fn estimate_resolvent(
    coeffs: &CoefficientSet,
    level: usize,
    alpha: f64,
    field: &ScalarField,
    start: &[f64],
    n: u64,
    controls: SimControls,
    seed: u64,
) -> Result<MCEstimate> {
    if alpha < 0.0 {
        return Err(Error::InvalidParam("alpha must be ≥ 0".into()));
    }
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let start_x = start.to_vec();
    let values = run_chunked(
        n,
        || Scratch::new(d, m),
        |sid, scratch| {
            let mut rng = RngStream::new(seed, sid).rng();
            let mut obs = ResolventObserver { field, alpha, acc: 0.0, prev: None };
            let threshold: f64 = rng.sample(rand_distr::Exp1);
            let seg =
                engine.run_segment(None, &start_x, level, 0.0, threshold, scratch, &mut rng, &mut obs)?;
            Ok((obs.acc, seg.reason == ExitReason::Horizon))
        },
    )?;
    let censored = values.iter().filter(|(_, c)| *c).count() as u64;
    let samples: Vec<f64> = values.into_iter().map(|(v, _)| v).collect();
    Ok(MCEstimate::from_samples(&samples, censored))
}

/// Switch-time law functional `E[e^{-α τ₁} φ(X_{τ₁⁻})]`, averaging over the
/// paths whose clock rings before the horizon.
pub fn estimate_preswitch_functional(
    coeffs: &CoefficientSet,
    level: usize,
    alpha: f64,
    field: &ScalarField,
    start: &[f64],
    n: u64,
    controls: SimControls,
    seed: u64,
) -> Result<MCEstimate> {
    if alpha < 0.0 {
        return Err(Error::InvalidParam("alpha must be ≥ 0".into()));
    }
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let start_x = start.to_vec();
    let values = run_chunked(
        n,
        || Scratch::new(d, m),
        |sid, scratch| {
            let mut rng = RngStream::new(seed, sid).rng();
            let mut obs = crate::engine::NullObserver;
            let threshold: f64 = rng.sample(rand_distr::Exp1);
            let seg =
                engine.run_segment(None, &start_x, level, 0.0, threshold, scratch, &mut rng, &mut obs)?;
            match seg.reason {
                ExitReason::SwitchBeforeBoundary => {
                    Ok(((-alpha * seg.t).exp() * field.eval(&seg.x), false))
                }
                _ => Ok((0.0, true)), // horizon: no ring observed
            }
        },
    )?;
    let censored = values.iter().filter(|(_, c)| *c).count() as u64;
    let samples: Vec<f64> = values.into_iter().map(|(v, _)| v).collect();
    Ok(MCEstimate::from_samples(&samples, censored))
}

/// Occupation-time density of the pre-switch subprocess on a regular lattice
/// over the ball's bounding cube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub ball: Ball,
    pub bins_per_radius: usize,
    /// Time mass per unit volume per bin (row-major over the cube lattice).
    pub values: Vec<f64>,
    /// Per-bin standard error (chunk-level spread).
    pub stderr: Vec<f64>,
    pub n: u64,
    /// Mean over paths of the occupied time `τ_B ∧ τ₁`.
    pub mean_occupied_time: f64,
    /// Fraction of bins inside the ball that no path visited.
    pub empty_fraction: f64,
}

impl OccupancyGrid {
    pub fn side(&self) -> usize {
        2 * self.bins_per_radius
    }

    pub fn n_bins(&self) -> usize {
        self.side().pow(self.ball.dim() as u32)
    }

    #[inline]
    pub fn bin_of(&self, x: &[f64]) -> Option<usize> {
        let d = self.ball.dim();
        let h = self.ball.radius / self.bins_per_radius as f64;
        let side = self.side();
        let mut flat = 0usize;
        for k in 0..d {
            let rel = x[k] - self.ball.center[k] + self.ball.radius;
            if rel < 0.0 {
                return None;
            }
            let idx = (rel / h) as usize;
            if idx >= side {
                return None;
            }
            flat = flat * side + idx;
        }
        Some(flat)
    }

    /// Center point of a bin.
    pub fn bin_center(&self, flat: usize) -> Vec<f64> {
        let d = self.ball.dim();
        let h = self.ball.radius / self.bins_per_radius as f64;
        let side = self.side();
        let mut rest = flat;
        let mut out = vec![0.0; d];
        for k in (0..d).rev() {
            let idx = rest % side;
            rest /= side;
            out[k] = self.ball.center[k] - self.ball.radius + (idx as f64 + 0.5) * h;
        }
        out
    }

    pub fn bin_volume(&self) -> f64 {
        let h = self.ball.radius / self.bins_per_radius as f64;
        h.powi(self.ball.dim() as i32)
    }

    /// Total time mass re-assembled from the bins; the bookkeeping identity
    /// says this equals `mean_occupied_time`.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_volume()
    }
}

struct GridObserver<'a> {
    grid_mass: &'a mut [f64],
    total: f64,
    ball: Ball,
    bins_per_radius: usize,
}

impl GridObserver<'_> {
    #[inline]
    fn bin_of(&self, x: &[f64]) -> Option<usize> {
        let d = self.ball.dim();
        let h = self.ball.radius / self.bins_per_radius as f64;
        let side = 2 * self.bins_per_radius;
        let mut flat = 0usize;
        for k in 0..d {
            let rel = x[k] - self.ball.center[k] + self.ball.radius;
            if rel < 0.0 {
                return None;
            }
            let idx = (rel / h) as usize;
            if idx >= side {
                return None;
            }
            flat = flat * side + idx;
        }
        Some(flat)
    }
}

impl PathObserver for GridObserver<'_> {
    #[inline]
    fn occupation(&mut self, _t: f64, x: &[f64], _level: usize, dt: f64) {
        if let Some(b) = self.bin_of(x) {
            self.grid_mass[b] += dt;
            self.total += dt;
        }
    }
}

/// Sample the occupation measure of the pre-switch subprocess from `start`
/// until `τ_B ∧ τ₁`, binned over the ball's bounding cube.
pub fn estimate_occupation_green(
    coeffs: &CoefficientSet,
    level: usize,
    ball: &Ball,
    start: &[f64],
    bins_per_radius: usize,
    n: u64,
    controls: SimControls,
    seed: u64,
) -> Result<OccupancyGrid> {
    if bins_per_radius < 4 {
        return Err(Error::InvalidParam("need at least 4 bins per radius".into()));
    }
    if !ball.contains(start) {
        return Err(Error::Domain("start point must lie inside the ball".into()));
    }
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let side = 2 * bins_per_radius;
    let n_bins = side.pow(d as u32);
    let start_x = start.to_vec();

    struct ChunkAccum {
        mass: Vec<f64>,
        total: f64,
        paths: u64,
    }

    let n_chunks = n.div_ceil(CHUNK);
    let chunk_results: Result<Vec<ChunkAccum>> = (0..n_chunks)
        .collect::<Vec<u64>>()
        .par_iter()
        .map(|&c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            let mut scratch = Scratch::new(d, m);
            let mut mass = vec![0.0; n_bins];
            let mut total = 0.0;
            for sid in lo..hi {
                let mut rng = RngStream::new(seed, sid).rng();
                let mut obs = GridObserver {
                    grid_mass: &mut mass,
                    total: 0.0,
                    ball: ball.clone(),
                    bins_per_radius,
                };
                let threshold: f64 = rng.sample(rand_distr::Exp1);
                engine.run_segment(
                    Some(ball),
                    &start_x,
                    level,
                    0.0,
                    threshold,
                    &mut scratch,
                    &mut rng,
                    &mut obs,
                )?;
                total += obs.total;
            }
            Ok(ChunkAccum { mass, total, paths: hi - lo })
        })
        .collect();
    let chunks = chunk_results?;

    let mut mass = vec![0.0; n_bins];
    let mut total = 0.0;
    for ch in &chunks {
        for (m_acc, v) in mass.iter_mut().zip(&ch.mass) {
            *m_acc += v;
        }
        total += ch.total;
    }
    // Per-bin stderr from the spread of per-chunk means (chunks are iid).
    let n_chunks_f = chunks.len() as f64;
    let mut stderr = vec![0.0; n_bins];
    if chunks.len() > 1 {
        for b in 0..n_bins {
            let grand = mass[b] / n as f64;
            let mut var = 0.0;
            for ch in &chunks {
                let cm = ch.mass[b] / ch.paths as f64;
                var += (cm - grand) * (cm - grand);
            }
            // Chunk means have variance σ²/chunk-size; scale back to the
            // per-path variance and then to the mean's error.
            let var_chunk_mean = var / (n_chunks_f - 1.0);
            stderr[b] = (var_chunk_mean / n_chunks_f).sqrt();
        }
    }
    let vol = (ball.radius / bins_per_radius as f64).powi(d as i32);
    let values: Vec<f64> = mass.iter().map(|v| v / (n as f64 * vol)).collect();
    let stderr: Vec<f64> = stderr.iter().map(|v| v / vol).collect();

    // Coverage diagnostic over bins whose center lies inside the ball.
    let grid_probe = OccupancyGrid {
        ball: ball.clone(),
        bins_per_radius,
        values: values.clone(),
        stderr: stderr.clone(),
        n,
        mean_occupied_time: total / n as f64,
        empty_fraction: 0.0,
    };
    let mut inside = 0usize;
    let mut empty = 0usize;
    for b in 0..n_bins {
        let c = grid_probe.bin_center(b);
        if ball.contains(&c) {
            inside += 1;
            if values[b] == 0.0 {
                empty += 1;
            }
        }
    }
    let empty_fraction = if inside > 0 { empty as f64 / inside as f64 } else { 1.0 };
    Ok(OccupancyGrid { empty_fraction, ..grid_probe })
}

/// One probe of the coupling-strength estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GqProbe {
    pub x: Vec<f64>,
    pub level: usize,
    pub estimate: MCEstimate,
}

/// Conservative coupling-strength probe: max over probes and levels of
/// `E[∫₀^{τ∧τ₁} Σ_{l≠k} |q_kl|(X_s) ds]`, reported as mean + 1.96·stderr.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GqNormEstimate {
    pub value: f64,
    pub probes: Vec<GqProbe>,
    /// Set when any probe's stderr exceeds 10% of its mean.
    pub noisy: bool,
}

struct AbsRowObserver<'a> {
    coeffs: &'a CoefficientSet,
    qbuf: Vec<f64>,
    acc: f64,
}

impl PathObserver for AbsRowObserver<'_> {
    #[inline]
    fn occupation(&mut self, _t: f64, x: &[f64], level: usize, dt: f64) {
        let m = self.coeffs.m;
        self.coeffs.switching.eval_into(x, m, &mut self.qbuf);
        let mut row = 0.0;
        for l in 0..m {
            if l != level {
                row += self.qbuf[level * m + l].abs();
            }
        }
        self.acc += row * dt;
    }
}

/// Probe `sup_x Σ_{l≠k} E[∫₀^{τ∧τ₁} |q_kl|(X_s) ds]` over the given points
/// and all levels.
pub fn estimate_gq_norm(
    coeffs: &CoefficientSet,
    ball: &Ball,
    probes: &[Vec<f64>],
    n: u64,
    controls: SimControls,
    seed: u64,
) -> Result<GqNormEstimate> {
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let mut out = Vec::new();
    let mut value = 0.0f64;
    let mut noisy = false;
    for (pi, probe) in probes.iter().enumerate() {
        if !ball.contains(probe) {
            return Err(Error::Domain(format!("probe {probe:?} lies outside the ball")));
        }
        for level in 0..m {
            let probe_x = probe.clone();
            let values = run_chunked(
                n,
                || Scratch::new(d, m),
                |sid, scratch| {
                    let stream = RngStream::new(
                        seed ^ (0x9e37 + pi as u64) ^ ((level as u64) << 32),
                        sid,
                    );
                    let mut rng = stream.rng();
                    let mut obs =
                        AbsRowObserver { coeffs, qbuf: vec![0.0; m * m], acc: 0.0 };
                    let threshold: f64 = rng.sample(rand_distr::Exp1);
                    engine.run_segment(
                        Some(ball),
                        &probe_x,
                        level,
                        0.0,
                        threshold,
                        scratch,
                        &mut rng,
                        &mut obs,
                    )?;
                    Ok(obs.acc)
                },
            )?;
            let est = MCEstimate::from_samples(&values, 0);
            if est.mean > 0.0 && est.stderr > 0.1 * est.mean {
                noisy = true;
            }
            value = value.max(est.mean + 1.96 * est.stderr);
            out.push(GqProbe { x: probe.clone(), level, estimate: est });
        }
    }
    Ok(GqNormEstimate { value, probes: out, noisy })
}

/// Per-level scalar field estimated on a regular node lattice over the
/// ball's bounding cube, with multilinear interpolation between nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub ball: Ball,
    pub nodes_per_radius: usize,
    /// `values[level][node]`, node lattice row-major with `2k+1` nodes/axis.
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl GridField {
    pub fn zeros(ball: &Ball, nodes_per_radius: usize, m: usize) -> Self {
        let n_nodes = Self::n_nodes_for(ball.dim(), nodes_per_radius);
        Self {
            ball: ball.clone(),
            nodes_per_radius,
            values: vec![vec![0.0; n_nodes]; m],
            stderr: vec![vec![0.0; n_nodes]; m],
        }
    }

    pub fn side(nodes_per_radius: usize) -> usize {
        2 * nodes_per_radius + 1
    }

    pub fn n_nodes_for(d: usize, nodes_per_radius: usize) -> usize {
        Self::side(nodes_per_radius).pow(d as u32)
    }

    pub fn n_nodes(&self) -> usize {
        Self::n_nodes_for(self.ball.dim(), self.nodes_per_radius)
    }

    pub fn node_pos(&self, flat: usize) -> Vec<f64> {
        let d = self.ball.dim();
        let side = Self::side(self.nodes_per_radius);
        let h = self.ball.radius / self.nodes_per_radius as f64;
        let mut rest = flat;
        let mut out = vec![0.0; d];
        for k in (0..d).rev() {
            let idx = rest % side;
            rest /= side;
            out[k] = self.ball.center[k] - self.ball.radius + idx as f64 * h;
        }
        out
    }

    /// Multilinear interpolation; errs outside the bounding cube.
    pub fn interpolate(&self, x: &[f64], level: usize) -> Result<f64> {
        let d = self.ball.dim();
        let side = Self::side(self.nodes_per_radius);
        let h = self.ball.radius / self.nodes_per_radius as f64;
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        debug_assert!(d <= 8);
        for k in 0..d {
            let rel = (x[k] - (self.ball.center[k] - self.ball.radius)) / h;
            if rel < -1e-9 || rel > (side - 1) as f64 + 1e-9 {
                return Err(Error::Domain(format!(
                    "interpolation point {x:?} outside the grid cube"
                )));
            }
            let cell = (rel.floor() as isize).clamp(0, side as isize - 2) as usize;
            base[k] = cell;
            frac[k] = (rel - cell as f64).clamp(0.0, 1.0);
        }
        let vals = &self.values[level];
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for k in 0..d {
                let hi = (corner >> k) & 1 == 1;
                w *= if hi { frac[k] } else { 1.0 - frac[k] };
                flat = flat * side + base[k] + usize::from(hi);
            }
            acc += w * vals[flat];
        }
        Ok(acc)
    }

    pub fn max_abs(&self, level: usize) -> f64 {
        self.values[level].iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Estimate a boundary functional on every lattice node (every level):
/// nodes outside the ball take the immediate-exit value `φ(node, level)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_field_on_grid(
    coeffs: &CoefficientSet,
    ball: &Ball,
    payoff: &Payoff,
    mode: BoundaryMode,
    nodes_per_radius: usize,
    n_per_node: u64,
    controls: SimControls,
    seed: u64,
) -> Result<GridField> {
    let m = coeffs.m;
    let mut field = GridField::zeros(ball, nodes_per_radius, m);
    let n_nodes = field.n_nodes();
    for level in 0..m {
        for node in 0..n_nodes {
            let pos = field.node_pos(node);
            if !ball.contains(&pos) {
                field.values[level][node] = payoff.eval(&pos, level);
                continue;
            }
            let est = estimate_boundary_functional(
                coeffs,
                ball,
                (&pos, level),
                payoff,
                mode,
                n_per_node,
                controls,
                seed ^ ((level as u64) << 48) ^ ((node as u64) << 20),
            )?;
            field.values[level][node] = est.mean;
            field.stderr[level][node] = est.stderr;
        }
    }
    Ok(field)
}

struct CouplingObserver<'a> {
    coeffs: &'a CoefficientSet,
    input: &'a GridField,
    qbuf: Vec<f64>,
    acc: f64,
    broken: bool,
}

impl PathObserver for CouplingObserver<'_> {
    #[inline]
    fn occupation(&mut self, _t: f64, x: &[f64], level: usize, dt: f64) {
        if self.broken {
            return;
        }
        let m = self.coeffs.m;
        self.coeffs.switching.eval_into(x, m, &mut self.qbuf);
        for l in 0..m {
            if l == level {
                continue;
            }
            let q = self.qbuf[level * m + l];
            if q != 0.0 {
                match self.input.interpolate(x, l) {
                    Ok(v) => self.acc += q * v * dt,
                    Err(_) => self.broken = true,
                }
            }
        }
    }
}

/// Apply the level-coupling operator once by Monte Carlo: the output node
/// value at `(x, i)` is `E[∫₀^{τ∧τ₁} Σ_{l≠i} q_il(X_s) · input(X_s, l) ds]`.
pub fn apply_coupling_operator(
    coeffs: &CoefficientSet,
    ball: &Ball,
    input: &GridField,
    n_per_node: u64,
    controls: SimControls,
    seed: u64,
) -> Result<GridField> {
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let mut out = GridField::zeros(ball, input.nodes_per_radius, m);
    let n_nodes = out.n_nodes();
    for level in 0..m {
        for node in 0..n_nodes {
            let pos = out.node_pos(node);
            if !ball.contains(&pos) {
                continue; // immediate exit: zero occupation integral
            }
            let node_seed = seed ^ 0xc0_75_11 ^ ((level as u64) << 48) ^ ((node as u64) << 20);
            let values = run_chunked(
                n_per_node,
                || Scratch::new(d, m),
                |sid, scratch| {
                    let mut rng = RngStream::new(node_seed, sid).rng();
                    let mut obs = CouplingObserver {
                        coeffs,
                        input,
                        qbuf: vec![0.0; m * m],
                        acc: 0.0,
                        broken: false,
                    };
                    let threshold: f64 = rng.sample(rand_distr::Exp1);
                    engine.run_segment(
                        Some(ball),
                        &pos,
                        level,
                        0.0,
                        threshold,
                        scratch,
                        &mut rng,
                        &mut obs,
                    )?;
                    if obs.broken {
                        return Err(Error::Domain(
                            "grid interpolation left its coverage during the coupling step".into(),
                        ));
                    }
                    Ok(obs.acc)
                },
            )?;
            let est = MCEstimate::from_samples(&values, 0);
            out.values[level][node] = est.mean;
            out.stderr[level][node] = est.stderr;
        }
    }
    Ok(out)
}

/// The coupling-operator value at a single start point:
/// `E[∫₀^{τ∧τ₁} Σ_{l≠i} q_il(X_s) · input(X_s, l) ds]` from `(x, i)`.
pub fn apply_coupling_operator_at(
    coeffs: &CoefficientSet,
    ball: &Ball,
    start: (&[f64], usize),
    input: &GridField,
    n: u64,
    controls: SimControls,
    seed: u64,
) -> Result<MCEstimate> {
    let engine = Engine::new(coeffs, controls)?;
    let d = coeffs.d;
    let m = coeffs.m;
    let start_x = start.0.to_vec();
    let values = run_chunked(
        n,
        || Scratch::new(d, m),
        |sid, scratch| {
            let mut rng = RngStream::new(seed, sid).rng();
            let mut obs = CouplingObserver {
                coeffs,
                input,
                qbuf: vec![0.0; m * m],
                acc: 0.0,
                broken: false,
            };
            let threshold: f64 = rng.sample(rand_distr::Exp1);
            engine.run_segment(
                Some(ball),
                &start_x,
                start.1,
                0.0,
                threshold,
                scratch,
                &mut rng,
                &mut obs,
            )?;
            if obs.broken {
                return Err(Error::Domain(
                    "grid interpolation left its coverage during the coupling step".into(),
                ));
            }
            Ok(obs.acc)
        },
    )?;
    Ok(MCEstimate::from_samples(&values, 0))
}

/// Terms and diagnostics of the truncated level-coupling expansion
/// `u ≈ Σ_{k=0}^K (coupling operator)^k h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeumannReport {
    /// `max_abs` of each term per level: `norms[k][level]`.
    pub term_norms: Vec<Vec<f64>>,
    /// Partial sum of all terms.
    pub sum: GridField,
    /// Coupling-strength estimate used for the remainder bound.
    pub rho: f64,
    /// `ρᴷ · max|sum|`, the geometric tail proxy.
    pub remainder_bound: f64,
    /// Measured contraction `‖term_{k+1}‖ / ‖term_k‖` (max over levels).
    pub contraction_ratios: Vec<f64>,
}

/// Build the expansion: term 0 is the pre-switch functional on the grid and
/// each next term applies the coupling operator. Refuses when the estimated
/// coupling strength is ≥ 1.
#[allow(clippy::too_many_arguments)]
pub fn neumann_partial_sum(
    coeffs: &CoefficientSet,
    ball: &Ball,
    payoff: &Payoff,
    order: usize,
    nodes_per_radius: usize,
    n_per_node: u64,
    controls: SimControls,
    seed: u64,
) -> Result<NeumannReport> {
    if order < 1 {
        return Err(Error::InvalidParam("expansion order must be ≥ 1".into()));
    }
    // Coupling strength at the center probes (coarse but conservative).
    let probes: Vec<Vec<f64>> = vec![ball.center.clone()];
    let gq = estimate_gq_norm(coeffs, ball, &probes, (n_per_node * 4).max(2000), controls, seed ^ 0x6e71)?;
    if gq.value >= 1.0 {
        return Err(Error::Divergence(format!(
            "coupling strength {:.3} ≥ 1: the expansion may diverge",
            gq.value
        )));
    }
    let h0 = estimate_field_on_grid(
        coeffs,
        ball,
        payoff,
        BoundaryMode::PreSwitch,
        nodes_per_radius,
        n_per_node,
        controls,
        seed,
    )?;
    let m = coeffs.m;
    let mut sum = h0.clone();
    let mut term_norms = vec![(0..m).map(|l| h0.max_abs(l)).collect::<Vec<f64>>()];
    let mut prev = h0;
    let mut contraction = Vec::new();
    for k in 1..=order {
        let next = apply_coupling_operator(coeffs, ball, &prev, n_per_node, controls, seed ^ (k as u64) << 8)?;
        let norms: Vec<f64> = (0..m).map(|l| next.max_abs(l)).collect();
        let prev_max = term_norms.last().unwrap().iter().cloned().fold(0.0f64, f64::max);
        let next_max = norms.iter().cloned().fold(0.0f64, f64::max);
        if prev_max > 0.0 {
            contraction.push(next_max / prev_max);
        }
        for l in 0..m {
            for i in 0..next.values[l].len() {
                sum.values[l][i] += next.values[l][i];
            }
        }
        term_norms.push(norms);
        prev = next;
    }
    let sum_max = (0..m).map(|l| sum.max_abs(l)).fold(0.0f64, f64::max);
    Ok(NeumannReport {
        term_norms,
        remainder_bound: gq.value.powi(order as i32) * sum_max,
        rho: gq.value,
        sum,
        contraction_ratios: contraction,
    })
}
