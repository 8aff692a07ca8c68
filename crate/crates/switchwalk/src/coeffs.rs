//! Coefficient fields of the operator: diffusion matrix `a(x, i)`, drift
//! `b₁(x, i)`, jump modulator `b₂(x, z, i)`, Lévy density `jᵢ(z)` and the
//! switching-rate matrix `Q(x)` — as a catalog of closed-form presets plus
//! user-pluggable callables.
//!
//! Presets are closed forms on purpose: they admit analytic oracles (exact
//! jump rates, exact drift corrections, exact switch laws) that the tests
//! and the verification harness lean on.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{unit_ball_volume, unit_sphere_area};
use crate::quad;
use crate::switching::SwitchGraph;

/// Scalar field callback `(x, level) → value`.
pub type ScalarFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
/// Vector/matrix field callback `(x, level, out)`.
pub type FillFn = Arc<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;
/// Jump-modulator callback `(x, z, level) → value`.
pub type ModulatorFn = Arc<dyn Fn(&[f64], &[f64], usize) -> f64 + Send + Sync>;
/// Lévy density callback `(z, level) → value`.
pub type DensityFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

/// Diffusion matrix field `a(x, i)` (symmetric `d × d`, row-major).
#[derive(Clone)]
pub enum DiffusionField {
    /// `a ≡ I`.
    Identity,
    /// Constant diagonal matrix.
    Diagonal(Vec<f64>),
    /// Isotropic trigonometric perturbation
    /// `a(x, i) = (base + amp · sin(freq · x₁ + i)) · I`.
    Trig { base: f64, amp: f64, freq: f64 },
    /// User-supplied callable writing the full matrix.
    Custom(FillFn),
}

impl DiffusionField {
    pub fn eval_into(&self, x: &[f64], level: usize, out: &mut [f64]) {
        let d = x.len();
        match self {
            DiffusionField::Identity => {
                out[..d * d].fill(0.0);
                for k in 0..d {
                    out[k * d + k] = 1.0;
                }
            }
            DiffusionField::Diagonal(diag) => {
                out[..d * d].fill(0.0);
                for k in 0..d {
                    out[k * d + k] = diag[k];
                }
            }
            DiffusionField::Trig { base, amp, freq } => {
                let s = base + amp * (freq * x[0] + level as f64).sin();
                out[..d * d].fill(0.0);
                for k in 0..d {
                    out[k * d + k] = s;
                }
            }
            DiffusionField::Custom(f) => f(x, level, out),
        }
    }

    /// Lower-triangular factor `L` with `L Lᵀ = a(x, i)`, written row-major.
    pub fn cholesky_into(&self, x: &[f64], level: usize, out: &mut [f64]) -> Result<()> {
        let d = x.len();
        match self {
            DiffusionField::Identity => {
                out[..d * d].fill(0.0);
                for k in 0..d {
                    out[k * d + k] = 1.0;
                }
                Ok(())
            }
            DiffusionField::Diagonal(diag) => {
                out[..d * d].fill(0.0);
                for k in 0..d {
                    if diag[k] <= 0.0 {
                        return Err(not_positive_definite(x, level));
                    }
                    out[k * d + k] = diag[k].sqrt();
                }
                Ok(())
            }
            DiffusionField::Trig { base, amp, freq } => {
                let s = base + amp * (freq * x[0] + level as f64).sin();
                if s <= 0.0 {
                    return Err(not_positive_definite(x, level));
                }
                out[..d * d].fill(0.0);
                let root = s.sqrt();
                for k in 0..d {
                    out[k * d + k] = root;
                }
                Ok(())
            }
            DiffusionField::Custom(f) => {
                f(x, level, out);
                cholesky_in_place(out, d).map_err(|_| not_positive_definite(x, level))
            }
        }
    }

    /// True when the matrix does not depend on `x` (lets the engine factor once).
    pub fn is_constant(&self) -> bool {
        matches!(self, DiffusionField::Identity | DiffusionField::Diagonal(_))
    }

    /// Upper bound on the directional diffusion scale `√(ζᵀaζ)`, when the
    /// preset knows one.
    pub fn sigma_sup(&self) -> Option<f64> {
        match self {
            DiffusionField::Identity => Some(1.0),
            DiffusionField::Diagonal(v) => v.iter().cloned().fold(None, |acc: Option<f64>, x| {
                Some(acc.map_or(x, |a| a.max(x)))
            }).map(f64::sqrt),
            DiffusionField::Trig { base, amp, .. } => Some((base + amp.abs()).max(0.0).sqrt()),
            DiffusionField::Custom(_) => None,
        }
    }
}

impl fmt::Debug for DiffusionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffusionField::Identity => write!(f, "Identity"),
            DiffusionField::Diagonal(v) => write!(f, "Diagonal({v:?})"),
            DiffusionField::Trig { base, amp, freq } => {
                write!(f, "Trig {{ base: {base}, amp: {amp}, freq: {freq} }}")
            }
            DiffusionField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

fn not_positive_definite(x: &[f64], level: usize) -> Error {
    Error::ConditionBreach(format!(
        "diffusion matrix not positive definite at x = {x:?}, level {level}"
    ))
}

/// In-place Cholesky of a symmetric positive-definite row-major matrix;
/// leaves the lower triangle, zeroes the strict upper.
fn cholesky_in_place(a: &mut [f64], d: usize) -> std::result::Result<(), ()> {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(());
        }
        let root = diag.sqrt();
        a[j * d + j] = root;
        for i in (j + 1)..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / root;
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            a[i * d + j] = 0.0;
        }
    }
    Ok(())
}

/// Drift field `b₁(x, i)`.
#[derive(Clone)]
pub enum DriftField {
    Zero,
    Constant(Vec<f64>),
    Custom(FillFn),
}

impl DriftField {
    pub fn eval_into(&self, x: &[f64], level: usize, out: &mut [f64]) {
        let d = x.len();
        match self {
            DriftField::Zero => out[..d].fill(0.0),
            DriftField::Constant(v) => out[..d].copy_from_slice(v),
            DriftField::Custom(f) => f(x, level, out),
        }
    }
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftField::Zero => write!(f, "Zero"),
            DriftField::Constant(v) => write!(f, "Constant({v:?})"),
            DriftField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Jump modulator `b₂(x, z, i)`, the state-dependent thinning factor in the
/// kernel `J(x, y, i) = b₂(x, y-x, i) jᵢ(y-x)`.
#[derive(Clone)]
pub enum JumpModulator {
    Constant(f64),
    /// `base + amp · sin(x₁)`, independent of `z`.
    TrigX { base: f64, amp: f64 },
    Custom(ModulatorFn),
}

impl JumpModulator {
    pub fn eval(&self, x: &[f64], z: &[f64], level: usize) -> f64 {
        match self {
            JumpModulator::Constant(v) => *v,
            JumpModulator::TrigX { base, amp } => base + amp * x[0].sin(),
            JumpModulator::Custom(f) => f(x, z, level),
        }
    }

    /// True when the modulator does not depend on the jump size `z`, so it
    /// factors out of jump-size integrals.
    pub fn is_z_independent(&self) -> bool {
        !matches!(self, JumpModulator::Custom(_))
    }
}

impl fmt::Debug for JumpModulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpModulator::Constant(v) => write!(f, "Constant({v})"),
            JumpModulator::TrigX { base, amp } => write!(f, "TrigX {{ base: {base}, amp: {amp} }}"),
            JumpModulator::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Lévy density `jᵢ(z)`.
#[derive(Clone)]
pub enum JumpKernel {
    /// No jump part.
    None,
    /// Truncated power kernel `c₁ |z|^{-d-β} 1_{|z| ≤ support}`, optionally
    /// restricted to the half-space `z₁ > 0`.
    RadialPowerTrunc { c1: f64, beta: f64, support: f64, one_sided: bool },
    /// Finite-activity uniform kernel `intensity · 1_{|z| ≤ 1}`.
    UniformBall { intensity: f64 },
    /// User-supplied density; usable for validation and quadrature but not
    /// for path sampling.
    Custom { density: DensityFn, even_in_z: bool },
}

impl JumpKernel {
    pub fn is_none(&self) -> bool {
        matches!(self, JumpKernel::None)
    }

    pub fn density(&self, z: &[f64], level: usize) -> f64 {
        let d = z.len();
        match self {
            JumpKernel::None => 0.0,
            JumpKernel::RadialPowerTrunc { c1, beta, support, one_sided } => {
                let r = crate::geom::norm(z);
                if r == 0.0 || r > *support || (*one_sided && z[0] <= 0.0) {
                    0.0
                } else {
                    c1 * r.powf(-(d as f64) - beta)
                }
            }
            JumpKernel::UniformBall { intensity } => {
                if crate::geom::norm_sq(z) <= 1.0 {
                    *intensity
                } else {
                    0.0
                }
            }
            JumpKernel::Custom { density, .. } => density(z, level),
        }
    }

    /// `∫_{|z| > δ} jᵢ(z) dz`, the big-jump mass (closed form per preset).
    pub fn tail_mass(&self, d: usize, delta: f64) -> Result<f64> {
        match self {
            JumpKernel::None => Ok(0.0),
            JumpKernel::RadialPowerTrunc { c1, beta, support, one_sided } => {
                if delta >= *support {
                    return Ok(0.0);
                }
                let angular = unit_sphere_area(d) * if *one_sided { 0.5 } else { 1.0 };
                Ok(c1 * angular * (delta.powf(-beta) - support.powf(-beta)) / beta)
            }
            JumpKernel::UniformBall { intensity } => {
                if delta >= 1.0 {
                    return Ok(0.0);
                }
                Ok(intensity * unit_ball_volume(d) * (1.0 - delta.powi(d as i32)))
            }
            JumpKernel::Custom { .. } => Err(Error::Unsupported(
                "custom jump densities do not provide closed-form mass; \
                 sampling requires a preset kernel"
                    .into(),
            )),
        }
    }

    /// `∫ (1 ∧ |z|²) jᵢ(z) dz`, the mass checked against Θ₄.
    pub fn small_mass(&self, d: usize) -> Result<f64> {
        let radial = |profile: &dyn Fn(f64) -> f64, hi: f64| -> Result<f64> {
            let f = |r: f64| (1.0f64).min(r * r) * profile(r) * r.powi(d as i32 - 1);
            let (v, _) = quad::integrate_adaptive(&f, 0.0, hi, 1e-10)?;
            Ok(v)
        };
        match self {
            JumpKernel::None => Ok(0.0),
            JumpKernel::RadialPowerTrunc { c1, beta, support, one_sided } => {
                let angular = unit_sphere_area(d) * if *one_sided { 0.5 } else { 1.0 };
                let c = *c1;
                let b = *beta;
                let prof = move |r: f64| c * r.powf(-(d as f64) - b);
                // Split off the integrable singularity analytically on (0, m]:
                // ∫ r^{1-β} dr = m^{2-β}/(2-β).
                let m = support.min(1.0);
                let head = c * m.powf(2.0 - b) / (2.0 - b);
                let tail = if *support > 1.0 {
                    radial(&|r| prof(r), *support)? - radial(&|r| prof(r), 1.0)?
                } else {
                    0.0
                };
                let head_exact = angular * head;
                Ok(head_exact + angular * tail)
            }
            JumpKernel::UniformBall { intensity } => {
                let area = unit_sphere_area(d);
                let f = |r: f64| (1.0f64).min(r * r) * intensity * r.powi(d as i32 - 1);
                let (v, _) = quad::integrate_adaptive(&f, 0.0, 1.0, 1e-12)?;
                Ok(area * v)
            }
            JumpKernel::Custom { .. } => Err(Error::Unsupported(
                "custom jump densities are validated pointwise only".into(),
            )),
        }
    }

    /// `∫_{δ < |z| ≤ 1} z jᵢ(z) dz`, the compensator moment that moves into
    /// the drift when small jumps are dropped. Exactly zero for even kernels.
    pub fn compensator_moment(&self, d: usize, delta: f64) -> Result<Vec<f64>> {
        match self {
            JumpKernel::None => Ok(vec![0.0; d]),
            JumpKernel::UniformBall { .. } => Ok(vec![0.0; d]),
            JumpKernel::RadialPowerTrunc { c1, beta, support, one_sided } => {
                if !one_sided {
                    return Ok(vec![0.0; d]);
                }
                let hi = support.min(1.0);
                let mut out = vec![0.0; d];
                if delta >= hi {
                    return Ok(out);
                }
                // Only the z₁ component survives:
                // c₁ ∫_δ^hi r^{-β} dr · ∫_{half sphere} ω₁ dσ(ω),
                // and the angular factor equals ω_{d-1}.
                let radial = (hi.powf(1.0 - beta) - delta.powf(1.0 - beta)) / (1.0 - beta);
                out[0] = c1 * radial * unit_ball_volume(d - 1);
                Ok(out)
            }
            JumpKernel::Custom { density, even_in_z } => {
                if *even_in_z {
                    return Ok(vec![0.0; d]);
                }
                let mut out = vec![0.0; d];
                for k in 0..d {
                    let f = |z: &[f64]| z[k] * density(z, 0);
                    out[k] = quad::shell_integral(&vec![0.0; d], delta, 1.0, &f, 1e-8, 2)?;
                }
                Ok(out)
            }
        }
    }

    /// Whether `jᵢ(-z) = jᵢ(z)`.
    pub fn is_even_in_z(&self) -> bool {
        match self {
            JumpKernel::None | JumpKernel::UniformBall { .. } => true,
            JumpKernel::RadialPowerTrunc { one_sided, .. } => !one_sided,
            JumpKernel::Custom { even_in_z, .. } => *even_in_z,
        }
    }

    /// Draw a jump size conditioned on `|z| > δ` (direction uniform, radius
    /// by inverse CDF); available for preset kernels only.
    pub fn sample_big_jump<R: rand::Rng + ?Sized>(
        &self,
        d: usize,
        delta: f64,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            JumpKernel::None => Err(Error::Unsupported("no jump kernel to sample".into())),
            JumpKernel::RadialPowerTrunc { beta, support, one_sided, .. } => {
                let u: f64 = rng.random();
                let a = delta.powf(-beta);
                let b = support.powf(-beta);
                let r = (a - u * (a - b)).powf(-1.0 / beta);
                crate::geom::sample_unit_sphere(rng, &mut out[..d]);
                if *one_sided && out[0] < 0.0 {
                    out[0] = -out[0];
                }
                for v in out[..d].iter_mut() {
                    *v *= r;
                }
                Ok(())
            }
            JumpKernel::UniformBall { .. } => {
                let u: f64 = rng.random();
                let dd = d as f64;
                let r = (delta.powf(dd) + u * (1.0 - delta.powf(dd))).powf(1.0 / dd);
                crate::geom::sample_unit_sphere(rng, &mut out[..d]);
                for v in out[..d].iter_mut() {
                    *v *= r;
                }
                Ok(())
            }
            JumpKernel::Custom { .. } => Err(Error::Unsupported(
                "custom jump densities cannot be sampled; use a preset kernel".into(),
            )),
        }
    }
}

impl fmt::Debug for JumpKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpKernel::None => write!(f, "None"),
            JumpKernel::RadialPowerTrunc { c1, beta, support, one_sided } => write!(
                f,
                "RadialPowerTrunc {{ c1: {c1}, beta: {beta}, support: {support}, one_sided: {one_sided} }}"
            ),
            JumpKernel::UniformBall { intensity } => write!(f, "UniformBall {{ intensity: {intensity} }}"),
            JumpKernel::Custom { .. } => write!(f, "Custom(..)"),
        }
    }
}

/// Switching-rate matrix field `Q(x)`.
#[derive(Clone)]
pub enum SwitchField {
    /// `Q ≡ 0` (single level or frozen level process).
    Zero,
    /// Constant matrix, row-major `m × m`.
    Constant(Vec<f64>),
    /// Off-diagonal entries `q⁰_ij (floor + (1-floor)(1+sin x₁)/2)` with the
    /// Markovian diagonal; spatially varying and pinched in `[floor·q⁰, q⁰]`.
    MarkovTrig { q0_off: Vec<f64>, floor: f64 },
    /// User-supplied callable writing the full matrix.
    Custom(FillFn),
}

impl SwitchField {
    pub fn eval_into(&self, x: &[f64], m: usize, out: &mut [f64]) {
        match self {
            SwitchField::Zero => out[..m * m].fill(0.0),
            SwitchField::Constant(q) => out[..m * m].copy_from_slice(q),
            SwitchField::MarkovTrig { q0_off, floor } => {
                let s = floor + (1.0 - floor) * (1.0 + x[0].sin()) / 2.0;
                for i in 0..m {
                    let mut row = 0.0;
                    for j in 0..m {
                        if i != j {
                            let v = q0_off[i * m + j] * s;
                            out[i * m + j] = v;
                            row += v;
                        }
                    }
                    out[i * m + i] = -row;
                }
            }
            SwitchField::Custom(f) => f(x, 0, out),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SwitchField::Zero => true,
            SwitchField::Constant(q) => q.iter().all(|&v| v == 0.0),
            _ => false,
        }
    }
}

impl fmt::Debug for SwitchField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SwitchField::Zero => write!(f, "Zero"),
            SwitchField::Constant(q) => write!(f, "Constant({q:?})"),
            SwitchField::MarkovTrig { q0_off, floor } => {
                write!(f, "MarkovTrig {{ q0_off: {q0_off:?}, floor: {floor} }}")
            }
            SwitchField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The full coefficient data of one operator, with the constant bound matrix
/// `Q⁰` and the identifier of the preset family it was built from.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub d: usize,
    pub m: usize,
    pub diffusion: DiffusionField,
    pub drift: DriftField,
    pub b2: JumpModulator,
    pub jump: JumpKernel,
    pub switching: SwitchField,
    /// Constant bound matrix: off-diagonal entries bound `q_ij(x)` from
    /// above, diagonal entries bound `q_ii(x)` from below.
    pub q0: Vec<f64>,
    pub preset_id: String,
}

impl CoefficientSet {
    /// Off-diagonal part of `Q⁰` as a switching graph.
    pub fn switch_graph(&self) -> Result<SwitchGraph> {
        let mut off = self.q0.clone();
        for k in 0..self.m {
            off[k * self.m + k] = 0.0;
        }
        SwitchGraph::new(self.m, off)
    }

    /// Effective drift after dropping jumps of size ≤ `delta` and folding
    /// their retained compensator into the first-order term:
    /// `b₁(x, i) - ∫_{δ<|z|≤1} z b₂(x, z, i) jᵢ(z) dz`.
    ///
    /// Exactly `b₁` when the kernel `b₂ jᵢ` is even in `z`.
    pub fn effective_drift(&self, x: &[f64], level: usize, delta: f64) -> Result<Vec<f64>> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParam(format!("delta must lie in (0, 1], got {delta}")));
        }
        let d = self.d;
        let mut b = vec![0.0; d];
        self.drift.eval_into(x, level, &mut b);
        if self.jump.is_none() {
            return Ok(b);
        }
        if self.b2.is_z_independent() {
            if self.jump.is_even_in_z() {
                return Ok(b); // odd integrand over a symmetric region
            }
            let factor = self.b2.eval(x, &[0.0], level);
            let moment = self.jump.compensator_moment(d, delta)?;
            for k in 0..d {
                b[k] -= factor * moment[k];
            }
            return Ok(b);
        }
        // z-dependent custom modulator: full quadrature of z b₂(x,z,i) jᵢ(z).
        let origin = vec![0.0; d];
        for k in 0..d {
            let f = |z: &[f64]| z[k] * self.b2.eval(x, z, level) * self.jump.density(z, level);
            let v = quad::shell_integral(&origin, delta, 1.0, &f, 1e-8, 2)?;
            b[k] -= v;
        }
        Ok(b)
    }

    /// Big-jump intensity `Λᵢ(δ) = Θ₃ ∫_{|z|>δ} jᵢ(z) dz` for the thinning
    /// envelope `Θ₃ jᵢ`.
    pub fn envelope_rate(&self, delta: f64, theta3: f64) -> Result<f64> {
        Ok(theta3 * self.jump.tail_mass(self.d, delta)?)
    }

    /// Scaled coefficient family: the operator of the space-time rescaled
    /// process `λ⁻¹ X_{λ² t}`. Refuses presets without a closed scaled form.
    pub fn scaled(&self, lambda: f64) -> Result<CoefficientSet> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParam(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        let diffusion = match &self.diffusion {
            DiffusionField::Identity => DiffusionField::Identity,
            DiffusionField::Diagonal(v) => DiffusionField::Diagonal(v.clone()),
            DiffusionField::Trig { base, amp, freq } => {
                DiffusionField::Trig { base: *base, amp: *amp, freq: freq * lambda }
            }
            DiffusionField::Custom(_) => {
                return Err(Error::Unsupported("custom diffusion has no scaled form".into()))
            }
        };
        let drift = match &self.drift {
            DriftField::Zero => DriftField::Zero,
            DriftField::Constant(v) => {
                DriftField::Constant(v.iter().map(|c| lambda * c).collect())
            }
            DriftField::Custom(_) => {
                return Err(Error::Unsupported("custom drift has no scaled form".into()))
            }
        };
        let (b2, jump) = match (&self.b2, &self.jump) {
            (b, JumpKernel::None) => (b.clone(), JumpKernel::None),
            (JumpModulator::Constant(v), JumpKernel::RadialPowerTrunc { c1, beta, support, one_sided }) => {
                if *one_sided {
                    return Err(Error::Unsupported(
                        "one-sided kernels pick up a cutoff drift under scaling; not in the catalog".into(),
                    ));
                }
                // λ^{d+2} b₂ c₁ |λz|^{-d-β} 1_{|λz|≤u} = (λ^{2-β} b₂) c₁ |z|^{-d-β} 1_{|z|≤u/λ}.
                (
                    JumpModulator::Constant(v * lambda.powf(2.0 - beta)),
                    JumpKernel::RadialPowerTrunc {
                        c1: *c1,
                        beta: *beta,
                        support: support / lambda,
                        one_sided: false,
                    },
                )
            }
            _ => {
                return Err(Error::Unsupported(
                    "only the constant-modulator truncated power kernel scales in closed form".into(),
                ))
            }
        };
        let switching = match &self.switching {
            SwitchField::Zero => SwitchField::Zero,
            SwitchField::Constant(q) => {
                SwitchField::Constant(q.iter().map(|v| lambda * lambda * v).collect())
            }
            _ => {
                return Err(Error::Unsupported(
                    "spatially varying switching fields have no cataloged scaled form".into(),
                ))
            }
        };
        let q0 = self.q0.iter().map(|v| lambda * lambda * v).collect();
        Ok(CoefficientSet {
            d: self.d,
            m: self.m,
            diffusion,
            drift,
            b2,
            jump,
            switching,
            q0,
            preset_id: format!("{}@scaled({lambda})", self.preset_id),
        })
    }
}

/// Builders for the bundled coefficient families.
pub mod presets {
    use super::*;

    /// One catalog entry: identifier, parameter schema and the class
    /// conditions the family satisfies by construction.
    #[derive(Debug, Clone, serde::Serialize)]
    pub struct PresetInfo {
        pub id: &'static str,
        pub kind: &'static str,
        pub params: &'static str,
        pub satisfies: &'static str,
    }

    pub fn catalog() -> Vec<PresetInfo> {
        vec![
            PresetInfo {
                id: "brownian",
                kind: "bundle",
                params: "none",
                satisfies: "a = I, b₁ = 0, b₂ = 0, Q = 0: ellipticity with Θ₁ = 1, all jump and switching bounds trivially",
            },
            PresetInfo {
                id: "identity",
                kind: "diffusion",
                params: "none",
                satisfies: "ellipticity with Θ₁ = 1, Hölder with any exponent",
            },
            PresetInfo {
                id: "diagonal",
                kind: "diffusion",
                params: "entries: [f64; d]",
                satisfies: "ellipticity with Θ₁ = min(entries) provided 1/Θ₁ ≥ max(entries)",
            },
            PresetInfo {
                id: "trig",
                kind: "diffusion",
                params: "base, amp, freq",
                satisfies: "ellipticity with Θ₁ ≤ base - amp; Hölder constant amp·freq",
            },
            PresetInfo {
                id: "zero",
                kind: "drift",
                params: "none",
                satisfies: "drift bound with any Θ₂",
            },
            PresetInfo {
                id: "constant",
                kind: "drift",
                params: "vector: [f64; d]",
                satisfies: "drift bound with Θ₂ = |vector|",
            },
            PresetInfo {
                id: "b2_constant",
                kind: "modulator",
                params: "value",
                satisfies: "0 ≤ b₂ ≤ Θ₃ provided value ≤ Θ₃",
            },
            PresetInfo {
                id: "b2_trig",
                kind: "modulator",
                params: "base, amp",
                satisfies: "0 ≤ b₂ ≤ Θ₃ provided 0 ≤ base - amp and base + amp ≤ Θ₃",
            },
            PresetInfo {
                id: "none",
                kind: "jump",
                params: "none",
                satisfies: "jump bounds trivially",
            },
            PresetInfo {
                id: "stable_trunc",
                kind: "jump",
                params: "c1, beta, support (default 1)",
                satisfies: "j(z) = c₁|z|^{-d-β} 1_{|z|≤support}: the small-jump bound with the declared c₁, finite (1∧|z|²)-mass",
            },
            PresetInfo {
                id: "stable_trunc_onesided",
                kind: "jump",
                params: "c1, beta",
                satisfies: "as stable_trunc restricted to z₁ > 0 (odd part feeds the effective drift)",
            },
            PresetInfo {
                id: "uniform_ball",
                kind: "jump",
                params: "intensity",
                satisfies: "finite-activity kernel ≤ c₁|z|^{-d-β} near 0 provided intensity ≤ c₁",
            },
            PresetInfo {
                id: "switch_none",
                kind: "switching",
                params: "none",
                satisfies: "Q = 0 (no level coupling)",
            },
            PresetInfo {
                id: "switch2_markov",
                kind: "switching",
                params: "rate",
                satisfies: "2-level Markovian Q = [[-λ, λ], [λ, -λ]]: zero row sums, constant entries",
            },
            PresetInfo {
                id: "switch2_submarkov",
                kind: "switching",
                params: "none",
                satisfies: "Q = [[-2, 1], [1, -2]]: row sums -1, kill probability 1/2 at each switch",
            },
            PresetInfo {
                id: "switch3_strict",
                kind: "switching",
                params: "rate (default 1)",
                satisfies: "3-level Markovian with all off-diagonal entries equal: strictly irreducible",
            },
            PresetInfo {
                id: "markov_trig",
                kind: "switching",
                params: "q0_off: [f64; m·m], floor = c₀",
                satisfies: "c₀ q⁰ ≤ q(x) ≤ q⁰ off-diagonal, Markovian rows, spatially varying",
            },
        ]
    }

    /// `a = I`, `b₁ = 0`, no jumps, `Q = 0`.
    pub fn brownian(d: usize) -> CoefficientSet {
        CoefficientSet {
            d,
            m: 1,
            diffusion: DiffusionField::Identity,
            drift: DriftField::Zero,
            b2: JumpModulator::Constant(0.0),
            jump: JumpKernel::None,
            switching: SwitchField::Zero,
            q0: vec![0.0],
            preset_id: "brownian".into(),
        }
    }

    /// Brownian motion with a constant switching matrix.
    pub fn brownian_with_switching(d: usize, q: Vec<f64>, m: usize) -> CoefficientSet {
        let q0 = q0_from_constant(&q, m);
        CoefficientSet {
            d,
            m,
            diffusion: DiffusionField::Identity,
            drift: DriftField::Zero,
            b2: JumpModulator::Constant(0.0),
            jump: JumpKernel::None,
            switching: SwitchField::Constant(q),
            q0,
            preset_id: "brownian+switch".into(),
        }
    }

    /// Bound matrix of a constant `Q`: the entries are their own bounds.
    pub fn q0_from_constant(q: &[f64], m: usize) -> Vec<f64> {
        debug_assert_eq!(q.len(), m * m);
        q.to_vec()
    }

    /// 2-level Markovian switching at constant rate λ.
    pub fn switch2_markov(rate: f64) -> SwitchField {
        SwitchField::Constant(vec![-rate, rate, rate, -rate])
    }

    /// 2-level sub-Markovian switching `[[-2, 1], [1, -2]]`.
    pub fn switch2_submarkov() -> SwitchField {
        SwitchField::Constant(vec![-2.0, 1.0, 1.0, -2.0])
    }

    /// 3-level strictly irreducible Markovian switching.
    pub fn switch3_strict(rate: f64) -> SwitchField {
        let mut q = vec![rate; 9];
        for k in 0..3 {
            q[k * 3 + k] = -2.0 * rate;
        }
        SwitchField::Constant(q)
    }

    /// Truncated power-law jump part with constant modulator.
    pub fn stable_trunc(
        d: usize,
        c1: f64,
        beta: f64,
        support: f64,
        b2_value: f64,
    ) -> (JumpModulator, JumpKernel) {
        let _ = d;
        (
            JumpModulator::Constant(b2_value),
            JumpKernel::RadialPowerTrunc { c1, beta, support, one_sided: false },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn onesided_set(d: usize, c1: f64, beta: f64, b1: Vec<f64>) -> CoefficientSet {
        CoefficientSet {
            d,
            m: 1,
            diffusion: DiffusionField::Identity,
            drift: DriftField::Constant(b1),
            b2: JumpModulator::Constant(1.0),
            jump: JumpKernel::RadialPowerTrunc { c1, beta, support: 1.0, one_sided: true },
            switching: SwitchField::Zero,
            q0: vec![0.0],
            preset_id: "test-onesided".into(),
        }
    }

    #[test]
    fn cholesky_reconstructs_symmetric_matrices() {
        let mut a = vec![4.0, 2.0, 0.5, 2.0, 5.0, 1.0, 0.5, 1.0, 3.0];
        let orig = a.clone();
        cholesky_in_place(&mut a, 3).unwrap();
        // L·Lᵀ = original.
        for i in 0..3 {
            for j in 0..3 {
                let mut v = 0.0;
                for k in 0..3 {
                    v += a[i * 3 + k] * a[j * 3 + k];
                }
                assert_relative_eq!(v, orig[i * 3 + j], max_relative = 1e-12);
            }
        }
        let mut bad = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_in_place(&mut bad, 2).is_err());
    }

    #[test]
    fn effective_drift_even_kernel_is_exact_b1() {
        // Symmetric kernel: the correction vanishes identically.
        let mut set = onesided_set(2, 1.0, 1.5, vec![0.3, 0.0]);
        set.jump = JumpKernel::RadialPowerTrunc { c1: 1.0, beta: 1.5, support: 1.0, one_sided: false };
        let b = set.effective_drift(&[0.7, -0.3], 0, 0.05).unwrap();
        assert_eq!(b, vec![0.3, 0.0]);
        // No jump part at all: b₁ exactly.
        set.jump = JumpKernel::None;
        let b = set.effective_drift(&[0.7, -0.3], 0, 0.5).unwrap();
        assert_eq!(b, vec![0.3, 0.0]);
    }

    #[test]
    fn effective_drift_one_sided_matches_closed_form_and_mc() {
        // d = 2, β = 1.5, δ = 0.1: the z₁ moment is
        // c₁ (1 - δ^{-1/2})/(-1/2) · ω₁ = 4 c₁ (√10 - 1) for c₁ = 1.
        let set = onesided_set(2, 1.0, 1.5, vec![0.0, 0.0]);
        let b = set.effective_drift(&[0.0, 0.0], 0, 0.1).unwrap();
        let exact = 4.0 * (10.0f64.sqrt() - 1.0);
        assert_relative_eq!(-b[0], exact, max_relative = 1e-10);
        assert_relative_eq!(b[1], 0.0, epsilon = 1e-12);

        // Monte Carlo integration oracle for the same integral (3 digits).
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 4_000_000usize;
        let mut acc = 0.0;
        // Importance sample radius ∝ r^{-1} on (0.1, 1): r = 0.1 · 10^u.
        for _ in 0..n {
            let u: f64 = rng.random();
            let r = 0.1 * 10f64.powf(u);
            let t: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let (z0, _z1) = (r * t.cos(), r * t.sin());
            if z0 <= 0.0 {
                continue;
            }
            // Integrand in polar form is z₁ j(r) r; proposal density is
            // p(r, t) = 1/(r ln 10) · 1/(2π), so the weight is r² ln 10 · 2π.
            let weight = r * r * (10f64.ln()) * 2.0 * std::f64::consts::PI;
            let j = r.powf(-3.5); // c₁ |z|^{-d-β}, c₁ = 1, d = 2, β = 1.5
            acc += z0 * j * weight;
        }
        let mc = acc / n as f64;
        assert!(
            (mc - exact).abs() / exact < 2e-3,
            "MC integration oracle disagrees: mc = {mc}, exact = {exact}"
        );
    }

    #[test]
    fn tail_mass_closed_form() {
        // d = 2, β = 1.5, δ = 0.1, support 1: 2π (δ^{-β} - 1)/β.
        let k = JumpKernel::RadialPowerTrunc { c1: 1.0, beta: 1.5, support: 1.0, one_sided: false };
        let lam = k.tail_mass(2, 0.1).unwrap();
        let exact = 2.0 * std::f64::consts::PI * (0.1f64.powf(-1.5) - 1.0) / 1.5;
        assert_relative_eq!(lam, exact, max_relative = 1e-12);
        assert_eq!(k.tail_mass(2, 1.0).unwrap(), 0.0);
        let u = JumpKernel::UniformBall { intensity: 2.0 };
        assert_relative_eq!(
            u.tail_mass(3, 0.0).unwrap(),
            2.0 * unit_ball_volume(3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn small_mass_matches_radial_closed_form() {
        // Full kernel, support 1: σ_{d-1} c₁ ∫_0^1 r^{1-β} dr = σ c₁/(2-β).
        for d in [2usize, 3] {
            let k = JumpKernel::RadialPowerTrunc { c1: 0.7, beta: 1.5, support: 1.0, one_sided: false };
            let got = k.small_mass(d).unwrap();
            let exact = unit_sphere_area(d) * 0.7 / 0.5;
            assert_relative_eq!(got, exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn jump_sampler_respects_truncation_and_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let k = JumpKernel::RadialPowerTrunc { c1: 1.0, beta: 1.5, support: 1.0, one_sided: true };
        let mut z = [0.0; 2];
        for _ in 0..2000 {
            k.sample_big_jump(2, 0.05, &mut rng, &mut z).unwrap();
            let r = crate::geom::norm(&z);
            assert!(r > 0.05 && r <= 1.0, "radius out of range: {r}");
            assert!(z[0] > 0.0, "one-sided sample crossed the hyperplane");
        }
        assert!(JumpKernel::None.sample_big_jump(2, 0.1, &mut rng, &mut z).is_err());
    }

    #[test]
    fn scaled_family_closed_forms() {
        let mut set = presets::brownian_with_switching(2, vec![-1.0, 1.0, 1.0, -1.0], 2);
        set.b2 = JumpModulator::Constant(0.5);
        set.jump = JumpKernel::RadialPowerTrunc { c1: 1.0, beta: 1.5, support: 1.0, one_sided: false };
        let s = set.scaled(0.5).unwrap();
        match (&s.b2, &s.jump) {
            (JumpModulator::Constant(v), JumpKernel::RadialPowerTrunc { support, .. }) => {
                assert_relative_eq!(*v, 0.5 * 0.5f64.powf(0.5), max_relative = 1e-14);
                assert_relative_eq!(*support, 2.0, max_relative = 1e-14);
            }
            other => panic!("unexpected scaled fields: {other:?}"),
        }
        match &s.switching {
            SwitchField::Constant(q) => assert_eq!(q, &vec![-0.25, 0.25, 0.25, -0.25]),
            other => panic!("unexpected scaled switching: {other:?}"),
        }
        // One-sided kernels refuse to scale.
        set.jump = JumpKernel::RadialPowerTrunc { c1: 1.0, beta: 1.5, support: 1.0, one_sided: true };
        assert!(set.scaled(0.5).is_err());
    }

    #[test]
    fn switch_fields_evaluate_consistently() {
        let m = 2;
        let mut q = vec![0.0; 4];
        let f = SwitchField::MarkovTrig { q0_off: vec![0.0, 1.0, 2.0, 0.0], floor: 0.5 };
        for x0 in [-2.0, -0.5, 0.0, 1.0, 2.5] {
            f.eval_into(&[x0, 0.0], m, &mut q);
            // Rows sum to zero, off-diagonals pinched in [floor·q⁰, q⁰].
            for i in 0..m {
                let row: f64 = (0..m).map(|j| q[i * m + j]).sum();
                assert!(row.abs() < 1e-12);
            }
            assert!(q[1] >= 0.5 - 1e-12 && q[1] <= 1.0 + 1e-12);
            assert!(q[2] >= 1.0 - 1e-12 && q[2] <= 2.0 + 1e-12);
        }
    }
}
