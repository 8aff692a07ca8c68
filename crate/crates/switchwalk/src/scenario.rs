//! Scenario configuration: a TOML file naming the coefficient presets, the
//! operator-class constants, the domain ball, the Monte Carlo controls and a
//! list of experiments with their tolerances.
//!
//! Unknown keys are hard errors. The seed is mandatory — there is no
//! wall-clock default, a scenario always replays.

use serde::{Deserialize, Serialize};

use crate::coeffs::{
    presets, CoefficientSet, DiffusionField, DriftField, JumpKernel, JumpModulator, SwitchField,
};
use crate::engine::{BoundaryPolicy, SimControls};
use crate::error::{Error, Result};
use crate::estimate::Payoff;
use crate::geom::Ball;
use crate::params::ClassParams;

/// Top-level scenario file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario: Meta,
    pub class: ClassConstants,
    pub coefficients: CoefficientsSpec,
    pub domain: DomainSpec,
    pub controls: ControlsSpec,
    #[serde(default)]
    pub validation: ValidationSpec,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    pub dimension: usize,
    pub levels: usize,
    pub seed: u64,
}

/// Class constants without the dimensions (those come from `scenario`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassConstants {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub theta5: f64,
    pub gamma: f64,
    pub beta: f64,
    pub c1: f64,
    pub c0: f64,
    pub vartheta: f64,
}

impl ClassConstants {
    pub fn to_params(&self, d: usize, m: usize) -> ClassParams {
        ClassParams {
            d,
            m,
            theta1: self.theta1,
            theta2: self.theta2,
            theta3: self.theta3,
            theta4: self.theta4,
            theta5: self.theta5,
            gamma: self.gamma,
            beta: self.beta,
            c1: self.c1,
            c0: self.c0,
            vartheta: self.vartheta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControlsSpec {
    /// Default sample count for experiments that do not override it.
    pub n: u64,
    /// Time step; omitted = the per-ball default `min(1e-4, (r/50)²)`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub max_time: Option<f64>,
    #[serde(default)]
    pub boundary_policy: Option<BoundaryPolicy>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    /// Run the class-condition sweep before any experiment.
    pub enabled: bool,
    pub n_points: usize,
    /// Declared Hölder constant for the diffusion difference check.
    pub holder_const: f64,
    /// Run experiments even when a condition fails (failure still reported).
    pub allow_failure: bool,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        Self { enabled: true, n_points: 10_000, holder_const: 4.0, allow_failure: false }
    }
}

/// Coefficient selection: either a whole bundle or per-field presets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSpec {
    #[serde(default)]
    pub bundle: Option<String>,
    #[serde(default)]
    pub diffusion: Option<DiffusionSpec>,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub b2: Option<ModulatorSpec>,
    #[serde(default)]
    pub jump: Option<JumpSpec>,
    #[serde(default)]
    pub switching: Option<SwitchSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Identity,
    Diagonal { entries: Vec<f64> },
    Trig {
        base: f64,
        amp: f64,
        #[serde(default = "one")]
        freq: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    Constant { vector: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulatorSpec {
    B2Constant { value: f64 },
    B2Trig { base: f64, amp: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    None,
    StableTrunc {
        c1: f64,
        beta: f64,
        #[serde(default = "one")]
        support: f64,
    },
    StableTruncOnesided { c1: f64, beta: f64 },
    UniformBall { intensity: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchSpec {
    SwitchNone,
    Switch2Markov { rate: f64 },
    Switch2Submarkov,
    Switch3Strict {
        #[serde(default = "one")]
        rate: f64,
    },
    MarkovTrig { q0_off: Vec<f64>, floor: f64 },
    Constant { q: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

/// Boundary data named in configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    Constant { value: f64 },
    /// `shift + gradient · x`, optionally scaled per level.
    Linear {
        shift: f64,
        gradient: Vec<f64>,
        #[serde(default)]
        level_weights: Option<Vec<f64>>,
    },
    Halfspace { axis: usize, threshold: f64 },
    LevelIndicator { level: usize },
}

impl PayoffSpec {
    pub fn build(&self) -> Payoff {
        match self {
            PayoffSpec::Constant { value } => Payoff::constant(*value),
            PayoffSpec::Linear { shift, gradient, level_weights } => {
                let shift = *shift;
                let gradient = gradient.clone();
                let weights = level_weights.clone();
                Payoff::new(move |x, l| {
                    let base = shift + crate::geom::dot(&gradient, x);
                    match &weights {
                        Some(w) => base * w.get(l).copied().unwrap_or(0.0),
                        None => base,
                    }
                })
            }
            PayoffSpec::Halfspace { axis, threshold } => Payoff::halfspace(*axis, *threshold),
            PayoffSpec::LevelIndicator { level } => Payoff::level_indicator(*level),
        }
    }
}

/// One experiment with its declared tolerances.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// `E[τ_B ∧ τ₁]` from the domain center against a closed form.
    ExitTime {
        #[serde(default)]
        n: Option<u64>,
        expected: f64,
        #[serde(default)]
        max_stderr: Option<f64>,
    },
    /// Switch-law closed forms and the resolvent cross-identity. Runs in
    /// free space with its own clock resolution and horizon.
    PreswitchLaw {
        #[serde(default)]
        n: Option<u64>,
        alphas: Vec<f64>,
        #[serde(default)]
        expected: Option<Vec<f64>>,
        #[serde(default)]
        cross_check: bool,
        #[serde(default = "default_law_dt")]
        dt: f64,
        #[serde(default = "default_law_horizon")]
        max_time: f64,
    },
    /// First-switch decomposition residual at the domain center.
    Representation {
        #[serde(default)]
        n: Option<u64>,
        payoff: PayoffSpec,
        nodes_per_radius: usize,
        n_per_node: u64,
        #[serde(default)]
        levels: Option<Vec<usize>>,
    },
    /// Coupling-strength sweep plus expansion contraction at the passing radius.
    GqNorm {
        #[serde(default)]
        n: Option<u64>,
        radii: Vec<f64>,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default = "default_contraction")]
        contraction_max: f64,
        #[serde(default = "default_order")]
        neumann_order: usize,
        nodes_per_radius: usize,
        n_per_node: u64,
        payoff: PayoffSpec,
    },
    /// Exit-moment sweep against the square law.
    ExitMoment {
        #[serde(default)]
        n: Option<u64>,
        radii: Vec<f64>,
        #[serde(default)]
        start_fractions: Option<Vec<f64>>,
        #[serde(default = "default_r2")]
        r2_min: f64,
        #[serde(default)]
        c_expected: Option<f64>,
        #[serde(default = "default_c_rel")]
        c_rel_tol: f64,
    },
    /// Occupation density vs the exact ball kernel, swept over radii.
    GreenSandwich {
        #[serde(default)]
        n: Option<u64>,
        radii: Vec<f64>,
        bins_per_radius: usize,
        /// Require central-bin ratios within `3·stderr + slack` of 1
        /// (set for driftless, killing-free scenarios only).
        #[serde(default)]
        central_check: bool,
        #[serde(default = "default_central_slack")]
        central_slack: f64,
        #[serde(default = "default_stability")]
        stability_tol: f64,
    },
    /// 3G sweep stability and the exact scaling identity (no paths).
    ThreeGScaling {
        n_triples: u64,
        #[serde(default = "default_three_g_tol")]
        stability_tol: f64,
        n_scaling_pairs: u64,
    },
    /// Path-sum/enumeration equivalence and series bounds (no paths).
    Combinatorics {},
    /// Harnack ratio report over one or more radii.
    Harnack {
        #[serde(default)]
        n: Option<u64>,
        radii: Vec<f64>,
        payoff: PayoffSpec,
        #[serde(default)]
        per_level_bound: Option<f64>,
        #[serde(default = "default_factor")]
        cross_radius_factor: f64,
    },
    /// Hölder slope regression.
    Holder {
        #[serde(default)]
        n: Option<u64>,
        payoff: PayoffSpec,
        #[serde(default = "default_seps")]
        n_separations: usize,
        #[serde(default)]
        slope_min: Option<f64>,
    },
    /// Space-time rescaling consistency.
    Scaling {
        #[serde(default)]
        n: Option<u64>,
        lambda: f64,
        #[serde(default = "default_sigma")]
        sigma_tol: f64,
    },
    /// Jump-exit identity.
    LevyExit {
        #[serde(default)]
        n: Option<u64>,
        bins_per_radius: usize,
        payoff: PayoffSpec,
    },
}

fn default_threshold() -> f64 {
    0.25
}
fn default_law_dt() -> f64 {
    1e-3
}
fn default_law_horizon() -> f64 {
    40.0
}
fn default_contraction() -> f64 {
    0.30
}
fn default_order() -> usize {
    2
}
fn default_r2() -> f64 {
    0.99
}
fn default_c_rel() -> f64 {
    0.05
}
fn default_central_slack() -> f64 {
    0.02
}
fn default_stability() -> f64 {
    0.25
}
fn default_three_g_tol() -> f64 {
    0.10
}
fn default_factor() -> f64 {
    2.0
}
fn default_seps() -> usize {
    5
}
fn default_sigma() -> f64 {
    3.0
}

impl ExperimentSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentSpec::ExitTime { .. } => "exit_time",
            ExperimentSpec::PreswitchLaw { .. } => "preswitch_law",
            ExperimentSpec::Representation { .. } => "representation",
            ExperimentSpec::GqNorm { .. } => "gq_norm",
            ExperimentSpec::ExitMoment { .. } => "exit_moment",
            ExperimentSpec::GreenSandwich { .. } => "green_sandwich",
            ExperimentSpec::ThreeGScaling { .. } => "three_g_scaling",
            ExperimentSpec::Combinatorics {} => "combinatorics",
            ExperimentSpec::Harnack { .. } => "harnack",
            ExperimentSpec::Holder { .. } => "holder",
            ExperimentSpec::Scaling { .. } => "scaling",
            ExperimentSpec::LevyExit { .. } => "levy_exit",
        }
    }
}

impl Scenario {
    /// Parse a scenario from TOML with line/column diagnostics.
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scenario.check_semantics()?;
        Ok(scenario)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    fn check_semantics(&self) -> Result<()> {
        let d = self.scenario.dimension;
        let m = self.scenario.levels;
        self.class.to_params(d, m).validate()?;
        if self.domain.center.len() != d {
            return Err(Error::Config(format!(
                "domain center has {} coordinates but dimension is {d}",
                self.domain.center.len()
            )));
        }
        if !(self.domain.radius > 0.0) {
            return Err(Error::Config("domain radius must be > 0".into()));
        }
        if self.controls.n == 0 {
            return Err(Error::Config("controls.n must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn domain_ball(&self) -> Ball {
        Ball { center: self.domain.center.clone(), radius: self.domain.radius }
    }

    /// Simulation controls for a ball of the given radius, honoring the
    /// scenario overrides.
    pub fn controls_for(&self, ball: &Ball) -> SimControls {
        let mut c = SimControls::for_ball(ball);
        if let Some(dt) = self.controls.dt {
            c.dt = dt;
        }
        if let Some(delta) = self.controls.delta {
            c.delta = delta;
        }
        if let Some(mt) = self.controls.max_time {
            c.max_time = mt;
        }
        if let Some(bp) = self.controls.boundary_policy {
            c.boundary_policy = bp;
        }
        c.theta3 = self.class.theta3;
        c
    }

    /// Resolve the coefficient presets into a callable set.
    pub fn build_coefficients(&self) -> Result<CoefficientSet> {
        let d = self.scenario.dimension;
        let m = self.scenario.levels;
        let spec = &self.coefficients;
        if let Some(bundle) = &spec.bundle {
            if spec.diffusion.is_some()
                || spec.drift.is_some()
                || spec.b2.is_some()
                || spec.jump.is_some()
                || spec.switching.is_some()
            {
                return Err(Error::Config(
                    "coefficients.bundle excludes per-field presets".into(),
                ));
            }
            return match bundle.as_str() {
                "brownian" => {
                    if m != 1 {
                        return Err(Error::Config(
                            "bundle `brownian` is single-level; set levels = 1".into(),
                        ));
                    }
                    Ok(presets::brownian(d))
                }
                other => Err(Error::Config(format!("unknown bundle `{other}`"))),
            };
        }
        let diffusion = match spec.diffusion.as_ref() {
            None | Some(DiffusionSpec::Identity) => DiffusionField::Identity,
            Some(DiffusionSpec::Diagonal { entries }) => {
                if entries.len() != d {
                    return Err(Error::Config(format!(
                        "diagonal diffusion needs {d} entries, got {}",
                        entries.len()
                    )));
                }
                DiffusionField::Diagonal(entries.clone())
            }
            Some(DiffusionSpec::Trig { base, amp, freq }) => {
                if !(base - amp.abs() > 0.0) {
                    return Err(Error::Config(
                        "trig diffusion needs base > |amp| for ellipticity".into(),
                    ));
                }
                DiffusionField::Trig { base: *base, amp: *amp, freq: *freq }
            }
        };
        let drift = match spec.drift.as_ref() {
            None | Some(DriftSpec::Zero) => DriftField::Zero,
            Some(DriftSpec::Constant { vector }) => {
                if vector.len() != d {
                    return Err(Error::Config(format!(
                        "drift vector needs {d} entries, got {}",
                        vector.len()
                    )));
                }
                DriftField::Constant(vector.clone())
            }
        };
        let b2 = match spec.b2.as_ref() {
            None => JumpModulator::Constant(if spec.jump.is_some() { 1.0 } else { 0.0 }),
            Some(ModulatorSpec::B2Constant { value }) => JumpModulator::Constant(*value),
            Some(ModulatorSpec::B2Trig { base, amp }) => {
                JumpModulator::TrigX { base: *base, amp: *amp }
            }
        };
        let jump = match spec.jump.as_ref() {
            None | Some(JumpSpec::None) => JumpKernel::None,
            Some(JumpSpec::StableTrunc { c1, beta, support }) => JumpKernel::RadialPowerTrunc {
                c1: *c1,
                beta: *beta,
                support: *support,
                one_sided: false,
            },
            Some(JumpSpec::StableTruncOnesided { c1, beta }) => JumpKernel::RadialPowerTrunc {
                c1: *c1,
                beta: *beta,
                support: 1.0,
                one_sided: true,
            },
            Some(JumpSpec::UniformBall { intensity }) => {
                JumpKernel::UniformBall { intensity: *intensity }
            }
        };
        let (switching, q0) = match spec.switching.as_ref() {
            None | Some(SwitchSpec::SwitchNone) => (SwitchField::Zero, vec![0.0; m * m]),
            Some(SwitchSpec::Switch2Markov { rate }) => {
                require_levels(m, 2, "switch2_markov")?;
                let q = vec![-rate, *rate, *rate, -rate];
                (SwitchField::Constant(q.clone()), q)
            }
            Some(SwitchSpec::Switch2Submarkov) => {
                require_levels(m, 2, "switch2_submarkov")?;
                let q = vec![-2.0, 1.0, 1.0, -2.0];
                (SwitchField::Constant(q.clone()), q)
            }
            Some(SwitchSpec::Switch3Strict { rate }) => {
                require_levels(m, 3, "switch3_strict")?;
                let mut q = vec![*rate; 9];
                for k in 0..3 {
                    q[k * 3 + k] = -2.0 * rate;
                }
                (SwitchField::Constant(q.clone()), q)
            }
            Some(SwitchSpec::MarkovTrig { q0_off, floor }) => {
                if q0_off.len() != m * m {
                    return Err(Error::Config(format!(
                        "markov_trig needs an {m}×{m} off-diagonal matrix"
                    )));
                }
                let mut q0 = q0_off.clone();
                for i in 0..m {
                    let row: f64 =
                        (0..m).filter(|&j| j != i).map(|j| q0_off[i * m + j]).sum();
                    q0[i * m + i] = -row;
                }
                (SwitchField::MarkovTrig { q0_off: q0_off.clone(), floor: *floor }, q0)
            }
            Some(SwitchSpec::Constant { q }) => {
                if q.len() != m * m {
                    return Err(Error::Config(format!("constant Q needs {m}×{m} entries")));
                }
                (SwitchField::Constant(q.clone()), q.clone())
            }
        };
        Ok(CoefficientSet {
            d,
            m,
            diffusion,
            drift,
            b2,
            jump,
            switching,
            q0,
            preset_id: spec
                .bundle
                .clone()
                .unwrap_or_else(|| "composed".into()),
        })
    }
}

fn require_levels(m: usize, need: usize, preset: &str) -> Result<()> {
    if m != need {
        return Err(Error::Config(format!(
            "switching preset `{preset}` needs levels = {need}, scenario has {m}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[scenario]
name = "t"
dimension = 2
levels = 1
seed = 7

[class]
theta1 = 1.0
theta2 = 1.0
theta3 = 1.0
theta4 = 50.0
theta5 = 4.0
gamma = 0.5
beta = 1.5
c1 = 1.0
c0 = 0.5
vartheta = 8.0

[coefficients]
bundle = "brownian"

[domain]
center = [0.0, 0.0]
radius = 1.0

[controls]
n = 1000
"#;

    #[test]
    fn minimal_scenario_parses_and_builds() {
        let sc = Scenario::from_toml(MINIMAL).unwrap();
        let coeffs = sc.build_coefficients().unwrap();
        assert_eq!(coeffs.preset_id, "brownian");
        assert_eq!(sc.controls_for(&sc.domain_ball()).dt, 1e-4);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let bad = MINIMAL.replace("[controls]\nn = 1000", "[controls]\nn = 1000\nworkers = 4");
        let err = Scenario::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("workers"), "message: {err}");
    }

    #[test]
    fn out_of_class_beta_is_named() {
        let bad = MINIMAL.replace("beta = 1.5", "beta = 2.5");
        let err = Scenario::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("beta ∉ (1,2)"), "message: {err}");
    }

    #[test]
    fn seed_is_mandatory() {
        let bad = MINIMAL.replace("seed = 7\n", "");
        assert!(Scenario::from_toml(&bad).is_err());
    }

    #[test]
    fn composed_coefficients_build() {
        let text = MINIMAL
            .replace("levels = 1", "levels = 2")
            .replace(
                "[coefficients]\nbundle = \"brownian\"",
                "[coefficients.diffusion]\npreset = \"trig\"\nbase = 1.0\namp = 0.25\n\n[coefficients.jump]\npreset = \"stable_trunc\"\nc1 = 0.5\nbeta = 1.5\n\n[coefficients.switching]\npreset = \"switch2_markov\"\nrate = 1.0",
            );
        let sc = Scenario::from_toml(&text).unwrap();
        let coeffs = sc.build_coefficients().unwrap();
        assert_eq!(coeffs.m, 2);
        assert!(matches!(coeffs.jump, JumpKernel::RadialPowerTrunc { .. }));
        // b2 defaults to 1 when a jump kernel is present.
        assert!(matches!(coeffs.b2, JumpModulator::Constant(v) if v == 1.0));
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let sc = Scenario::from_toml(MINIMAL).unwrap();
        let text = toml::to_string(&sc).unwrap();
        let back = Scenario::from_toml(&text).unwrap();
        assert_eq!(sc, back);
    }
}
