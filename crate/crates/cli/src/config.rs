use std::path::Path;

use anyhow::{bail, Context};
use loopflow_core::crit::{SeedStrategy, Tolerances};
use loopflow_core::manifold::{ManifoldKind, ManifoldSpec, UNIT_CIRCUMFERENCE_RADIUS};
use loopflow_core::moduli::OrbitControls;
use loopflow_core::perturbation::GeometricPotential;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "loopflow/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub kind: ManifoldKind,
    #[serde(default = "one")]
    pub dim: usize,
    /// Radius of each circle factor, or of the sphere. Defaults to a
    /// circle of circumference one.
    pub scale: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub tol_crit: Option<f64>,
    pub tol_conv: f64,
    pub tol_nondeg: f64,
    pub dedup_radius: f64,
    pub capture_radius: f64,
    pub rank_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let o = OrbitControls::default();
        Self {
            tol_crit: None,
            tol_conv: o.tol_conv,
            tol_nondeg: Tolerances::default().tol_nondeg,
            dedup_radius: o.dedup_radius,
            capture_radius: o.capture_radius,
            rank_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub lattice: Option<usize>,
    pub winding_bound: Option<i64>,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { lattice: None, winding_bound: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// Amplitude of the random initial loop, in units of the injectivity radius.
    pub amplitude: f64,
    pub s_max: f64,
    pub stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { amplitude: 0.3, s_max: 20.0, stride: 10 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModuliConfig {
    pub s_max: f64,
    pub sweep_angles: usize,
    pub bisection_width: f64,
}

impl Default for ModuliConfig {
    fn default() -> Self {
        let o = OrbitControls::default();
        Self { s_max: o.s_max, sweep_angles: o.sweep_angles, bisection_width: o.bisection_width }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissibleConfig {
    /// Radius of the neighbourhood U of the critical set, in units of ι.
    pub u_fraction: f64,
    pub probes: usize,
    /// Largest probe amplitude, in units of ι.
    pub probe_amplitude: f64,
    pub tol_reg: f64,
}

impl Default for AdmissibleConfig {
    fn default() -> Self {
        Self { u_fraction: 0.05, probes: 512, probe_amplitude: 1.0, tol_reg: 1e-8 }
    }
}

/// Thresholds for the invariant suite run by `check`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub energy_rel: f64,
    pub gradient_rel: f64,
    pub gradient_pairs: usize,
    pub ev0_fraction: f64,
    pub flow_stride: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { energy_rel: 1e-3, gradient_rel: 1e-4, gradient_pairs: 20, ev0_fraction: 0.1, flow_stride: 20 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub betti: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub manifold: ManifoldConfig,
    pub potential: GeometricPotential,
    pub level: f64,
    pub n_samples: usize,
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<String>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub moduli: ModuliConfig,
    #[serde(default)]
    pub admissible: AdmissibleConfig,
    #[serde(default)]
    pub check: CheckConfig,
    pub reference: Option<ReferenceConfig>,
}

/// A parsed config together with the hash of its source text.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
}

pub fn load(path: &Path) -> anyhow::Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text)
}

pub fn parse(text: &str) -> anyhow::Result<LoadedConfig> {
    let config: RunConfig = toml::from_str(text).context("parsing config")?;
    config.validate()?;
    Ok(LoadedConfig { config, hash: hex::encode(Sha256::digest(text.as_bytes())) })
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema != SCHEMA {
            bail!("unsupported schema {:?}, expected {SCHEMA:?}", self.schema);
        }
        let n = self.n_samples;
        if n < 16 || !n.is_power_of_two() {
            bail!("n_samples must be a power of two >= 16, got {n}");
        }
        let t = &self.tolerances;
        let positive = [
            ("h", self.h),
            ("tol_conv", t.tol_conv),
            ("tol_nondeg", t.tol_nondeg),
            ("dedup_radius", t.dedup_radius),
            ("capture_radius", t.capture_radius),
            ("rank_tol", t.rank_tol),
            ("tol_crit", t.tol_crit.unwrap_or(1.0)),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                bail!("{name} must be positive, got {value}");
            }
        }
        if let Some(0) = self.threads {
            bail!("threads must be at least 1");
        }
        if self.manifold.scale.is_some_and(|s| !(s > 0.0)) {
            bail!("manifold scale must be positive");
        }
        self.manifold_spec()?;
        self.potential.validate(&self.manifold_spec()?).context("potential")?;
        Ok(())
    }

    pub fn manifold_spec(&self) -> anyhow::Result<ManifoldSpec> {
        let c = &self.manifold;
        Ok(match c.kind {
            ManifoldKind::Circle => {
                if c.dim != 1 {
                    bail!("a circle has dimension 1");
                }
                ManifoldSpec::circle(c.scale.unwrap_or(UNIT_CIRCUMFERENCE_RADIUS))
            }
            ManifoldKind::FlatTorus => ManifoldSpec::flat_torus_with_radius(c.dim, c.scale.unwrap_or(UNIT_CIRCUMFERENCE_RADIUS)),
            ManifoldKind::RoundSphere => ManifoldSpec::round_sphere(c.dim, c.scale.unwrap_or(1.0)),
        })
    }

    pub fn seed_strategy(&self) -> SeedStrategy {
        let mut s = SeedStrategy::contractible(self.n_samples);
        if let Some(l) = self.seeds.lattice {
            s.lattice = l;
        }
        if let Some(w) = self.seeds.winding_bound {
            s.winding_bound = w;
        }
        s.dedup_radius = Some(self.tolerances.dedup_radius);
        s.tolerances.tol_crit = self.tolerances.tol_crit;
        s.tolerances.tol_nondeg = self.tolerances.tol_nondeg;
        s
    }

    pub fn orbit_controls(&self) -> OrbitControls {
        OrbitControls {
            h: self.h,
            s_max: self.moduli.s_max,
            tol_conv: self.tolerances.tol_conv,
            capture_radius: self.tolerances.capture_radius,
            sweep_angles: self.moduli.sweep_angles,
            bisection_width: self.moduli.bisection_width,
            dedup_radius: self.tolerances.dedup_radius,
            ..OrbitControls::default()
        }
    }
}
