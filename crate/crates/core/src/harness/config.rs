use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dynamics::{DynamicsOptions, ProbeProfile};
use crate::error::{Error, Result};
use crate::fourier::FourierField;
use crate::potentials::PotentialSpec;
use crate::statics::StaticOptions;

/// Experiment kinds, one CLI subcommand each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Stability,
    Dispersion,
    StressConsistency,
    StaticConverge,
    DynamicConverge,
    InstabilityDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::Stability,
        Self::Dispersion,
        Self::StressConsistency,
        Self::StaticConverge,
        Self::DynamicConverge,
        Self::InstabilityDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stability => "stability",
            Self::Dispersion => "dispersion",
            Self::StressConsistency => "stress-consistency",
            Self::StaticConverge => "static-converge",
            Self::DynamicConverge => "dynamic-converge",
            Self::InstabilityDemo => "instability-demo",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lattice geometry: dimension, orientation `A` and supercell sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub dim: usize,
    /// Rows of `A`; identity when absent.
    #[serde(default)]
    pub orientation: Option<Vec<Vec<f64>>>,
    /// Supercell sizes `N`.
    #[serde(default)]
    pub cells: Option<Vec<usize>>,
    /// Alternatively the scales `ε = 1/N`.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            dim: 1,
            orientation: None,
            cells: None,
            eps: None,
        }
    }
}

impl Geometry {
    pub fn orientation(&self) -> Result<DMatrix<f64>> {
        match &self.orientation {
            None => Ok(DMatrix::identity(self.dim, self.dim)),
            Some(rows) => {
                if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) {
                    return Err(Error::Config(format!("geometry.orientation must be {0}x{0}", self.dim)));
                }
                Ok(DMatrix::from_row_iterator(self.dim, self.dim, rows.iter().flatten().copied()))
            }
        }
    }

    /// Supercell sizes from `cells` or `eps`.
    pub fn cells(&self) -> Result<Vec<usize>> {
        match (&self.cells, &self.eps) {
            (Some(_), Some(_)) => Err(Error::Config("geometry: give either cells or eps, not both".into())),
            (Some(c), None) => Ok(c.clone()),
            (None, Some(e)) => e
                .iter()
                .map(|&eps| {
                    let n = (1.0 / eps).round();
                    if !(eps > 0.0) || (n * eps - 1.0).abs() > 1e-12 {
                        Err(Error::Config(format!("geometry.eps: {eps} is not 1/N for an integer N")))
                    } else {
                        Ok(n as usize)
                    }
                })
                .collect(),
            (None, None) => Ok(Vec::new()),
        }
    }
}

/// `[lo, hi]` acceptance band.
pub type Band = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    /// Brillouin grid points per axis.
    #[serde(default = "default_stability_grid")]
    pub grid: usize,
    /// Chain length for the alternating-strain probe (harmonic chains only).
    #[serde(default)]
    pub probe_cells: Option<usize>,
    /// Expected `γ` and its tolerance.
    #[serde(default)]
    pub expect_gamma: Option<[f64; 2]>,
    /// Expected probe Rayleigh quotient and its tolerance.
    #[serde(default)]
    pub expect_quotient: Option<[f64; 2]>,
}

fn default_stability_grid() -> usize {
    256
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            grid: default_stability_grid(),
            probe_cells: None,
            expect_gamma: None,
            expect_quotient: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSection {
    #[serde(default = "default_stability_grid")]
    pub grid: usize,
}

impl Default for DispersionSection {
    fn default() -> Self {
        Self {
            grid: default_stability_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressSection {
    /// Macroscopic displacement `U`.
    pub field: FourierField,
    #[serde(default = "default_per_cell")]
    pub per_cell: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub stress_band: Option<Band>,
    #[serde(default)]
    pub divergence_band: Option<Band>,
}

fn default_per_cell() -> usize {
    4
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSection {
    /// Shape of `F^c`.
    pub force: FourierField,
    pub delta: f64,
    #[serde(default)]
    pub options: StaticOptions,
    #[serde(default)]
    pub band: Option<Band>,
    /// Repeat with `δ/2` and require error ratios inside this band.
    #[serde(default)]
    pub halving_band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicSection {
    pub u0: FourierField,
    #[serde(default)]
    pub u1: Option<FourierField>,
    pub t_macro: f64,
    #[serde(default)]
    pub options: DynamicsOptions,
    #[serde(default)]
    pub band: Option<Band>,
    /// Largest admissible relative change under the half-step control.
    #[serde(default)]
    pub max_half_dt_change: Option<f64>,
}

/// What the blow-up demonstration is expected to show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthExpectation {
    /// `‖u̇(t)‖ ≥ ε² ½ eᵗ` throughout the window.
    Growth,
    /// `‖u̇(t)‖ ≤ 2ε²` throughout.
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstabilitySection {
    pub a1: f64,
    pub a2: f64,
    pub cells: usize,
    #[serde(default = "default_profile")]
    pub profile: ProbeProfile,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub expect: Option<GrowthExpectation>,
}

fn default_profile() -> ProbeProfile {
    ProbeProfile::Alternating
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Base file name; defaults to the experiment kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub dir: Option<String>,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub stability: Option<StabilitySection>,
    #[serde(default)]
    pub dispersion: Option<DispersionSection>,
    #[serde(default)]
    pub stress: Option<StressSection>,
    #[serde(default)]
    pub statics: Option<StaticSection>,
    #[serde(default)]
    pub dynamics: Option<DynamicSection>,
    #[serde(default)]
    pub instability: Option<InstabilitySection>,
}

impl ExperimentConfig {
    /// Parses TOML text and validates the schema.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn name(&self) -> String {
        self.output.name.clone().unwrap_or_else(|| self.kind.to_string())
    }

    fn need<T>(&self, section: &Option<T>, name: &str) -> Result<()> {
        if section.is_none() {
            return Err(Error::Config(format!("experiment '{}' requires a [{name}] section", self.kind)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.geometry.dim) {
            return Err(Error::Config(format!("geometry.dim must be 1, 2 or 3, got {}", self.geometry.dim)));
        }
        let a = self.geometry.orientation()?;
        let cells = self.geometry.cells()?;
        if self.kind != ExperimentKind::InstabilityDemo {
            let spec = self
                .potential
                .as_ref()
                .ok_or_else(|| Error::Config(format!("experiment '{}' requires a [potential] section", self.kind)))?;
            let p = spec.build(&a)?;
            if p.dim() != self.geometry.dim {
                return Err(Error::Config("potential and geometry dimensions differ".into()));
            }
        }
        let check_field = |f: &FourierField, what: &str| -> Result<()> {
            if f.dim != self.geometry.dim {
                return Err(Error::Config(format!("{what} has dimension {} (expected {})", f.dim, self.geometry.dim)));
            }
            f.clone().validated().map(|_| ())
        };
        match self.kind {
            ExperimentKind::Stability | ExperimentKind::Dispersion => {}
            ExperimentKind::StressConsistency => {
                self.need(&self.stress, "stress")?;
                check_field(&self.stress.as_ref().unwrap().field, "stress.field")?;
                need_sweep(&cells)?;
            }
            ExperimentKind::StaticConverge => {
                self.need(&self.statics, "statics")?;
                let s = self.statics.as_ref().unwrap();
                check_field(&s.force, "statics.force")?;
                if !s.force.is_zero_mean() {
                    return Err(Error::Config("statics.force must have zero mean".into()));
                }
                need_sweep(&cells)?;
            }
            ExperimentKind::DynamicConverge => {
                self.need(&self.dynamics, "dynamics")?;
                let s = self.dynamics.as_ref().unwrap();
                check_field(&s.u0, "dynamics.u0")?;
                if let Some(u1) = &s.u1 {
                    check_field(u1, "dynamics.u1")?;
                }
                if !(s.t_macro > 0.0) {
                    return Err(Error::Config("dynamics.t_macro must be positive".into()));
                }
                need_sweep(&cells)?;
            }
            ExperimentKind::InstabilityDemo => {
                self.need(&self.instability, "instability")?;
                let s = self.instability.as_ref().unwrap();
                if self.geometry.dim != 1 {
                    return Err(Error::Config("instability demo is one-dimensional".into()));
                }
                if s.cells < 4 || s.cells % 2 != 0 {
                    return Err(Error::Config(format!("instability.cells must be even and >= 4, got {}", s.cells)));
                }
            }
        }
        Ok(())
    }
}

fn need_sweep(cells: &[usize]) -> Result<()> {
    if cells.len() < 3 {
        return Err(Error::Config(format!(
            "a convergence sweep needs at least 3 values in geometry.cells or geometry.eps, got {}",
            cells.len()
        )));
    }
    Ok(())
}
