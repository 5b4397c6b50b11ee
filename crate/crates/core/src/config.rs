//! Run configuration, read from TOML with sections `[domain]`, `[problem]`,
//! `[scheme]`, `[output]` and `[diagnostics]`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{DomainSpec, Shape};
use crate::linalg::SolverKind;
use crate::momentum::ViscosityLaw;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainSection,
    pub problem: ProblemSection,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub shape: Shape,
    pub epsilon0: f64,
    /// Padded box `Ω̃` as `[lo, hi]`; defaults to the shape bounds widened by
    /// `ε₀(1 + 1/16)`.
    #[serde(default)]
    pub bounding_box: Option<[[f64; 3]; 2]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub rho0: String,
    pub rho_lower: f64,
    /// Defaults to the largest sampled value of `rho0` on the grid.
    #[serde(default)]
    pub rho_upper: Option<f64>,
    pub v0: [String; 3],
    #[serde(default = "zero_vector")]
    pub force: [String; 3],
    /// Piecewise-linear `μ(ρ)` knots `[[ρ, μ], ...]`.
    pub viscosity: ViscosityLaw,
}

fn zero_vector() -> [String; 3] {
    ["0".into(), "0".into(), "0".into()]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Auto,
    Direct,
    Iterative,
}

impl SolverChoice {
    pub fn kind(self) -> Option<SolverKind> {
        match self {
            SolverChoice::Auto => None,
            SolverChoice::Direct => Some(SolverKind::Direct),
            SolverChoice::Iterative => Some(SolverKind::Iterative),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub h: f64,
    pub alpha: f64,
    pub t_final: f64,
    #[serde(default)]
    pub solver: SolverChoice,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldFormat {
    #[default]
    Csv,
    Vtk,
}

impl std::str::FromStr for FieldFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FieldFormat::Csv),
            "vtk" => Ok(FieldFormat::Vtk),
            _ => Err(Error::Config(format!("unknown field format {s:?} (csv or vtk)"))),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: FieldFormat,
    /// Number of field snapshots over the run (`N_out`); 0 writes none.
    pub snapshots: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("densflow-out"),
            format: FieldFormat::Csv,
            snapshots: 20,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub seed: u64,
    pub trials: usize,
    /// Mesh size for the lemma suite; defaults to the scheme's `h`.
    pub lemma_h: Option<f64>,
    /// Largest padded grid `|Ω̃_h|` a refinement study may keep in memory.
    pub retain_limit: usize,
    pub resolutions: Vec<f64>,
    /// Scalar test function of the weak transport equation.
    pub transport_test: Option<String>,
    /// Vector potential `ψ` of the divergence-free momentum test field `∇×ψ`.
    pub momentum_potential: Option<[String; 3]>,
    /// Vector potential of the time-independent pressure test field.
    pub pressure_potential: Option<[String; 3]>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 200,
            lemma_h: None,
            retain_limit: 32 * 32 * 32,
            resolutions: Vec::new(),
            transport_test: None,
            momentum_potential: None,
            pressure_potential: None,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn domain_spec(&self) -> DomainSpec {
        let spec = DomainSpec::new(self.domain.shape.clone(), self.domain.epsilon0);
        match self.domain.bounding_box {
            Some([lo, hi]) => spec.with_bounding_box(lo, hi),
            None => spec,
        }
    }
}

pub(crate) fn parse_vector(src: &[String; 3]) -> Result<[Expr; 3]> {
    Ok([Expr::parse(&src[0])?, Expr::parse(&src[1])?, Expr::parse(&src[2])?])
}
