//! TOML run configuration and its resolution into grid, density and data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::{AlphaProfile, DensityKind, DensityModel, DensityTable};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// A space–time function given as an expression in `x`, `y`, `t` or as a
/// time-independent field table `x[,y],value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Data {
    Number(f64),
    Expr(String),
    Table { table: PathBuf },
}

impl Default for Data {
    fn default() -> Self {
        Data::Number(0.0)
    }
}

/// Compiled [`Data`].
pub enum Source {
    Const(f64),
    Expr(Box<dyn Fn(f64, f64, f64) -> f64>),
    Field { grid: Grid, values: Field },
}

impl Source {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            Source::Const(c) => *c,
            Source::Expr(f) => f(x, y, t),
            Source::Field { grid, values } => values[grid.nearest(&[x, y])],
        }
    }
}

impl Data {
    pub fn compile(&self, grid: &Grid) -> Result<Source> {
        match self {
            Data::Number(c) => Ok(Source::Const(*c)),
            Data::Expr(s) => {
                let expr: meval::Expr = s
                    .parse()
                    .map_err(|e| Error::Config(format!("expression {s:?}: {e}")))?;
                let f = expr
                    .bind3("x", "y", "t")
                    .map_err(|e| Error::Config(format!("expression {s:?}: {e}")))?;
                Ok(Source::Expr(Box::new(f)))
            }
            Data::Table { table } => {
                let text = std::fs::read_to_string(table)
                    .map_err(|e| Error::Config(format!("{}: {e}", table.display())))?;
                let values = grid.read_field_csv(&text)?;
                Ok(Source::Field {
                    grid: grid.clone(),
                    values,
                })
            }
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let Data::Table { table } = self {
            if table.is_relative() {
                *table = base.join(&*table);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extent: Vec<f64>,
    pub nodes: Vec<usize>,
    #[serde(default = "one")]
    pub b: Data,
}

fn one() -> Data {
    Data::Number(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKindSpec {
    Constant,
    Gaussian,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub kind: DensityKindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "alpha_one")]
    pub alpha: AlphaSpec,
    #[serde(default)]
    pub gbar: f64,
    pub lambda_support: f64,
    /// `|v|` cutoff for the constant kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_support: Option<f64>,
    /// `r,v,rho` table for the tabulated kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

fn alpha_one() -> AlphaSpec {
    AlphaSpec::Value(1.0)
}

impl DensitySpec {
    pub fn build(&self) -> Result<DensityModel> {
        let alpha = match &self.alpha {
            AlphaSpec::Value(a) => AlphaProfile::Constant(*a),
            AlphaSpec::Table(p) => AlphaProfile::from_csv(&read(p)?)?,
        };
        let kind = match self.kind {
            DensityKindSpec::Constant => DensityKind::ConstantInV {
                v_support: self.v_support.unwrap_or(f64::INFINITY),
            },
            DensityKindSpec::Gaussian => DensityKind::GaussianDecay {
                beta: self
                    .beta
                    .ok_or_else(|| Error::Config("density.beta is required for kind = \"gaussian\"".into()))?,
            },
            DensityKindSpec::Tabulated => {
                let p = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::Config("density.table is required for kind = \"tabulated\"".into()))?;
                DensityKind::Tabulated(DensityTable::from_csv(&read(p)?)?)
            }
        };
        let d = DensityModel {
            kind,
            alpha,
            gbar: self.gbar,
            support_r: self.lambda_support,
        };
        d.validate()?;
        Ok(d)
    }

    /// Makes relative table paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        if let AlphaSpec::Table(p) = &mut self.alpha {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = &mut self.table {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MemorySpec {
    /// Saturated curve `λ(r) = sign(u0)·max(|u0| − r, 0)`.
    #[default]
    Virgin,
    /// Straight part of length `r0(x)` with slope `−sign(T(x))`.
    Turning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub u0: Data,
    #[serde(default)]
    pub memory: MemorySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<Data>,
    #[serde(rename = "L")]
    pub l: f64,
    /// Support `Λ` of the initial curves; defaults to `density.lambda_support`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<f64>,
    #[serde(default = "yes")]
    pub backward_step: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default)]
    pub h: Data,
    #[serde(default)]
    pub ustar: Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// `|T| ≤ t_zero_tol` counts as `T = 0`.
    pub t_zero_tol: f64,
    pub bisection_tol: f64,
    /// Margin in the supersolution bound.
    pub epsilon: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            newton_tol: 1e-11,
            newton_max_iter: 60,
            t_zero_tol: 1e-9,
            bisection_tol: 1e-10,
            epsilon: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MonitorSpec {
    /// Exponents for the increment sums; defaults to `[1, 1 + 1/N]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Probe coordinates; each maps to the nearest node.
    pub probes: Vec<Vec<f64>>,
    /// Snapshot every `stride` steps (0 disables snapshots).
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            probes: Vec::new(),
            stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub density: DensitySpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub sources: SourceSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub monitors: MonitorSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative table paths are taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(base)?;
        cfg.resolve_paths(&base);
        cfg.normalize()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.grid.b.resolve(base);
        self.density.resolve(base);
        self.initial.u0.resolve(base);
        if let Some(r0) = &mut self.initial.r0 {
            r0.resolve(base);
        }
        self.sources.h.resolve(base);
        self.sources.ustar.resolve(base);
    }

    /// Checks consistency and fills in `n`, dropping `tau`.
    pub fn normalize(&mut self) -> Result<()> {
        let t = self.time.t_end;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!("time.T must be positive, got {t}")));
        }
        let n = match (self.time.n, self.time.tau) {
            (Some(n), None) => n,
            (None, Some(tau)) => {
                let n = (t / tau).round();
                if !(tau > 0.0) || (n * tau - t).abs() > 1e-9 * t {
                    return Err(Error::Config(format!("time.T = {t} is not a multiple of tau = {tau}")));
                }
                n as usize
            }
            (Some(n), Some(tau)) => {
                if (n as f64 * tau - t).abs() > 1e-9 * t {
                    return Err(Error::Config(format!("n·tau = {} differs from T = {t}", n as f64 * tau)));
                }
                n
            }
            (None, None) => return Err(Error::Config("time needs n or tau".into())),
        };
        if n == 0 {
            return Err(Error::Config("time.n must be at least 1".into()));
        }
        self.time.n = Some(n);
        self.time.tau = None;
        if self.grid.extent.len() != self.grid.dim || self.grid.nodes.len() != self.grid.dim {
            return Err(Error::Config("grid.extent and grid.nodes need one entry per dimension".into()));
        }
        if !(self.initial.l > 0.0) {
            return Err(Error::Config("initial.L must be positive".into()));
        }
        if self.initial.memory == MemorySpec::Turning && self.initial.r0.is_none() {
            return Err(Error::Config("initial.r0 is required for memory = \"turning\"".into()));
        }
        if let Some(q) = &self.monitors.q {
            if q.iter().any(|q| !(*q >= 1.0)) {
                return Err(Error::Config("monitor exponents must be >= 1".into()));
            }
        }
        for p in &self.output.probes {
            if p.len() != self.grid.dim {
                return Err(Error::Config("each probe needs one coordinate per dimension".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.time.n.unwrap_or(1)
    }

    pub fn tau(&self) -> f64 {
        self.time.t_end / self.steps() as f64
    }

    pub fn q_list(&self) -> Vec<f64> {
        self.monitors
            .q
            .clone()
            .unwrap_or_else(|| vec![1.0, 1.0 + 1.0 / self.grid.dim as f64])
    }

    pub fn support(&self) -> f64 {
        self.initial.support.unwrap_or(self.density.lambda_support)
    }

    /// The normalized config as TOML; parses back to an equal value.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let g = &self.grid;
        let mut ext = [1.0; 2];
        let mut nodes = [1; 2];
        for k in 0..g.dim.min(2) {
            ext[k] = g.extent[k];
            nodes[k] = g.nodes[k];
        }
        let plain = Grid::new(g.dim, ext, nodes)?;
        let b = g.b.compile(&plain)?;
        plain.with_b(|x, y| b.eval(x, y, 0.0))
    }
}
