//! Experiment configuration, read from a single TOML file.

use anyhow::{bail, Context, Result};
use greensolve::grid::GridSpec;
use greensolve::kernel::{GreenKernel, Variant};
use greensolve::measure::{Atom, Potential, RadonMeasure, Singularity};
use greensolve::schrodinger::CsolaTolerances;
use greensolve::QuadGrid;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub ladders: LadderConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_count")]
    pub radial_count: usize,
    #[serde(default = "default_count")]
    pub angular_count: usize,
}

fn default_dim() -> usize {
    3
}

fn default_count() -> usize {
    48
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 3, radial_count: 48, angular_count: 48 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub variant: Variant,
    #[serde(default)]
    pub s: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub c0: f64,
    /// Node-value CSV for a bounded background.
    #[serde(default)]
    pub background_file: Option<PathBuf>,
    #[serde(default)]
    pub singularities: Vec<SingularityConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SingularityConfig {
    pub point: [f64; 3],
    pub beta: f64,
    #[serde(default = "one")]
    pub coeff: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Constant density.
    #[serde(default)]
    pub density: Option<f64>,
    /// Node-value CSV density.
    #[serde(default)]
    pub density_file: Option<PathBuf>,
    #[serde(default)]
    pub atoms: Vec<Atom>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default)]
    pub cutoffs: Option<Vec<f64>>,
    #[serde(default)]
    pub rho_ladder: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_alpha_solution")]
    pub alpha_solution: f64,
    #[serde(default = "default_alpha_consensus")]
    pub alpha_consensus: f64,
}

fn default_solver_tol() -> f64 {
    1e-10
}

fn default_alpha_solution() -> f64 {
    CsolaTolerances::default().alpha_solution
}

fn default_alpha_consensus() -> f64 {
    CsolaTolerances::default().alpha_consensus
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            solver_tol: default_solver_tol(),
            alpha_solution: default_alpha_solution(),
            alpha_consensus: default_alpha_consensus(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    #[default]
    Auto,
    Direct,
    Iterative,
    L1,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub method: SolveMethod,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    /// Probe centre; defaults to the origin.
    #[serde(default)]
    pub point: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_report")]
    pub report_path: PathBuf,
    #[serde(default = "default_tables")]
    pub tables_path: PathBuf,
}

fn default_report() -> PathBuf {
    PathBuf::from("report.json")
}

fn default_tables() -> PathBuf {
    PathBuf::from("tables")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { report_path: default_report(), tables_path: default_tables() }
    }
}

/// Parsed configuration together with the directory relative paths refer to.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.kernel.s {
            if !(s > 0.0 && s <= 1.0) {
                bail!("kernel.s: {s} is not in (0, 1]");
            }
        }
        if self.kernel.variant == Variant::Rfl && self.kernel.s.is_none() {
            bail!("kernel.s: required for variant \"rfl\"");
        }
        if self.measure.density.is_some() && self.measure.density_file.is_some() {
            bail!("measure: give either density or density_file, not both");
        }
        for (i, s) in self.potential.singularities.iter().enumerate() {
            if !(s.beta > 0.0) {
                bail!("potential.singularities[{i}].beta: {} must be positive", s.beta);
            }
            if !(s.coeff > 0.0) {
                bail!("potential.singularities[{i}].coeff: {} must be positive", s.coeff);
            }
        }
        let t = &self.tolerances;
        for (name, v) in [("solver_tol", t.solver_tol), ("alpha_solution", t.alpha_solution), ("alpha_consensus", t.alpha_consensus)] {
            if !(v > 0.0) {
                bail!("tolerances.{name}: {v} must be positive");
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { dim: self.grid.dim, radial_count: self.grid.radial_count, angular_count: self.grid.angular_count }
    }

    pub fn kernel(&self) -> Result<GreenKernel> {
        let s = match self.kernel.variant {
            Variant::Classical => self.kernel.s.unwrap_or(1.0),
            Variant::Rfl => self.kernel.s.unwrap_or(f64::NAN),
        };
        GreenKernel::new(self.kernel.variant, self.grid.dim, s).context("kernel")
    }

    pub fn csola_tolerances(&self) -> CsolaTolerances {
        CsolaTolerances {
            alpha_solution: self.tolerances.alpha_solution,
            alpha_consensus: self.tolerances.alpha_consensus,
        }
    }

    pub fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.seed).unwrap_or(0)
    }
}

/// Read a node-value CSV: a `# grid <hash>` line, a `node,value` header and one row per node.
pub fn read_node_values(path: &Path, g: &QuadGrid) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().next().unwrap_or_default();
    let hash = first.strip_prefix("# grid ").map(str::trim);
    if hash != Some(g.hash_hex().as_str()) {
        bail!("{}: first line must be \"# grid {}\" (found {first:?})", path.display(), g.hash_hex());
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut values = vec![f64::NAN; g.len()];
    for (line, rec) in rdr.deserialize::<(usize, f64)>().enumerate() {
        let (i, v) = rec.with_context(|| format!("{}: row {}", path.display(), line + 1))?;
        if i >= g.len() {
            bail!("{}: node {i} out of range (grid has {} nodes)", path.display(), g.len());
        }
        values[i] = v;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        bail!("{}: node {i} missing", path.display());
    }
    Ok(values)
}

impl Loaded {
    pub fn potential(&self, g: &QuadGrid) -> Result<Potential> {
        let p = &self.config.potential;
        let background = match &p.background_file {
            Some(f) => read_node_values(&self.resolve(f), g)?,
            None => vec![0.0; g.len()],
        };
        let sing = p.singularities.iter().map(|s| Singularity { point: s.point, beta: s.beta, coeff: s.coeff }).collect();
        Potential::new(background, p.c0, sing).context("potential")
    }

    pub fn measure(&self, g: &QuadGrid) -> Result<RadonMeasure> {
        let m = &self.config.measure;
        let density = match (&m.density_file, m.density) {
            (Some(f), _) => read_node_values(&self.resolve(f), g)?,
            (None, Some(c)) => vec![c; g.len()],
            (None, None) => vec![0.0; g.len()],
        };
        RadonMeasure::new(density, m.atoms.clone()).context("measure")
    }
}
