//! Run configuration (TOML) and its translation into library objects.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nalgebra::DMatrix;
use serde::Deserialize;

use sls_core::controller::ControllerKind;
use sls_core::plant::{build_chain, hop_distances};
use sls_core::synth::{ColumnMethod, SolverOptions};
use sls_core::{Mode, PlantModel, SlcSet, SupportMask};

use crate::io::{read_matrix, read_pattern_blocks};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSpec,
    #[serde(default)]
    pub slc: SlcSpec,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub simulate: SimSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    /// Scalar subsystems on a line.
    Chain {
        n: usize,
        #[serde(default = "one")]
        kappa: f64,
        rho_target: f64,
        /// 1-based node indices; every node when omitted.
        actuator_sites: Option<Vec<usize>>,
        #[serde(default = "one")]
        gamma: f64,
    },
    /// Dense CSV files, paths relative to the config file. Omitted blocks
    /// default to `B1 = I`, `C1 = [I; 0]`, `D12 = [0; I]`, `C2 = I` and zero
    /// for `D11`, `D21`, `D22`.
    Matrices {
        a: PathBuf,
        b2: PathBuf,
        b1: Option<PathBuf>,
        c1: Option<PathBuf>,
        d11: Option<PathBuf>,
        d12: Option<PathBuf>,
        c2: Option<PathBuf>,
        d21: Option<PathBuf>,
        d22: Option<PathBuf>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    StateFeedback,
    OutputFeedback,
}

impl From<ModeSpec> for Mode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::StateFeedback => Mode::StateFeedback,
            ModeSpec::OutputFeedback => Mode::OutputFeedback,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlcSpec {
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: usize,
    /// Locality radius in hops; unconstrained when omitted.
    pub d: Option<usize>,
    #[serde(default)]
    pub t_c: f64,
    /// Explicit support patterns intersected with the `{d, t_c, T}` set.
    pub patterns: Option<PatternFiles>,
}

/// Pattern files in the FIR layout, relative to the config file. Blocks
/// past the last given spectral index are forbidden.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternFiles {
    pub r: PathBuf,
    pub m: PathBuf,
    pub n: Option<PathBuf>,
    pub l: Option<PathBuf>,
}

fn default_horizon() -> usize {
    10
}

impl Default for SlcSpec {
    fn default() -> Self {
        Self {
            mode: ModeSpec::default(),
            horizon: default_horizon(),
            d: None,
            t_c: 0.0,
            patterns: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub d: Vec<usize>,
    #[serde(rename = "T")]
    pub horizon: Vec<usize>,
    #[serde(default = "zero_delay")]
    pub t_c: Vec<f64>,
}

fn zero_delay() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    #[default]
    Auto,
    Dense,
    Staged,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub column_method: MethodSpec,
    #[serde(default = "default_budget")]
    pub dense_budget: usize,
    pub threads: Option<usize>,
    /// Write measured wall times; `false` writes zeros so reruns are
    /// byte-identical.
    #[serde(default = "yes")]
    pub record_timing: bool,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_budget() -> usize {
    SolverOptions::default().dense_budget
}

fn yes() -> bool {
    true
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            column_method: MethodSpec::default(),
            dense_budget: default_budget(),
            threads: None,
            record_timing: true,
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            column_method: match self.column_method {
                MethodSpec::Auto => ColumnMethod::Auto,
                MethodSpec::Dense => ColumnMethod::Dense,
                MethodSpec::Staged => ColumnMethod::Staged,
            },
            dense_budget: self.dense_budget,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    Sf,
    Of,
    OfD22,
    Structure1,
    Structure2,
    Imc,
}

impl From<KindSpec> for ControllerKind {
    fn from(k: KindSpec) -> Self {
        match k {
            KindSpec::Sf => ControllerKind::Sf,
            KindSpec::Of => ControllerKind::Of,
            KindSpec::OfD22 => ControllerKind::OfD22,
            KindSpec::Structure1 => ControllerKind::Structure1,
            KindSpec::Structure2 => ControllerKind::Structure2,
            KindSpec::Imc => ControllerKind::Imc,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationSpec {
    #[default]
    Impulse,
    /// Uniform noise in `[-amplitude, amplitude]` on every channel for the
    /// first `active_steps` steps, drawn from `--seed`.
    Random,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    #[default]
    Dx,
    Dy,
    Du,
    Dbeta,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    /// Defaults to `sf` or `of`/`of_d22` depending on the mode and plant.
    pub kind: Option<KindSpec>,
    /// Defaults to `3T + n`.
    pub steps: Option<usize>,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub coord: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one_step")]
    pub active_steps: usize,
}

fn one_step() -> usize {
    1
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            kind: None,
            steps: None,
            perturbation: PerturbationSpec::default(),
            channel: ChannelSpec::default(),
            coord: 0,
            amplitude: 1.0,
            active_steps: 1,
        }
    }
}

/// A parsed configuration together with the directory relative paths are
/// resolved against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    ensure!(config.solver.tol > 0.0, "solver.tol must be > 0");
    if let Some(s) = &config.sweep {
        ensure!(
            !s.d.is_empty() && !s.horizon.is_empty() && !s.t_c.is_empty(),
            "sweep grids must be nonempty"
        );
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base })
}

impl Loaded {
    pub fn plant(&self) -> Result<PlantModel> {
        match &self.config.plant {
            PlantSpec::Chain {
                n,
                kappa,
                rho_target,
                actuator_sites,
                gamma,
            } => {
                let sites = actuator_sites.clone().unwrap_or_else(|| (1..=*n).collect());
                Ok(build_chain(*n, *kappa, *rho_target, &sites, *gamma)?)
            }
            PlantSpec::Matrices {
                a,
                b2,
                b1,
                c1,
                d11,
                d12,
                c2,
                d21,
                d22,
            } => {
                let read = |p: &PathBuf| read_matrix(&self.base.join(p));
                let opt = |p: &Option<PathBuf>| p.as_ref().map(read).transpose();
                let a = read(a)?;
                let b2 = read(b2)?;
                let (n, nu) = (a.nrows(), b2.ncols());
                let b1 = opt(b1)?.unwrap_or_else(|| DMatrix::identity(n, n));
                let c1 = opt(c1)?.unwrap_or_else(|| stack(&DMatrix::identity(n, n), &DMatrix::zeros(nu, n)));
                let d12 = opt(d12)?.unwrap_or_else(|| stack(&DMatrix::zeros(n, nu), &DMatrix::identity(nu, nu)));
                let c2 = opt(c2)?.unwrap_or_else(|| DMatrix::identity(n, n));
                let (nw, nz, ny) = (b1.ncols(), c1.nrows(), c2.nrows());
                let d11 = opt(d11)?.unwrap_or_else(|| DMatrix::zeros(nz, nw));
                let d21 = opt(d21)?.unwrap_or_else(|| DMatrix::zeros(ny, nw));
                let d22 = opt(d22)?.unwrap_or_else(|| DMatrix::zeros(ny, nu));
                Ok(PlantModel::new(a, b1, b2, c1, d11, d12, c2, d21, d22)?)
            }
        }
    }

    pub fn mode(&self) -> Mode {
        self.config.slc.mode.into()
    }

    pub fn slc(&self, plant: &PlantModel, d: Option<usize>, t_c: f64, horizon: usize) -> Result<SlcSet> {
        if horizon == 0 {
            bail!("FIR horizon T must be at least 1");
        }
        let g = hop_distances(plant);
        let base = SlcSet::spatiotemporal(plant, &g, d, t_c, self.mode(), horizon)?;
        let Some(files) = &self.config.slc.patterns else {
            return Ok(base);
        };
        let mask = |p: &PathBuf| -> Result<SupportMask> {
            let blocks = read_pattern_blocks(&self.base.join(p))?;
            Ok(SupportMask::from_patterns(&blocks)?.with_horizon(horizon))
        };
        let opt = |p: &Option<PathBuf>, fallback: &Option<SupportMask>| -> Result<Option<SupportMask>> {
            match p {
                Some(p) => Ok(Some(mask(p)?)),
                None => Ok(fallback.clone()),
            }
        };
        let explicit = SlcSet::subspace(
            mask(&files.r)?,
            mask(&files.m)?,
            opt(&files.n, &base.n)?,
            opt(&files.l, &base.l)?,
            "patterns",
        )?;
        Ok(base.intersect(&explicit)?)
    }
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_chain_config() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [plant]
            kind = "chain"
            n = 4
            rho_target = 1.1

            [slc]
            T = 6
            d = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.slc.horizon, 6);
        assert_eq!(cfg.slc.d, Some(2));
        assert!(cfg.solver.record_timing);
        let loaded = Loaded {
            config: cfg,
            base: PathBuf::new(),
        };
        assert_eq!(loaded.plant().unwrap().n_inputs(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: std::result::Result<RunConfig, _> = toml::from_str(
            r#"
            [plant]
            kind = "chain"
            n = 4
            rho_target = 1.1
            colour = "blue"
            "#,
        );
        assert!(r.is_err());
    }
}
