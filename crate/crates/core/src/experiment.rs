//! Experiment configs, embedded presets and the runner behind the CLI.
//!
//! A run writes `result.json` plus plain CSV files into its output directory.
//! Every error metric in the record is computed from the rows written to
//! `solution.csv` (or `sweep.csv` / the history files, as its `oracle` says).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{
    fit_plain, train_with_observer, AnsatzForm, CoupledAnsatz, FitObjective, FrequencyGrid, SampleSet,
};
use crate::integral::{
    assemble_system, assemble_system_cached, cache_dir_from_env, solve_integral_with_observer, GreenKernel, MeshBasis,
    QuadratureRule,
};
use crate::nn::{Mlp, TrainConfig};
use crate::parallel::{
    band_seed, default_truncation, extract_band, train_band, with_threads, BandQuadrature, BandSpec, BandTask,
};
use crate::pde::{solve_with_observer, CollocationSet, HelmholtzProblem, ScalarFn};
use crate::reference::{
    band_mass, cross_term_ratio, dft_spectrum, eta_sweep, exact_elliptic, fd_solve, max_abs_error, rel_l2_error,
    sweep_base, FdOptions, FdSolution, Grid1D, Window,
};
use crate::targets::Target;
use crate::{Error, Result};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest finite-difference reference grid, in intervals.
pub const MAX_FD_INTERVALS: usize = 1 << 22;

/// Phase-error budget `k^3 h^2 L / 24` used to size the reference grid.
pub const FD_PHASE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FitCoupled,
    FitParallel,
    SolveOde,
    SolveIntegral,
    Spectrum,
    AppendixDiagnostic,
    ComparePlainDnn,
}

/// Frequency grid of the coupled ansatz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    Select { freqs: Vec<f64> },
    Sweep { kmin: f64, kmax: f64, step: f64 },
    Product { xs: Vec<f64>, ys: Vec<f64> },
    ProductSigned { xs: Vec<f64>, ys: Vec<f64> },
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        match self {
            GridSpec::Select { freqs } => FrequencyGrid::select(freqs),
            GridSpec::Sweep { kmin, kmax, step } => FrequencyGrid::sweep(*kmin, *kmax, *step),
            GridSpec::Product { xs, ys } => FrequencyGrid::product(xs, ys),
            GridSpec::ProductSigned { xs, ys } => FrequencyGrid::product_signed(xs, ys),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub form: AnsatzForm,
    pub grid: GridSpec,
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// `samples` uniform random points in the domain box.
    #[default]
    Random,
    /// `samples` evenly spaced points (1-D only).
    Even,
    /// `samples` points per axis on a tensor grid.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    #[serde(flatten)]
    pub function: Target,
    pub samples: usize,
    #[serde(default)]
    pub sampling: Sampling,
    /// Evenly spaced test points (per axis in 2-D).
    pub test_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// Homogeneous Dirichlet on `[-1, 1]`, source `(lambda^2 - mu^2) sin(mu x)`,
    /// medium `c sin(m x^2)`.
    Dirichlet,
    /// `u'' - lambda^2 u = -(lambda^2 + mu^2) sin(mu x)`.
    Elliptic,
    /// Compact scatterer on `[-a, a]` with outgoing conditions.
    Exterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub lambda: f64,
    pub mu: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub m: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    /// Boundary penalty; `25 N` when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Evenly spaced collocation points of the differential form.
    #[serde(default = "default_collocation")]
    pub collocation: usize,
}

fn default_collocation() -> usize {
    2000
}

impl ProblemSpec {
    pub fn build(&self) -> Result<HelmholtzProblem> {
        let rho = self
            .rho
            .unwrap_or_else(|| HelmholtzProblem::default_rho(self.collocation));
        let p = match self.kind {
            ProblemKind::Dirichlet => {
                let omega = if self.c == 0.0 {
                    ScalarFn::Zero
                } else {
                    let m = self
                        .m
                        .ok_or_else(|| Error::Config("problem.m is required when c != 0".into()))?;
                    ScalarFn::SinQuadratic { m }
                };
                HelmholtzProblem::dirichlet_manufactured(self.lambda, self.mu, self.c, omega, rho)
            }
            ProblemKind::Elliptic => HelmholtzProblem::elliptic(self.lambda, self.mu, rho),
            ProblemKind::Exterior => {
                HelmholtzProblem::exterior(self.lambda, self.mu, self.c, self.a.unwrap_or(2.0), rho)
            }
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralSpec {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_integral_collocation")]
    pub collocation: usize,
    /// Collocate at the mesh nodes instead of `collocation` even points.
    #[serde(default)]
    pub collocation_at_nodes: bool,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
}

fn default_nodes() -> usize {
    512
}

fn default_integral_collocation() -> usize {
    1024
}

fn default_quad_order() -> usize {
    16
}

impl Default for IntegralSpec {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            collocation: default_integral_collocation(),
            collocation_at_nodes: false,
            quad_order: default_quad_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSpec {
    /// Signed frequency intervals `[lo, hi]`, one band each.
    pub intervals: Vec<[f64; 2]>,
    /// Kernel support radius; ten sinc lobes of each band when absent.
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub quadrature: BandQuadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    /// `|k|` bands whose error mass is reported.
    pub bands: Vec<[f64; 2]>,
    #[serde(default)]
    pub window: Window,
    /// Intervals of the uniform evaluation grid.
    #[serde(default = "default_spectrum_points")]
    pub points: usize,
}

fn default_spectrum_points() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub etas: Vec<f64>,
    /// Seeds `seed, seed + 1, ...`.
    pub seeds: usize,
    pub pairs: Vec<[usize; 2]>,
    /// Bound of the uniform input weights before scaling.
    pub input_bound: f64,
    pub window: [f64; 2],
    pub window_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub plain_layers: Vec<usize>,
    #[serde(default = "one")]
    pub init_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Bound on a named metric; a violated bound is an oracle failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub metric: String,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub family: String,
    #[serde(default)]
    pub summary: String,
    /// Expected metric, free text for the preset table.
    #[serde(default)]
    pub expected: String,
    #[serde(default)]
    pub desk_runtime: String,
    pub seed: u64,
    /// Evenly spaced evaluation points on `[-1, 1]` for the solvers.
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub ansatz: Option<AnsatzSpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub integral: Option<IntegralSpec>,
    #[serde(default)]
    pub bands: Option<BandsSpec>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub compare: Option<CompareSpec>,
    #[serde(default)]
    pub check: Vec<CheckSpec>,
}

fn default_eval_points() -> usize {
    2001
}

fn need<'a, T>(v: &'a Option<T>, section: &str, kind: ExperimentKind) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("[{section}] is required for kind {kind:?}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks that the sections required by `kind` are present and consistent.
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let k = self.kind;
        if self.name.is_empty() {
            return Err(Error::Config("name must not be empty".into()));
        }
        if self.eval_points < 2 {
            return Err(Error::Config("eval_points must be >= 2".into()));
        }
        let ansatz = need(&self.ansatz, "ansatz", k)?;
        ansatz.grid.build()?;
        if k != AppendixDiagnostic {
            need(&self.train, "train", k)?.validate()?;
        }
        match k {
            FitCoupled | FitParallel | ComparePlainDnn => {
                let t = need(&self.target, "target", k)?;
                if t.samples == 0 || t.test_points < 2 {
                    return Err(Error::Config(
                        "target.samples and target.test_points must be positive".into(),
                    ));
                }
                let dim = t.function.dim();
                if ansatz.layers.first() != Some(&dim) && k != FitParallel {
                    return Err(Error::Config(format!(
                        "ansatz layers must start with input width {dim}"
                    )));
                }
                if t.sampling == Sampling::Even && dim != 1 {
                    return Err(Error::Config("even sampling is 1-D only; use grid".into()));
                }
                if k == FitParallel {
                    if dim != 1 {
                        return Err(Error::Config("fit-parallel is 1-D only".into()));
                    }
                    if need(&self.bands, "bands", k)?
                        .intervals
                        .iter()
                        .any(|[lo, hi]| !(lo < hi))
                    {
                        return Err(Error::Config("band intervals need lo < hi".into()));
                    }
                }
                if k == ComparePlainDnn && need(&self.compare, "compare", k)?.plain_layers.first() != Some(&dim) {
                    return Err(Error::Config(
                        "compare.plain_layers must start with the input width".into(),
                    ));
                }
            }
            SolveOde | Spectrum => {
                need(&self.problem, "problem", k)?.build()?;
                if k == Spectrum {
                    need(&self.spectrum, "spectrum", k)?;
                }
            }
            SolveIntegral => {
                let p = need(&self.problem, "problem", k)?;
                p.build()?;
                if p.kind == ProblemKind::Elliptic {
                    return Err(Error::Config("the integral form needs a Helmholtz problem".into()));
                }
            }
            AppendixDiagnostic => {
                let s = need(&self.sweep, "sweep", k)?;
                if s.seeds == 0 || s.etas.len() < 2 || s.pairs.is_empty() {
                    return Err(Error::Config("sweep needs seeds, >= 2 etas and pairs".into()));
                }
                if ansatz.form != AnsatzForm::Complex {
                    return Err(Error::Config("the eta sweep needs the complex form".into()));
                }
            }
        }
        if let Some(s) = &self.spectrum {
            if s.points < 4 || s.bands.iter().any(|[lo, hi]| !(lo < hi)) {
                return Err(Error::Config(
                    "spectrum needs >= 4 points and bands with lo < hi".into(),
                ));
            }
        }
        for c in &self.check {
            if c.max.is_none() && c.min.is_none() {
                return Err(Error::Config(format!("check on {} has no bound", c.metric)));
            }
        }
        Ok(())
    }

    /// Hex sha256 of the serialized config (output directory excluded).
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("appendix-eta-sweep", include_str!("../presets/appendix-eta-sweep.toml")),
    ("composite-2d-full", include_str!("../presets/composite-2d-full.toml")),
    ("elliptic-250", include_str!("../presets/elliptic-250.toml")),
    (
        "exterior-diff-3000ep",
        include_str!("../presets/exterior-diff-3000ep.toml"),
    ),
    ("exterior-ie-300ep", include_str!("../presets/exterior-ie-300ep.toml")),
    (
        "helmholtz-const-200",
        include_str!("../presets/helmholtz-const-200.toml"),
    ),
    (
        "helmholtz-const-200-full",
        include_str!("../presets/helmholtz-const-200-full.toml"),
    ),
    (
        "helmholtz-diff-100-spectrum",
        include_str!("../presets/helmholtz-diff-100-spectrum.toml"),
    ),
    ("helmholtz-int-100", include_str!("../presets/helmholtz-int-100.toml")),
    ("helmholtz-var-200", include_str!("../presets/helmholtz-var-200.toml")),
    ("plain-vs-coupled", include_str!("../presets/plain-vs-coupled.toml")),
    ("separable-2d", include_str!("../presets/separable-2d.toml")),
    ("square-wave-select", include_str!("../presets/square-wave-select.toml")),
    ("square-wave-sweep", include_str!("../presets/square-wave-sweep.toml")),
    ("target1-coupled", include_str!("../presets/target1-coupled.toml")),
    (
        "target1-coupled-full",
        include_str!("../presets/target1-coupled-full.toml"),
    ),
    ("target1-parallel", include_str!("../presets/target1-parallel.toml")),
    (
        "target1-parallel-full",
        include_str!("../presets/target1-parallel-full.toml"),
    ),
];

/// Names of the embedded presets, alphabetized.
pub fn preset_names() -> Vec<&'static str> {
    let mut v: Vec<_> = PRESETS.iter().map(|p| p.0).collect();
    v.sort_unstable();
    v
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_source(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
    ExperimentConfig::from_toml(text)
}

/// Table of presets: name, family, expected metric, desk runtime.
pub fn list_presets() -> Result<String> {
    let rows: Vec<[String; 4]> = preset_names()
        .into_iter()
        .map(|n| preset(n).map(|c| [n.to_string(), c.family, c.expected, c.desk_runtime]))
        .collect::<Result<_>>()?;
    let head = ["preset", "family", "expected", "desk runtime"].map(String::from);
    let mut width = [0usize; 4];
    for r in rows.iter().chain([&head]) {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for r in [&head].into_iter().chain(&rows) {
        let line: Vec<String> = r.iter().zip(width).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Under-resolved reference grids become errors.
    pub strict: bool,
    /// Suppress progress lines on stderr.
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// What the value is measured against.
    pub oracle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMass {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub kind: String,
    /// Intervals of the finite-difference grid.
    #[serde(default)]
    pub fd_intervals: Option<usize>,
    /// Max difference at the evaluation points between the grid and its
    /// half-resolution companion.
    #[serde(default)]
    pub fd_half_grid_max_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub metric: String,
    pub value: Option<f64>,
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Diverged,
    CheckFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    /// Per band `(extraction, training)` seconds of a parallel run.
    #[serde(default)]
    pub bands_s: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub name: String,
    pub kind: ExperimentKind,
    pub status: RunStatus,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub final_loss: Option<f64>,
    pub metrics: Vec<Metric>,
    pub band_masses: Vec<BandMass>,
    pub reference: Option<ReferenceInfo>,
    pub checks: Vec<CheckOutcome>,
    pub notes: Vec<String>,
    /// The only field that differs between identical runs.
    pub wall_time: Timing,
}

impl ResultRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub record: ResultRecord,
    pub out_dir: PathBuf,
}

/// Points, approximation and reference written to a solution file.
#[derive(Debug, Clone, Default)]
struct Solution {
    dim: usize,
    xs: Vec<f64>,
    approx: Vec<Complex64>,
    reference: Vec<Complex64>,
}

#[derive(Default)]
struct Artifacts {
    history: Vec<f64>,
    metrics: Vec<Metric>,
    band_masses: Vec<BandMass>,
    reference: Option<ReferenceInfo>,
    notes: Vec<String>,
    bands_s: Vec<(f64, f64)>,
    /// `(file name, contents)`.
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn metric(&mut self, name: &str, value: f64, oracle: &str) {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            oracle: oracle.into(),
        });
    }

    fn solution(&mut self, file: &str, sol: &Solution, oracle: &str) -> Result<()> {
        self.metric("rel_l2", rel_l2_error(&sol.approx, &sol.reference)?, oracle);
        self.metric("max_abs_err", max_abs_error(&sol.approx, &sol.reference)?, oracle);
        self.files.push((file.into(), solution_csv(sol)));
        Ok(())
    }
}

fn solution_csv(sol: &Solution) -> String {
    let mut s = String::from(if sol.dim == 2 { "x,y," } else { "x," });
    s.push_str("approx_re,approx_im,ref_re,ref_im,abs_err\n");
    for (i, (a, r)) in sol.approx.iter().zip(&sol.reference).enumerate() {
        for d in 0..sol.dim {
            let _ = write!(s, "{},", sol.xs[i * sol.dim + d]);
        }
        let _ = writeln!(s, "{},{},{},{},{}", a.re, a.im, r.re, r.im, (a - r).norm());
    }
    s
}

fn history_csv(h: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in h.iter().enumerate() {
        let _ = writeln!(s, "{e},{l}");
    }
    s
}

/// Runs an experiment and writes its artifacts. Divergence and failed checks
/// are reported through [`ResultRecord::status`]; other failures are errors.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let mut cfg = config.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let (Some(e), Some(t)) = (opts.epochs, cfg.train.as_mut()) {
        t.epochs = e;
    }
    if let Some(t) = cfg.train.as_mut() {
        t.seed = cfg.seed;
    }
    cfg.validate()?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    std::fs::create_dir_all(&out_dir)?;

    let start = Instant::now();
    let mut art = Artifacts::default();
    let outcome = with_threads(opts.threads, || execute(&cfg, opts, &mut art));
    let status = match outcome {
        Ok(()) => RunStatus::Ok,
        Err(Error::Training { epoch, reason, history }) => {
            art.notes.push(format!("training diverged at epoch {epoch}: {reason}"));
            art.history = history;
            RunStatus::Diverged
        }
        Err(e) => return Err(e),
    };

    let checks: Vec<CheckOutcome> = cfg
        .check
        .iter()
        .map(|c| {
            let value = art.metrics.iter().find(|m| m.name == c.metric).map(|m| m.value);
            let passed = value.is_some_and(|v| c.max.is_none_or(|m| v <= m) && c.min.is_none_or(|m| v >= m));
            CheckOutcome {
                metric: c.metric.clone(),
                value,
                max: c.max,
                min: c.min,
                passed,
            }
        })
        .collect();
    let status = if status == RunStatus::Ok && checks.iter().any(|c| !c.passed) {
        RunStatus::CheckFailed
    } else {
        status
    };

    let record = ResultRecord {
        name: cfg.name.clone(),
        kind: cfg.kind,
        status,
        library_version: LIBRARY_VERSION.into(),
        config_hash: cfg.content_hash(),
        final_loss: art.history.last().copied(),
        metrics: art.metrics,
        band_masses: art.band_masses,
        reference: art.reference,
        checks,
        notes: art.notes,
        wall_time: Timing {
            total_s: start.elapsed().as_secs_f64(),
            bands_s: art.bands_s,
        },
        config: cfg,
    };
    if record.kind != ExperimentKind::AppendixDiagnostic {
        std::fs::write(out_dir.join("history.csv"), history_csv(&art.history))?;
    }
    for (name, text) in &art.files {
        std::fs::write(out_dir.join(name), text)?;
    }
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(out_dir.join("result.json"), json + "\n")?;
    Ok(RunReport { record, out_dir })
}

fn execute(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<()> {
    match cfg.kind {
        ExperimentKind::FitCoupled => fit_coupled(cfg, opts, art),
        ExperimentKind::FitParallel => fit_parallel(cfg, opts, art),
        ExperimentKind::SolveOde | ExperimentKind::Spectrum => solve_ode(cfg, opts, art),
        ExperimentKind::SolveIntegral => solve_int(cfg, opts, art),
        ExperimentKind::AppendixDiagnostic => appendix(cfg, art),
        ExperimentKind::ComparePlainDnn => compare_plain(cfg, opts, art),
    }
}

fn progress(name: &str, epochs: usize, quiet: bool) -> impl FnMut(usize, f64) + '_ {
    let t = Instant::now();
    let every = (epochs / 10).max(1);
    move |e, l| {
        if !quiet && (e % every == 0 || e + 1 == epochs) {
            eprintln!("[{name}] epoch {e:>6} loss {l:.6e} ({:.1}s)", t.elapsed().as_secs_f64());
        }
    }
}

fn build_ansatz(cfg: &ExperimentConfig, train: &TrainConfig) -> Result<CoupledAnsatz> {
    let a = cfg.ansatz.as_ref().expect("validated");
    CoupledAnsatz::new(a.form, a.grid.build()?, &a.layers, train.init_scale, cfg.seed)
}

/// Seed of the training samples, distinct from the init and shuffle seed.
fn data_seed(seed: u64) -> u64 {
    seed.wrapping_add(1)
}

fn training_data(t: &TargetSpec, seed: u64) -> Result<SampleSet> {
    let f = t.function;
    let dom = f.domain();
    let label = |x: &[f64]| Complex64::from(f.eval(x));
    match t.sampling {
        Sampling::Random => SampleSet::uniform_random(&dom, t.samples, data_seed(seed), label),
        Sampling::Even => SampleSet::evenly_spaced(dom[0].0, dom[0].1, t.samples, |x| label(&[x])),
        Sampling::Grid => {
            let xs = tensor_grid(&dom, t.samples)?;
            let ys = xs.chunks(dom.len()).map(label).collect();
            SampleSet::new(dom.len(), xs, ys)
        }
    }
}

/// `n` evenly spaced points per axis including the ends, row-major.
fn tensor_grid(dom: &[(f64, f64)], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Config("grid sampling needs >= 2 points per axis".into()));
    }
    let axis = |(a, b): (f64, f64)| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    };
    Ok(match dom {
        [d] => axis(*d),
        [dx, dy] => {
            let (ax, ay) = (axis(*dx), axis(*dy));
            ax.iter().flat_map(|&x| ay.iter().flat_map(move |&y| [x, y])).collect()
        }
        _ => return Err(Error::Config("targets are 1-D or 2-D".into())),
    })
}

/// Test points of a target: `test_points` per axis, or the spectrum grid.
fn target_eval_points(cfg: &ExperimentConfig, t: &TargetSpec) -> Result<Vec<f64>> {
    let dom = t.function.domain();
    match (&cfg.spectrum, dom.as_slice()) {
        (Some(s), [(a, b)]) => Ok(Grid1D::new(*a, *b, s.points)?.points()),
        _ => tensor_grid(&dom, t.test_points),
    }
}

fn target_solution(t: &TargetSpec, xs: Vec<f64>, approx: Vec<Complex64>) -> Solution {
    let dim = t.function.dim();
    let reference = xs.chunks(dim).map(|x| t.function.eval(x).into()).collect();
    Solution {
        dim,
        xs,
        approx,
        reference,
    }
}

const TARGET_ORACLE: &str = "closed-form target at solution.csv points";

fn fit_coupled(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<()> {
    let t = cfg.target.as_ref().expect("validated");
    let train = cfg.train.as_ref().expect("validated");
    let data = training_data(t, cfg.seed)?;
    let mut ansatz = build_ansatz(cfg, train)?;
    art.notes.push(format!("{} parameters", ansatz.param_count()));
    let mut obs = progress(&cfg.name, train.epochs, opts.quiet);
    art.history = train_with_observer(&mut ansatz, &FitObjective::new(&data), train, &mut obs)?;
    let xs = target_eval_points(cfg, t)?;
    let approx = ansatz.eval_many(&xs)?;
    let sol = target_solution(t, xs, approx);
    art.solution("solution.csv", &sol, TARGET_ORACLE)?;
    spectrum_artifacts(cfg, &sol, art)
}

fn fit_parallel(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<()> {
    let t = cfg.target.as_ref().expect("validated");
    let train = cfg.train.as_ref().expect("validated");
    let bands = cfg.bands.as_ref().expect("validated");
    let layers = &cfg.ansatz.as_ref().expect("validated").layers;
    let data = training_data(t, cfg.seed)?;
    let specs: Vec<BandSpec> = bands
        .intervals
        .iter()
        .map(|&[lo, hi]| {
            BandSpec::new(
                0.5 * (lo + hi),
                hi - lo,
                bands.truncation.unwrap_or(default_truncation(hi - lo)),
            )
        })
        .collect::<Result<_>>()?;

    let mut tasks = Vec::with_capacity(specs.len());
    let mut extract_s = Vec::with_capacity(specs.len());
    for (j, spec) in specs.iter().enumerate() {
        let s = Instant::now();
        let band = extract_band(&data, spec, bands.quadrature)?;
        extract_s.push(s.elapsed().as_secs_f64());
        if !band.quality.sparse.is_empty() {
            art.notes.push(format!(
                "band {j}: {} samples have sparse convolution windows (min {})",
                band.quality.sparse.len(),
                band.quality.min_window
            ));
        }
        tasks.push(BandTask::new(band, layers, train.init_scale, band_seed(cfg.seed, j))?);
    }
    if !opts.quiet {
        eprintln!("[{}] extracted {} bands", cfg.name, tasks.len());
    }
    let train_s: Vec<f64> = tasks
        .par_iter_mut()
        .map(|task| {
            let s = Instant::now();
            train_band(task, train)?;
            Ok(s.elapsed().as_secs_f64())
        })
        .collect::<Result<_>>()?;
    art.bands_s = extract_s.into_iter().zip(train_s).collect();

    let epochs = tasks.iter().map(|t| t.history.len()).max().unwrap_or(0);
    art.history = (0..epochs)
        .map(|e| tasks.iter().map(|t| t.history.get(e).copied().unwrap_or(0.0)).sum())
        .collect();
    let mut per_band = String::from("epoch,band,loss\n");
    for (j, task) in tasks.iter().enumerate() {
        for (e, l) in task.history.iter().enumerate() {
            let _ = writeln!(per_band, "{e},{j},{l}");
        }
    }
    art.files.push(("history_bands.csv".into(), per_band));

    let xs = target_eval_points(cfg, t)?;
    let approx = xs
        .iter()
        .map(|&x| tasks.iter().map(|t| t.eval(x)).sum::<Result<Complex64>>())
        .collect::<Result<Vec<_>>>()?;
    let sol = target_solution(t, xs, approx);
    art.solution("solution.csv", &sol, TARGET_ORACLE)?;
    let (lo, hi) = t.function.domain()[0];
    let proj = ideal_band_projection_error(&t.function, lo, hi, &bands.intervals)?;
    art.metric(
        "ideal_band_projection_rel_l2",
        proj,
        "exact FFT projection of the target onto the bands, 65536-point periodic grid",
    );
    spectrum_artifacts(cfg, &sol, art)
}

/// Relative L2 distance between the target and its exact projection onto the
/// union of the signed frequency intervals, on a periodic uniform grid.
pub fn ideal_band_projection_error(target: &Target, lo: f64, hi: f64, intervals: &[[f64; 2]]) -> Result<f64> {
    const N: usize = 1 << 16;
    let h = (hi - lo) / N as f64;
    let f: Vec<Complex64> = (0..N).map(|i| target.eval(&[lo + i as f64 * h]).into()).collect();
    let mut spec = f.clone();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(N).process(&mut spec);
    let dk = 2.0 * PI / (hi - lo);
    for (i, c) in spec.iter_mut().enumerate() {
        let k = if i <= N / 2 { i as f64 } else { i as f64 - N as f64 } * dk;
        if !intervals.iter().any(|&[a, b]| a <= k && k <= b) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(N).process(&mut spec);
    let proj: Vec<Complex64> = spec.iter().map(|c| c / N as f64).collect();
    rel_l2_error(&proj, &f)
}

/// Reference solution of a 1-D problem: exact for the elliptic case,
/// finite differences otherwise.
enum Reference {
    Exact(f64, f64),
    Fd(FdSolution),
}

impl Reference {
    fn at(&self, x: f64) -> Complex64 {
        match self {
            Reference::Exact(lambda, mu) => exact_elliptic(*lambda, *mu, x).into(),
            Reference::Fd(s) => s.interpolate(x),
        }
    }
}

/// Reference grid size: the smallest power of two meeting both the phase
/// error budget and 40 points per wavelength, capped at [`MAX_FD_INTERVALS`].
pub fn fd_intervals(problem: &HelmholtzProblem) -> usize {
    let (lo, hi) = problem.domain();
    let len = hi - lo;
    let k = problem
        .lambda
        .abs()
        .max(problem.mu.abs())
        .max((problem.lambda * problem.lambda + problem.c.abs()).sqrt());
    let by_phase = len * (k.powi(3) * len / (24.0 * FD_PHASE_TOL)).sqrt();
    let by_ppw = 40.0 * k * len / (2.0 * PI);
    let n = by_phase.max(by_ppw).max(1024.0).ceil() as usize;
    n.next_power_of_two().min(MAX_FD_INTERVALS)
}

fn reference_for(
    p: &HelmholtzProblem,
    spec: &ProblemSpec,
    xs: &[f64],
    strict: bool,
    art: &mut Artifacts,
) -> Result<Reference> {
    if spec.kind == ProblemKind::Elliptic {
        art.reference = Some(ReferenceInfo {
            kind: "exact".into(),
            fd_intervals: None,
            fd_half_grid_max_diff: None,
        });
        return Ok(Reference::Exact(p.lambda, p.mu));
    }
    let (lo, hi) = p.domain();
    let n = fd_intervals(p);
    let opts = FdOptions { strict };
    let fine = fd_solve(p, &Grid1D::new(lo, hi, n)?, opts)?;
    let half = fd_solve(p, &Grid1D::new(lo, hi, n / 2)?, opts)?;
    let diff = xs
        .iter()
        .map(|&x| (fine.interpolate(x) - half.interpolate(x)).norm())
        .fold(0.0, f64::max);
    art.notes.extend(fine.warnings.iter().cloned());
    art.reference = Some(ReferenceInfo {
        kind: "finite-difference".into(),
        fd_intervals: Some(n),
        fd_half_grid_max_diff: Some(diff),
    });
    Ok(Reference::Fd(fine))
}

/// Points where a 1-D solver run is scored: the spectrum grid when present,
/// otherwise `eval_points` even points on `[-1, 1]`.
fn solver_eval_points(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    match &cfg.spectrum {
        Some(s) => Ok(Grid1D::new(-1.0, 1.0, s.points)?.points()),
        None => Ok(Grid1D::new(-1.0, 1.0, cfg.eval_points - 1)?.points()),
    }
}

fn finish_solver(
    cfg: &ExperimentConfig,
    p: &HelmholtzProblem,
    ansatz: &CoupledAnsatz,
    opts: &RunOptions,
    art: &mut Artifacts,
) -> Result<()> {
    let spec = cfg.problem.as_ref().expect("validated");
    let xs = solver_eval_points(cfg)?;
    let reference = reference_for(p, spec, &xs, opts.strict, art)?;
    let oracle = match reference {
        Reference::Exact(..) => "exact solution at solution.csv points",
        Reference::Fd(_) => "finite-difference reference at solution.csv points",
    };
    let sol = Solution {
        dim: 1,
        approx: ansatz.eval_many(&xs)?,
        reference: xs.iter().map(|&x| reference.at(x)).collect(),
        xs,
    };
    art.solution("solution.csv", &sol, oracle)?;
    spectrum_artifacts(cfg, &sol, art)
}

fn solve_ode(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<()> {
    let spec = cfg.problem.as_ref().expect("validated");
    let train = cfg.train.as_ref().expect("validated");
    let p = spec.build()?;
    let (lo, hi) = p.domain();
    let coll = CollocationSet::evenly_spaced(lo, hi, spec.collocation)?;
    let mut ansatz = build_ansatz(cfg, train)?;
    art.notes
        .push(format!("{} parameters, rho = {}", ansatz.param_count(), p.rho));
    let mut obs = progress(&cfg.name, train.epochs, opts.quiet);
    art.history = solve_with_observer(&p, &mut ansatz, &coll, train, &mut obs)?;
    finish_solver(cfg, &p, &ansatz, opts, art)
}

fn solve_int(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<()> {
    let spec = cfg.problem.as_ref().expect("validated");
    let train = cfg.train.as_ref().expect("validated");
    let ispec = cfg.integral.clone().unwrap_or_default();
    let p = spec.build()?;
    let kernel = GreenKernel::for_problem(&p)?;
    let mesh = MeshBasis::new(ispec.nodes)?;
    let coll = if ispec.collocation_at_nodes {
        CollocationSet::new(mesh.nodes())?
    } else {
        CollocationSet::evenly_spaced(-1.0, 1.0, ispec.collocation)?
    };
    let quad = QuadratureRule::gauss_legendre(ispec.quad_order)?;
    let t = Instant::now();
    let dir = cache_dir_from_env().unwrap_or_else(|| std::env::temp_dir().join("phasewave-cache"));
    let sys = match std::fs::create_dir_all(&dir) {
        Ok(()) => assemble_system_cached(&kernel, &p, &mesh, &coll, &quad, &dir)?,
        Err(_) => assemble_system(&kernel, &p, &mesh, &coll, &quad)?,
    };
    if !opts.quiet {
        eprintln!(
            "[{}] system {}x{} ready ({:.1}s)",
            cfg.name,
            sys.rows(),
            sys.cols(),
            t.elapsed().as_secs_f64()
        );
    }
    let mut ansatz = build_ansatz(cfg, train)?;
    art.notes.push(format!("{} parameters", ansatz.param_count()));
    let mut obs = progress(&cfg.name, train.epochs, opts.quiet);
    art.history = solve_integral_with_observer(&p, &kernel, &mut ansatz, &sys, train, &mut obs)?;
    finish_solver(cfg, &p, &ansatz, opts, art)
}

/// Error spectrum of a 1-D solution on a uniform grid, when requested.
fn spectrum_artifacts(cfg: &ExperimentConfig, sol: &Solution, art: &mut Artifacts) -> Result<()> {
    let Some(spec) = &cfg.spectrum else {
        return Ok(());
    };
    if sol.dim != 1 || sol.xs.len() < 4 {
        return Err(Error::Config("spectra need a 1-D solution".into()));
    }
    let err: Vec<Complex64> = sol.approx.iter().zip(&sol.reference).map(|(a, r)| a - r).collect();
    let h = sol.xs[1] - sol.xs[0];
    let report = dft_spectrum(&err, h, spec.window)?;
    let oracle = "DFT of approx - ref over solution.csv";
    for &[lo, hi] in &spec.bands {
        let mass = band_mass(&report, lo, hi);
        art.band_masses.push(BandMass { lo, hi, mass });
        art.metric(&format!("band_mass_{lo}_{hi}"), mass, oracle);
    }
    if let [a, b, ..] = &art.band_masses[..] {
        let ratio = a.mass / b.mass;
        art.metric("band_mass_ratio", ratio, oracle);
    }
    let mut s = String::from("freq,mag\n");
    for (k, m) in report.freqs.iter().zip(&report.mags) {
        let _ = writeln!(s, "{k},{m}");
    }
    art.files.push(("spectrum.csv".into(), s));
    Ok(())
}

fn appendix(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let a = cfg.ansatz.as_ref().expect("validated");
    let s = cfg.sweep.as_ref().expect("validated");
    let grid = a.grid.build()?;
    let window = Grid1D::new(s.window[0], s.window[1], s.window_points)?;
    let mut csv = String::from("seed,m,n,eta,ratio\n");
    let mut good = 0usize;
    let mut self_dev = 0.0f64;
    for i in 0..s.seeds {
        let seed = cfg.seed.wrapping_add(i as u64);
        let base = sweep_base(grid.clone(), &a.layers, s.input_bound, seed)?;
        let mut all = true;
        for &[m, n] in &s.pairs {
            let ratios = eta_sweep(&base, m, n, &s.etas, &window)?;
            for (eta, r) in s.etas.iter().zip(&ratios) {
                let _ = writeln!(csv, "{seed},{m},{n},{eta},{r}");
            }
            all &= ratios.windows(2).all(|w| w[1] <= w[0]);
        }
        good += all as usize;
        for m in 0..grid.len() {
            self_dev = self_dev.max((cross_term_ratio(&base, m, m, &window)? - 1.0).abs());
        }
    }
    art.metric(
        "fraction_non_increasing",
        good as f64 / s.seeds as f64,
        "sweep.csv: seeds whose ratios are non-increasing along etas for every pair",
    );
    art.metric(
        "self_ratio_max_dev",
        self_dev,
        "cross_term_ratio(m, m) - 1 over all seeds",
    );
    art.files.push(("sweep.csv".into(), csv));
    Ok(())
}

fn compare_plain(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<()> {
    let t = cfg.target.as_ref().expect("validated");
    let train = cfg.train.as_ref().expect("validated");
    let cmp = cfg.compare.as_ref().expect("validated");
    let data = training_data(t, cfg.seed)?;
    let xs = target_eval_points(cfg, t)?;

    let mut ansatz = build_ansatz(cfg, train)?;
    let mut obs = progress(&cfg.name, train.epochs, opts.quiet);
    art.history = train_with_observer(&mut ansatz, &FitObjective::new(&data), train, &mut obs)?;
    let coupled = target_solution(t, xs.clone(), ansatz.eval_many(&xs)?);
    art.solution("solution.csv", &coupled, TARGET_ORACLE)?;

    let mut plain = Mlp::init(&cmp.plain_layers, cmp.init_scale, cfg.seed)?;
    if !opts.quiet {
        eprintln!("[{}] plain network, {} parameters", cfg.name, plain.param_count());
    }
    let plain_hist = fit_plain(&mut plain, &data, train)?;
    let dim = t.function.dim();
    let approx = xs.chunks(dim).map(|x| plain.forward(x).into()).collect();
    let plain_sol = target_solution(t, xs, approx);
    art.files.push(("solution_plain.csv".into(), solution_csv(&plain_sol)));
    art.files.push(("history_plain.csv".into(), history_csv(&plain_hist)));

    let coupled_loss = art.history.last().copied().unwrap_or(f64::NAN);
    let plain_loss = plain_hist.last().copied().unwrap_or(f64::NAN);
    art.metric("coupled_final_loss", coupled_loss, "history.csv");
    art.metric("plain_final_loss", plain_loss, "history_plain.csv");
    art.metric(
        "loss_ratio",
        plain_loss / coupled_loss,
        "history_plain.csv / history.csv",
    );
    art.metric(
        "plain_rel_l2",
        rel_l2_error(&plain_sol.approx, &plain_sol.reference)?,
        "closed-form target at solution_plain.csv points",
    );
    art.metric("coupled_params", ansatz.param_count() as f64, "architecture");
    art.metric("plain_params", plain.param_count() as f64, "architecture");
    Ok(())
}
