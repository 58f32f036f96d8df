//! C ABI over the phasewave library.
//!
//! Objects cross the boundary as opaque handles created by `pw_*_new` and
//! released with the matching `pw_*_free`. Every fallible call returns a
//! [`PwStatus`]; on failure the message is kept per thread and read with
//! [`pw_last_error_message`]. Panics never unwind into the caller.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use num_complex::Complex64;
use phasewave::ansatz::{fit_train, AnsatzForm, CoupledAnsatz, FrequencyGrid, SampleSet};
use phasewave::experiment::{run, ExperimentConfig, RunOptions, RunStatus};
use phasewave::integral::{GreenKernel, KernelKind};
use phasewave::nn::TrainConfig;
use phasewave::pde::{solve, CollocationSet, HelmholtzProblem, ScalarFn};
use phasewave::reference::{fd_solve, FdOptions, Grid1D};
use phasewave::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Diverged = 3,
    OracleFailed = 4,
    Numeric = 5,
    Resonance = 6,
    Io = 7,
    Panic = 8,
    Other = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwForm {
    /// `sum_m e^{i w_m . x} (P_m + i Q_m)`.
    Complex = 0,
    /// `sum_m P_m cos(w_m . x) + Q_m sin(w_m . x)`.
    Real = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwKernel {
    Exterior = 0,
    InteriorDirichlet = 1,
}

/// Optimizer settings, mirrored from the library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub beta_reg: f64,
    pub init_scale: f64,
    pub lr_decay: f64,
}

impl From<PwTrainConfig> for TrainConfig {
    fn from(c: PwTrainConfig) -> Self {
        TrainConfig {
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            seed: c.seed,
            beta_reg: c.beta_reg,
            init_scale: c.init_scale,
            lr_decay: c.lr_decay,
        }
    }
}

/// Opaque coupled ansatz.
pub struct PwAnsatz(CoupledAnsatz);

/// Opaque boundary-value problem.
pub struct PwProblem(HelmholtzProblem);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PwStatus {
    match e {
        Error::Config(_) | Error::Dimension { .. } | Error::Data(_) | Error::Degenerate(_) => PwStatus::InvalidConfig,
        Error::Training { .. } => PwStatus::Diverged,
        Error::Numeric(_) | Error::Resolution(_) => PwStatus::Numeric,
        Error::Resonance(_) | Error::Kernel(_) => PwStatus::Resonance,
        Error::Io(_) | Error::Cache(_) => PwStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (PwStatus, String)>) -> PwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            PwStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, (PwStatus, String)>;
}

impl<T> OrStatus<T> for phasewave::Result<T> {
    fn or_status(self) -> Result<T, (PwStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (PwStatus, String) {
    (PwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice_in<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (PwStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn slice_out<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], (PwStatus, String)> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (PwStatus::InvalidConfig, format!("{what} is not UTF-8: {e}")))
}

/// Copies up to `cap` history entries and stores the full length.
unsafe fn write_history(h: &[f64], out: *mut f64, cap: usize, len: *mut usize) {
    if !out.is_null() {
        let n = h.len().min(cap);
        slice::from_raw_parts_mut(out, n).copy_from_slice(&h[..n]);
    }
    if !len.is_null() {
        *len = h.len();
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pw_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn pw_train_config_default() -> PwTrainConfig {
    let d = TrainConfig::default();
    PwTrainConfig {
        epochs: d.epochs,
        batch_size: d.batch_size,
        lr: d.lr,
        seed: d.seed,
        beta_reg: d.beta_reg,
        init_scale: d.init_scale,
        lr_decay: d.lr_decay,
    }
}

/// Builds an ansatz. `freqs` holds `n_freqs` vectors of length `dim`;
/// `layers` are the subnet widths, starting with `dim` and ending with 1.
#[no_mangle]
pub unsafe extern "C" fn pw_ansatz_new(
    form: PwForm,
    dim: usize,
    freqs: *const f64,
    n_freqs: usize,
    layers: *const usize,
    n_layers: usize,
    init_scale: f64,
    seed: u64,
    out: *mut *mut PwAnsatz,
) -> PwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let freqs = slice_in(freqs, n_freqs.saturating_mul(dim), "freqs")?;
        let layers = slice_in(layers, n_layers, "layers")?;
        let grid = FrequencyGrid::from_vectors(dim, freqs).or_status()?;
        let form = match form {
            PwForm::Complex => AnsatzForm::Complex,
            PwForm::Real => AnsatzForm::Real,
        };
        let a = CoupledAnsatz::new(form, grid, layers, init_scale, seed).or_status()?;
        *out = Box::into_raw(Box::new(PwAnsatz(a)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pw_ansatz_free(a: *mut PwAnsatz) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Number of trainable parameters, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn pw_ansatz_param_count(a: *const PwAnsatz) -> usize {
    a.as_ref().map_or(0, |a| a.0.param_count())
}

/// Input dimension, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn pw_ansatz_dim(a: *const PwAnsatz) -> usize {
    a.as_ref().map_or(0, |a| a.0.dim())
}

/// Evaluates at `n` points laid out `[point][dim]`.
#[no_mangle]
pub unsafe extern "C" fn pw_ansatz_eval(
    a: *const PwAnsatz,
    xs: *const f64,
    n: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> PwStatus {
    guard(|| {
        let a = &a.as_ref().ok_or_else(|| null("ansatz"))?.0;
        let xs = slice_in(xs, n.saturating_mul(a.dim()), "xs")?;
        let re = slice_out(out_re, n, "out_re")?;
        let im = slice_out(out_im, n, "out_im")?;
        for (i, v) in a.eval_many(xs).or_status()?.into_iter().enumerate() {
            re[i] = v.re;
            im[i] = v.im;
        }
        Ok(())
    })
}

/// Least-squares fit to `n` samples (`xs` laid out `[point][dim]`, complex
/// labels split into `ys_re`/`ys_im`). Writes up to `history_cap` per-epoch
/// losses to `history` and the epoch count to `history_len`; both may be NULL.
#[no_mangle]
pub unsafe extern "C" fn pw_ansatz_fit(
    a: *mut PwAnsatz,
    xs: *const f64,
    ys_re: *const f64,
    ys_im: *const f64,
    n: usize,
    cfg: *const PwTrainConfig,
    history: *mut f64,
    history_cap: usize,
    history_len: *mut usize,
) -> PwStatus {
    guard(|| {
        let a = &mut a.as_mut().ok_or_else(|| null("ansatz"))?.0;
        let cfg: TrainConfig = (*cfg.as_ref().ok_or_else(|| null("cfg"))?).into();
        let dim = a.dim();
        let xs = slice_in(xs, n.saturating_mul(dim), "xs")?;
        let re = slice_in(ys_re, n, "ys_re")?;
        let ys: Vec<Complex64> = if ys_im.is_null() {
            re.iter().map(|&r| r.into()).collect()
        } else {
            let im = slice_in(ys_im, n, "ys_im")?;
            re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
        };
        let data = SampleSet::new(dim, xs.to_vec(), ys).or_status()?;
        match fit_train(a, &data, &cfg) {
            Ok(h) => {
                write_history(&h, history, history_cap, history_len);
                Ok(())
            }
            Err(Error::Training {
                history: h,
                reason,
                epoch,
            }) => {
                write_history(&h, history, history_cap, history_len);
                Err((
                    PwStatus::Diverged,
                    format!("training diverged at epoch {epoch}: {reason}"),
                ))
            }
            Err(e) => Err((status_of(&e), e.to_string())),
        }
    })
}

unsafe fn new_problem(out: *mut *mut PwProblem, p: HelmholtzProblem) -> PwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        p.validate().or_status()?;
        *out = Box::into_raw(Box::new(PwProblem(p)));
        Ok(())
    })
}

/// Homogeneous Dirichlet problem on `[-1, 1]` with source
/// `(lambda^2 - mu^2) sin(mu x)` and medium `c sin(m x^2)`.
#[no_mangle]
pub unsafe extern "C" fn pw_problem_dirichlet(
    lambda: f64,
    mu: f64,
    c: f64,
    m: f64,
    rho: f64,
    out: *mut *mut PwProblem,
) -> PwStatus {
    let omega = if c == 0.0 {
        ScalarFn::Zero
    } else {
        ScalarFn::SinQuadratic { m }
    };
    new_problem(out, HelmholtzProblem::dirichlet_manufactured(lambda, mu, c, omega, rho))
}

/// `u'' - lambda^2 u = -(lambda^2 + mu^2) sin(mu x)`, `u(+-1) = 0`.
#[no_mangle]
pub unsafe extern "C" fn pw_problem_elliptic(lambda: f64, mu: f64, rho: f64, out: *mut *mut PwProblem) -> PwStatus {
    new_problem(out, HelmholtzProblem::elliptic(lambda, mu, rho))
}

/// Compact scatterer with outgoing conditions at `+-a`.
#[no_mangle]
pub unsafe extern "C" fn pw_problem_exterior(
    lambda: f64,
    mu: f64,
    c: f64,
    a: f64,
    rho: f64,
    out: *mut *mut PwProblem,
) -> PwStatus {
    new_problem(out, HelmholtzProblem::exterior(lambda, mu, c, a, rho))
}

#[no_mangle]
pub unsafe extern "C" fn pw_problem_free(p: *mut PwProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Trains `a` on the residual at `n_colloc` even points of the domain.
#[no_mangle]
pub unsafe extern "C" fn pw_solve_ode(
    p: *const PwProblem,
    a: *mut PwAnsatz,
    n_colloc: usize,
    cfg: *const PwTrainConfig,
    history: *mut f64,
    history_cap: usize,
    history_len: *mut usize,
) -> PwStatus {
    guard(|| {
        let p = &p.as_ref().ok_or_else(|| null("problem"))?.0;
        let a = &mut a.as_mut().ok_or_else(|| null("ansatz"))?.0;
        let cfg: TrainConfig = (*cfg.as_ref().ok_or_else(|| null("cfg"))?).into();
        let (lo, hi) = p.domain();
        let coll = CollocationSet::evenly_spaced(lo, hi, n_colloc).or_status()?;
        match solve(p, a, &coll, &cfg) {
            Ok(h) => {
                write_history(&h, history, history_cap, history_len);
                Ok(())
            }
            Err(Error::Training {
                history: h,
                reason,
                epoch,
            }) => {
                write_history(&h, history, history_cap, history_len);
                Err((
                    PwStatus::Diverged,
                    format!("training diverged at epoch {epoch}: {reason}"),
                ))
            }
            Err(e) => Err((status_of(&e), e.to_string())),
        }
    })
}

/// Finite-difference solution on `n_intervals` equal intervals of the
/// problem's domain; writes `n_intervals + 1` nodal values.
#[no_mangle]
pub unsafe extern "C" fn pw_fd_solve(
    p: *const PwProblem,
    n_intervals: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> PwStatus {
    guard(|| {
        let p = &p.as_ref().ok_or_else(|| null("problem"))?.0;
        let (lo, hi) = p.domain();
        let grid = Grid1D::new(lo, hi, n_intervals).or_status()?;
        let sol = fd_solve(p, &grid, FdOptions::default()).or_status()?;
        let re = slice_out(out_re, sol.values.len(), "out_re")?;
        let im = slice_out(out_im, sol.values.len(), "out_im")?;
        for (i, v) in sol.values.iter().enumerate() {
            re[i] = v.re;
            im[i] = v.im;
        }
        Ok(())
    })
}

/// Green's function `G(x, x')` of the chosen kernel.
#[no_mangle]
pub unsafe extern "C" fn pw_green_eval(
    kind: PwKernel,
    lambda: f64,
    x: f64,
    xp: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> PwStatus {
    guard(|| {
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        let kind = match kind {
            PwKernel::Exterior => KernelKind::Exterior,
            PwKernel::InteriorDirichlet => KernelKind::InteriorDirichlet,
        };
        let k = GreenKernel::new(kind, lambda).or_status()?;
        let v = phasewave::integral::green_eval(&k, x, xp).or_status()?;
        *out_re = v.re;
        *out_im = v.im;
        Ok(())
    })
}

/// Runs an experiment described by TOML text and writes its artifacts to
/// `out_dir` (NULL: the config's own directory). Returns `Diverged` or
/// `OracleFailed` when the run finished in that state.
#[no_mangle]
pub unsafe extern "C" fn pw_run_experiment(config_toml: *const c_char, out_dir: *const c_char) -> PwStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(cstr(config_toml, "config_toml")?).or_status()?;
        let out_dir = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(cstr(out_dir, "out_dir")?))
        };
        let opts = RunOptions {
            out_dir,
            quiet: true,
            ..RunOptions::default()
        };
        let report = run(&cfg, &opts).or_status()?;
        match report.record.status {
            RunStatus::Ok => Ok(()),
            RunStatus::Diverged => Err((PwStatus::Diverged, report.record.notes.join("; "))),
            RunStatus::CheckFailed => Err((PwStatus::OracleFailed, "a configured check failed".into())),
        }
    })
}
