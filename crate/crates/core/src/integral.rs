//! Green's-function integral formulation on `[-1, 1]`.
//!
//! With `u'' + lambda^2 u = f - c w u`, the solution satisfies
//! `u + c K[w u] = f_G` where `K` is convolution with the Green's function.
//! Replacing `u` by its hat interpolant through the mesh nodes gives the
//! residual `A T + c B T - f_G` at the collocation points.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{ComplexTriple, CoupledAnsatz, Objective};
use crate::nn::{DerivOrder, TrainConfig};
use crate::pde::{Boundary, CollocationSet, HelmholtzProblem, OperatorSign};
use crate::{Error, Result};

/// Environment variable naming the assembly cache directory.
pub const CACHE_ENV: &str = "PHASEWAVE_CACHE";

/// Below this `|sin 2 lambda|` the interior kernel is treated as resonant.
pub const RESONANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Outgoing free-space kernel `e^{i lambda |x - x'|} / (2 i lambda)`.
    Exterior,
    /// Kernel vanishing at `x = +-1`.
    InteriorDirichlet,
}

/// Green's function of `u'' + lambda^2 u = delta(x - x')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenKernel {
    kind: KernelKind,
    lambda: f64,
}

impl GreenKernel {
    pub fn exterior(lambda: f64) -> Result<Self> {
        Self::new(KernelKind::Exterior, lambda)
    }

    pub fn interior_dirichlet(lambda: f64) -> Result<Self> {
        Self::new(KernelKind::InteriorDirichlet, lambda)
    }

    pub fn new(kind: KernelKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Kernel(format!("lambda must be positive, got {lambda}")));
        }
        if kind == KernelKind::InteriorDirichlet && (2.0 * lambda).sin().abs() <= RESONANCE_TOL {
            return Err(Error::Kernel(format!(
                "lambda = {lambda} is a Dirichlet eigenvalue of [-1, 1] (|sin 2 lambda| <= {RESONANCE_TOL})"
            )));
        }
        Ok(Self { kind, lambda })
    }

    /// The kernel matching the problem's boundary condition.
    pub fn for_problem(problem: &HelmholtzProblem) -> Result<Self> {
        match problem.bc {
            Boundary::Robin { .. } => Self::exterior(problem.lambda),
            Boundary::Dirichlet { .. } => Self::interior_dirichlet(problem.lambda),
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `G(x, x')`. The interior kernel is only meaningful for `x, x'` in `[-1, 1]`.
    pub fn eval(&self, x: f64, xp: f64) -> Complex64 {
        let l = self.lambda;
        match self.kind {
            KernelKind::Exterior => Complex64::from_polar(1.0, l * (x - xp).abs()) / Complex64::new(0.0, 2.0 * l),
            KernelKind::InteriorDirichlet => {
                let (lo, hi) = if x <= xp { (x, xp) } else { (xp, x) };
                let wronskian = l * (2.0 * l).sin();
                Complex64::from((l * (lo + 1.0)).sin() * (l * (hi - 1.0)).sin() / wronskian)
            }
        }
    }
}

/// `G(x, x')` with the interior domain checked.
pub fn green_eval(kernel: &GreenKernel, x: f64, xp: f64) -> Result<Complex64> {
    if kernel.kind == KernelKind::InteriorDirichlet && !((-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&xp)) {
        return Err(Error::Kernel(format!(
            "interior kernel evaluated outside [-1, 1] at ({x}, {xp})"
        )));
    }
    Ok(kernel.eval(x, xp))
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// `order`-point rule; nodes by Newton iteration on `P_order`.
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!("quadrature order must be >= 2, got {order}")));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `int_a^b g`.
    pub fn integrate<T>(&self, a: f64, b: f64, mut g: impl FnMut(f64) -> T) -> T
    where
        T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Default,
    {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = T::default();
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + g(mid + half * t) * (w * half);
        }
        acc
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Uniform hat-function basis with `m` nodes on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshBasis {
    m: usize,
}

impl MeshBasis {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("mesh needs at least 2 nodes, got {m}")));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        2.0 / (self.m - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.m - 1 {
            1.0
        } else {
            -1.0 + j as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.node(j)).collect()
    }

    /// `phi_j(x)`.
    pub fn hat(&self, j: usize, x: f64) -> f64 {
        let d = (x - self.node(j)).abs() / self.h();
        if d < 1.0 {
            1.0 - d
        } else {
            0.0
        }
    }

    /// Element index containing `x` and the two hat values there
    /// `(phi_e(x), phi_{e+1}(x))`. `None` outside `[-1, 1]`.
    pub fn locate(&self, x: f64) -> Option<(usize, f64, f64)> {
        if !(-1.0..=1.0).contains(&x) {
            return None;
        }
        let t = (x + 1.0) / self.h();
        let e = (t.floor() as usize).min(self.m - 2);
        let s = (t - e as f64).clamp(0.0, 1.0);
        Some((e, 1.0 - s, s))
    }
}

/// Dense discretization of the integral equation.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSystem {
    pub kernel: GreenKernel,
    pub mesh: MeshBasis,
    pub coll: Vec<f64>,
    pub c: f64,
    /// `N x M` row-major, `A_ij = phi_j(x_i)`.
    pub a: Vec<f64>,
    /// `N x M` row-major, `B_ij = int G(x_i, s) w(s) phi_j(s) ds`.
    pub b: Vec<Complex64>,
    /// `(f_G)_i = int f(s) G(x_i, s) ds`.
    pub f_g: Vec<Complex64>,
}

impl IntegralSystem {
    pub fn rows(&self) -> usize {
        self.coll.len()
    }

    pub fn cols(&self) -> usize {
        self.mesh.len()
    }

    /// `A u + c B u - f_G` for nodal values `u`.
    pub fn residual(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        let m = self.cols();
        if u.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: u.len(),
            });
        }
        Ok((0..self.rows())
            .map(|i| {
                let (ar, br) = (&self.a[i * m..(i + 1) * m], &self.b[i * m..(i + 1) * m]);
                let mut acc = -self.f_g[i];
                for j in 0..m {
                    acc += (br[j] * self.c + ar[j]) * u[j];
                }
                acc
            })
            .collect())
    }
}

fn check_problem(kernel: &GreenKernel, problem: &HelmholtzProblem) -> Result<()> {
    problem.validate()?;
    if problem.sign != OperatorSign::Helmholtz {
        return Err(Error::Config("the integral form covers the Helmholtz sign only".into()));
    }
    if (kernel.lambda - problem.lambda).abs() > 0.0 {
        return Err(Error::Config(format!(
            "kernel lambda {} does not match problem lambda {}",
            kernel.lambda, problem.lambda
        )));
    }
    match (kernel.kind, problem.bc) {
        (KernelKind::Exterior, Boundary::Robin { .. }) => Ok(()),
        (KernelKind::InteriorDirichlet, Boundary::Dirichlet { a, b, u1, u2 })
            if a == -1.0 && b == 1.0 && u1 == 0.0 && u2 == 0.0 =>
        {
            Ok(())
        }
        (KernelKind::InteriorDirichlet, Boundary::Dirichlet { .. }) => Err(Error::Config(
            "interior kernel needs homogeneous Dirichlet data on [-1, 1]".into(),
        )),
        _ => Err(Error::Config(
            "kernel kind does not match the boundary condition".into(),
        )),
    }
}

/// Builds `A`, `B` and `f_G`. Every element integral is split at `x_i` when
/// the collocation point falls inside it.
pub fn assemble_system(
    kernel: &GreenKernel,
    problem: &HelmholtzProblem,
    mesh: &MeshBasis,
    coll: &CollocationSet,
    quad: &QuadratureRule,
) -> Result<IntegralSystem> {
    check_problem(kernel, problem)?;
    if quad.order() < 2 {
        return Err(Error::Config("quadrature order must be >= 2".into()));
    }
    if let Some(x) = coll.xs().iter().find(|x| !(-1.0..=1.0).contains(*x)) {
        return Err(Error::Config(format!("collocation point {x} outside [-1, 1]")));
    }
    let (n, m) = (coll.len(), mesh.len());
    let omega_zero = problem.omega.is_zero();
    let rows: Vec<(Vec<f64>, Vec<Complex64>, Complex64)> = coll
        .xs()
        .par_iter()
        .map(|&x| {
            let mut a = vec![0.0; m];
            if let Some((e, l, r)) = mesh.locate(x) {
                a[e] += l;
                a[e + 1] += r;
            }
            let mut b = vec![Complex64::new(0.0, 0.0); m];
            let mut fg = Complex64::new(0.0, 0.0);
            for e in 0..m - 1 {
                let (x0, x1) = (mesh.node(e), mesh.node(e + 1));
                let h = x1 - x0;
                let pieces: &[(f64, f64)] = if x > x0 && x < x1 {
                    &[(x0, x), (x, x1)]
                } else {
                    &[(x0, x1)]
                };
                for &(p0, p1) in pieces {
                    let (mid, half) = (0.5 * (p0 + p1), 0.5 * (p1 - p0));
                    for (t, w) in quad.nodes().iter().zip(quad.weights()) {
                        let s = mid + half * t;
                        let gw = kernel.eval(x, s) * (w * half);
                        fg += gw * problem.f.eval(s);
                        if !omega_zero {
                            let ow = gw * problem.omega.eval(s);
                            let right = (s - x0) / h;
                            b[e] += ow * (1.0 - right);
                            b[e + 1] += ow * right;
                        }
                    }
                }
            }
            (a, b, fg)
        })
        .collect();
    let mut sys = IntegralSystem {
        kernel: *kernel,
        mesh: *mesh,
        coll: coll.xs().to_vec(),
        c: problem.c,
        a: Vec::with_capacity(n * m),
        b: Vec::with_capacity(n * m),
        f_g: Vec::with_capacity(n),
    };
    for (a, b, fg) in rows {
        sys.a.extend(a);
        sys.b.extend(b);
        sys.f_g.push(fg);
    }
    if sys.b.iter().chain(&sys.f_g).any(|z| !z.is_finite()) {
        return Err(Error::Numeric("non-finite entry in the assembled system".into()));
    }
    Ok(sys)
}

const CACHE_MAGIC: &[u8; 8] = b"PWISYS01";

/// Content hash of everything the assembly depends on.
pub fn system_key(
    kernel: &GreenKernel,
    problem: &HelmholtzProblem,
    mesh: &MeshBasis,
    coll: &CollocationSet,
    quad: &QuadratureRule,
) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(CACHE_MAGIC);
    h.update(serde_json::to_vec(&(kernel, problem, mesh, quad.order())).expect("plain data serializes"));
    for x in coll.xs() {
        h.update(x.to_le_bytes());
    }
    h.finalize().into()
}

/// Cache directory from [`CACHE_ENV`], if set and non-empty.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// [`assemble_system`] backed by a file cache in `dir`.
///
/// Files are named `<hex key>.bin`. Layout, little-endian: 8-byte magic,
/// 32-byte key, `u64` N, `u64` M, then N collocation points, `c`, `A` (N*M
/// reals), `B` (N*M complex as re/im pairs), `f_G` (N complex).
pub fn assemble_system_cached(
    kernel: &GreenKernel,
    problem: &HelmholtzProblem,
    mesh: &MeshBasis,
    coll: &CollocationSet,
    quad: &QuadratureRule,
    dir: &Path,
) -> Result<IntegralSystem> {
    let key = system_key(kernel, problem, mesh, coll, quad);
    let path = dir.join(format!("{}.bin", hex::encode(key)));
    if path.exists() {
        match read_cache(&path, &key, kernel, mesh) {
            Ok(sys) => return Ok(sys),
            Err(Error::Cache(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let sys = assemble_system(kernel, problem, mesh, coll, quad)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    write_cache(&tmp, &key, &sys)?;
    fs::rename(&tmp, &path)?;
    Ok(sys)
}

fn write_cache(path: &Path, key: &[u8; 32], sys: &IntegralSystem) -> Result<()> {
    let (n, m) = (sys.rows(), sys.cols());
    let mut buf = Vec::with_capacity(56 + 8 * (n + 1 + n * m * 3 + 2 * n));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(key);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(m as u64).to_le_bytes());
    let reals = sys
        .coll
        .iter()
        .copied()
        .chain(std::iter::once(sys.c))
        .chain(sys.a.iter().copied())
        .chain(sys.b.iter().chain(&sys.f_g).flat_map(|z| [z.re, z.im]));
    for v in reals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

fn read_cache(path: &Path, key: &[u8; 32], kernel: &GreenKernel, mesh: &MeshBasis) -> Result<IntegralSystem> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |what: &str| Error::Cache(format!("{}: {what}", path.display()));
    if bytes.len() < 56 || &bytes[..8] != CACHE_MAGIC || &bytes[8..40] != key {
        return Err(bad("header mismatch"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
    let (n, m) = (word(40) as usize, word(48) as usize);
    if m != mesh.len() || bytes.len() != 56 + 8 * (n + 1 + 3 * n * m + 2 * n) {
        return Err(bad("size mismatch"));
    }
    let mut vals = bytes[56..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |k: usize| vals.by_ref().take(k).collect::<Vec<f64>>();
    let coll = take(n);
    let c = take(1)[0];
    let a = take(n * m);
    let pairs = |v: Vec<f64>| {
        v.chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect::<Vec<_>>()
    };
    let b = pairs(take(2 * n * m));
    let f_g = pairs(take(2 * n));
    Ok(IntegralSystem {
        kernel: *kernel,
        mesh: *mesh,
        coll,
        c,
        a,
        b,
        f_g,
    })
}

/// `||A T + c B T - f_G||^2` with `T` the ansatz at the mesh nodes.
pub fn integral_loss(ansatz: &CoupledAnsatz, sys: &IntegralSystem) -> Result<f64> {
    if ansatz.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: ansatz.dim(),
        });
    }
    let u = ansatz.eval_many(&sys.mesh.nodes())?;
    Ok(sys.residual(&u)?.iter().map(|r| r.norm_sqr()).sum())
}

/// Rows are residual equations; every step evaluates the ansatz at all nodes.
pub struct IntegralObjective<'a> {
    sys: &'a IntegralSystem,
    nodes: Vec<f64>,
    /// `A + c B`, row-major.
    k: Vec<Complex64>,
}

impl<'a> IntegralObjective<'a> {
    pub fn new(sys: &'a IntegralSystem) -> Self {
        let k = sys.a.iter().zip(&sys.b).map(|(a, b)| b * sys.c + a).collect();
        Self {
            sys,
            nodes: sys.mesh.nodes(),
            k,
        }
    }
}

impl Objective for IntegralObjective<'_> {
    fn rows(&self) -> usize {
        self.sys.rows()
    }

    fn order(&self) -> DerivOrder {
        DerivOrder::Value
    }

    fn points(&self, _rows: &[usize], out: &mut Vec<f64>) {
        out.extend_from_slice(&self.nodes);
    }

    fn loss_and_adjoints(&self, rows: &[usize], values: &[ComplexTriple], adj: &mut [ComplexTriple]) -> f64 {
        let m = self.nodes.len();
        let mut loss = 0.0;
        for &i in rows {
            let row = &self.k[i * m..(i + 1) * m];
            let mut r = -self.sys.f_g[i];
            for (kij, t) in row.iter().zip(values) {
                r += kij * t.value;
            }
            loss += r.norm_sqr();
            let g = 2.0 * r.conj();
            for (kij, a) in row.iter().zip(adj.iter_mut()) {
                a.value += g * kij;
            }
        }
        loss
    }
}

/// Adam descent on [`integral_loss`]; `cfg.batch_size >= N` is full-batch.
pub fn solve_integral(
    problem: &HelmholtzProblem,
    kernel: &GreenKernel,
    ansatz: &mut CoupledAnsatz,
    sys: &IntegralSystem,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    solve_integral_with_observer(problem, kernel, ansatz, sys, cfg, &mut |_, _| {})
}

pub fn solve_integral_with_observer(
    problem: &HelmholtzProblem,
    kernel: &GreenKernel,
    ansatz: &mut CoupledAnsatz,
    sys: &IntegralSystem,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>> {
    check_problem(kernel, problem)?;
    if sys.kernel != *kernel || sys.c != problem.c {
        return Err(Error::Config(
            "system was assembled for a different kernel or coefficient".into(),
        ));
    }
    if ansatz.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: ansatz.dim(),
        });
    }
    crate::ansatz::train_with_observer(ansatz, &IntegralObjective::new(sys), cfg, observer)
}
