//! Helmholtz and elliptic boundary-value problems solved by least-squares
//! residual minimization over a coupled ansatz.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ComplexTriple, CoupledAnsatz, Objective};
use crate::nn::{DerivOrder, TrainConfig};
use crate::reference::{band_mass, dft_spectrum, Grid1D, SpectrumReport, Window};
use crate::{Error, Result};

/// Real coefficient and source functions used by the problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarFn {
    Zero,
    Const {
        value: f64,
    },
    /// `amp * sin(freq x)`.
    Sine {
        amp: f64,
        freq: f64,
    },
    /// `sin(m x^2)`.
    SinQuadratic {
        m: f64,
    },
    /// `sin(1 - x^2)` on `[-1, 1]`, zero outside.
    CompactSinBump,
    /// `amp (1 - x^2) sin(mu x)` on `[-1, 1]`, zero outside.
    CompactTaperedSine {
        amp: f64,
        mu: f64,
    },
}

impl ScalarFn {
    pub fn eval(&self, x: f64) -> f64 {
        let inside = (-1.0..=1.0).contains(&x);
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Const { value } => value,
            ScalarFn::Sine { amp, freq } => amp * (freq * x).sin(),
            ScalarFn::SinQuadratic { m } => (m * x * x).sin(),
            ScalarFn::CompactSinBump => {
                if inside {
                    (1.0 - x * x).sin()
                } else {
                    0.0
                }
            }
            ScalarFn::CompactTaperedSine { amp, mu } => {
                if inside {
                    amp * (1.0 - x * x) * (mu * x).sin()
                } else {
                    0.0
                }
            }
        }
    }

    /// True when the function vanishes outside `[-1, 1]`.
    pub fn is_compact(&self) -> bool {
        matches!(
            self,
            ScalarFn::Zero | ScalarFn::CompactSinBump | ScalarFn::CompactTaperedSine { .. }
        )
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarFn::Zero)
            || matches!(self, ScalarFn::Const { value } if *value == 0.0)
            || matches!(self, ScalarFn::Sine { amp, .. } if *amp == 0.0)
            || matches!(self, ScalarFn::CompactTaperedSine { amp, .. } if *amp == 0.0)
    }
}

/// `+1`: `u'' + (lambda^2 + c w) u`; `-1`: `u'' - (lambda^2 + c w) u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorSign {
    Helmholtz,
    Elliptic,
}

impl OperatorSign {
    pub fn factor(self) -> f64 {
        match self {
            OperatorSign::Helmholtz => 1.0,
            OperatorSign::Elliptic => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Boundary {
    /// `u(a) = u1`, `u(b) = u2`.
    Dirichlet { a: f64, b: f64, u1: f64, u2: f64 },
    /// Outgoing conditions `u'(-a) + i lambda u(-a) = 0`, `u'(a) - i lambda u(a) = 0`.
    Robin { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzProblem {
    pub lambda: f64,
    /// Source frequency; descriptive, the source itself is `f`.
    pub mu: f64,
    pub c: f64,
    pub omega: ScalarFn,
    pub f: ScalarFn,
    pub sign: OperatorSign,
    pub bc: Boundary,
    /// Boundary penalty.
    pub rho: f64,
}

impl HelmholtzProblem {
    /// Homogeneous Dirichlet problem on `[-1, 1]` with source
    /// `(lambda^2 - mu^2) sin(mu x)`.
    pub fn dirichlet_manufactured(lambda: f64, mu: f64, c: f64, omega: ScalarFn, rho: f64) -> Self {
        Self {
            lambda,
            mu,
            c,
            omega,
            f: ScalarFn::Sine {
                amp: lambda * lambda - mu * mu,
                freq: mu,
            },
            sign: OperatorSign::Helmholtz,
            bc: Boundary::Dirichlet {
                a: -1.0,
                b: 1.0,
                u1: 0.0,
                u2: 0.0,
            },
            rho,
        }
    }

    /// `u'' - lambda^2 u = -(lambda^2 + mu^2) sin(mu x)`, `u(+-1) = 0`.
    pub fn elliptic(lambda: f64, mu: f64, rho: f64) -> Self {
        Self {
            lambda,
            mu,
            c: 0.0,
            omega: ScalarFn::Zero,
            f: ScalarFn::Sine {
                amp: -(lambda * lambda + mu * mu),
                freq: mu,
            },
            sign: OperatorSign::Elliptic,
            bc: Boundary::Dirichlet {
                a: -1.0,
                b: 1.0,
                u1: 0.0,
                u2: 0.0,
            },
            rho,
        }
    }

    /// Scattering by a compact inhomogeneity, truncated to `[-a, a]` with
    /// outgoing Robin conditions.
    pub fn exterior(lambda: f64, mu: f64, c: f64, a: f64, rho: f64) -> Self {
        Self {
            lambda,
            mu,
            c,
            omega: ScalarFn::CompactSinBump,
            f: ScalarFn::CompactTaperedSine {
                amp: lambda * lambda - mu * mu,
                mu,
            },
            sign: OperatorSign::Helmholtz,
            bc: Boundary::Robin { a },
            rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !self.c.is_finite() || !self.mu.is_finite() {
            return Err(Error::Config("c and mu must be finite".into()));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        match self.bc {
            Boundary::Dirichlet { a, b, u1, u2 } => {
                if !(a < b) || !u1.is_finite() || !u2.is_finite() {
                    return Err(Error::Config(format!("invalid Dirichlet interval [{a}, {b}]")));
                }
            }
            Boundary::Robin { a } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("Robin half-width must be positive, got {a}")));
                }
                if !(self.omega.is_compact() && self.f.is_compact()) {
                    return Err(Error::Config(
                        "Robin truncation needs compactly supported omega and f".into(),
                    ));
                }
                if a < 2.0 {
                    return Err(Error::Config(format!("Robin half-width must be >= 2, got {a}")));
                }
            }
        }
        Ok(())
    }

    /// Endpoints of the computational domain.
    pub fn domain(&self) -> (f64, f64) {
        match self.bc {
            Boundary::Dirichlet { a, b, .. } => (a, b),
            Boundary::Robin { a } => (-a, a),
        }
    }

    /// Zeroth-order coefficient `q` in `L u = u'' + q u`.
    pub fn q(&self, x: f64) -> f64 {
        let omega = if self.c == 0.0 {
            0.0
        } else {
            self.c * self.omega.eval(x)
        };
        self.sign.factor() * (self.lambda * self.lambda + omega)
    }

    pub fn source(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    /// `L T - f` at a point from the ansatz triple.
    pub fn residual(&self, x: f64, t: &ComplexTriple) -> Complex64 {
        t.d2 + self.q(x) * t.value - self.source(x)
    }

    /// The two endpoints where the boundary term is evaluated.
    fn boundary_points(&self) -> [f64; 2] {
        let (a, b) = self.domain();
        [a, b]
    }

    /// `(L_bc, adjoints at the two boundary points)` without the penalty.
    fn boundary_term(&self, at: [&ComplexTriple; 2]) -> (f64, [ComplexTriple; 2]) {
        let i_lambda = Complex64::new(0.0, self.lambda);
        match self.bc {
            Boundary::Dirichlet { u1, u2, .. } => {
                let mut adj = [ComplexTriple::ZERO; 2];
                let mut loss = 0.0;
                for (k, target) in [u1, u2].into_iter().enumerate() {
                    let r = at[k].value - target;
                    loss += r.norm_sqr();
                    adj[k].value = 2.0 * r.conj();
                }
                (loss, adj)
            }
            Boundary::Robin { .. } => {
                let mut adj = [ComplexTriple::ZERO; 2];
                let mut loss = 0.0;
                for (k, s) in [1.0, -1.0].into_iter().enumerate() {
                    let r = at[k].d1 + s * i_lambda * at[k].value;
                    loss += r.norm_sqr();
                    adj[k].d1 = 2.0 * r.conj();
                    adj[k].value = 2.0 * r.conj() * s * i_lambda;
                }
                (loss, adj)
            }
        }
    }

    /// Default penalty `25 N` for `N` collocation points.
    pub fn default_rho(n: usize) -> f64 {
        100.0 * n as f64 / 4.0
    }
}

/// Residual evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    xs: Vec<f64>,
}

impl CollocationSet {
    pub fn new(xs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Config("collocation set is empty".into()));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("collocation points must be finite".into()));
        }
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("collocation points must be distinct".into()));
        }
        Ok(Self { xs })
    }

    /// `n` evenly spaced points including both ends.
    pub fn evenly_spaced(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 || !(a < b) {
            return Err(Error::Config(format!("cannot place {n} points on [{a}, {b}]")));
        }
        let h = (b - a) / (n - 1) as f64;
        Self::new((0..n).map(|i| if i + 1 == n { b } else { a + i as f64 * h }).collect())
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    fn check_within(&self, (a, b): (f64, f64)) -> Result<()> {
        let tol = 1e-12 * (b - a);
        match self.xs.iter().find(|&&x| x < a - tol || x > b + tol) {
            Some(x) => Err(Error::Config(format!("collocation point {x} outside [{a}, {b}]"))),
            None => Ok(()),
        }
    }
}

/// Differential residual objective: rows are collocation points, every batch
/// also carries the penalized boundary term.
pub struct ResidualObjective<'a> {
    problem: &'a HelmholtzProblem,
    coll: &'a CollocationSet,
    q: Vec<f64>,
    f: Vec<f64>,
}

impl<'a> ResidualObjective<'a> {
    pub fn new(problem: &'a HelmholtzProblem, coll: &'a CollocationSet) -> Self {
        let q = coll.xs().iter().map(|&x| problem.q(x)).collect();
        let f = coll.xs().iter().map(|&x| problem.source(x)).collect();
        Self { problem, coll, q, f }
    }
}

impl Objective for ResidualObjective<'_> {
    fn rows(&self) -> usize {
        self.coll.len()
    }

    fn order(&self) -> DerivOrder {
        DerivOrder::Second
    }

    fn points(&self, rows: &[usize], out: &mut Vec<f64>) {
        out.extend(rows.iter().map(|&r| self.coll.xs()[r]));
        out.extend(self.problem.boundary_points());
    }

    fn loss_and_adjoints(&self, rows: &[usize], values: &[ComplexTriple], adj: &mut [ComplexTriple]) -> f64 {
        let mut loss = 0.0;
        for (b, &r) in rows.iter().enumerate() {
            let t = &values[b];
            let res = t.d2 + self.q[r] * t.value - self.f[r];
            loss += res.norm_sqr();
            let g = 2.0 * res.conj();
            adj[b].d2 = g;
            adj[b].value = g * self.q[r];
        }
        let nb = rows.len();
        let (bc, bc_adj) = self.problem.boundary_term([&values[nb], &values[nb + 1]]);
        let rho = self.problem.rho;
        for k in 0..2 {
            adj[nb + k].value += rho * bc_adj[k].value;
            adj[nb + k].d1 += rho * bc_adj[k].d1;
        }
        loss + rho * bc
    }
}

/// `L_ode + rho L_bc` over all collocation points.
pub fn residual_loss(ansatz: &CoupledAnsatz, problem: &HelmholtzProblem, coll: &CollocationSet) -> Result<f64> {
    let (l_ode, l_bc) = residual_parts(ansatz, problem, coll)?;
    Ok(l_ode + problem.rho * l_bc)
}

/// `(L_ode, L_bc)` separately.
pub fn residual_parts(ansatz: &CoupledAnsatz, problem: &HelmholtzProblem, coll: &CollocationSet) -> Result<(f64, f64)> {
    let values = ansatz.eval_many_with_derivs(coll.xs())?;
    let l_ode = coll
        .xs()
        .iter()
        .zip(&values)
        .map(|(&x, t)| problem.residual(x, t).norm_sqr())
        .sum();
    let ends = problem.boundary_points();
    let e = ansatz.eval_many_with_derivs(&ends)?;
    Ok((l_ode, problem.boundary_term([&e[0], &e[1]]).0))
}

/// Mini-batch Adam descent on the residual loss. Returns the loss history.
pub fn solve(
    problem: &HelmholtzProblem,
    ansatz: &mut CoupledAnsatz,
    coll: &CollocationSet,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    solve_with_observer(problem, ansatz, coll, cfg, &mut |_, _| {})
}

pub fn solve_with_observer(
    problem: &HelmholtzProblem,
    ansatz: &mut CoupledAnsatz,
    coll: &CollocationSet,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>> {
    problem.validate()?;
    if ansatz.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: ansatz.dim(),
        });
    }
    coll.check_within(problem.domain())?;
    crate::ansatz::train_with_observer(ansatz, &ResidualObjective::new(problem, coll), cfg, observer)
}

/// Error spectrum of a trained solution against a reference on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureDiagnostic {
    pub spectrum: SpectrumReport,
    /// `(lo, hi, mass)` for each requested band of `|k|`.
    pub band_masses: Vec<(f64, f64, f64)>,
}

/// DFT of `T - ref` on the grid with the spectral mass in each `|k|` band.
pub fn known_failure_diagnostic(
    trained: &CoupledAnsatz,
    grid: &Grid1D,
    reference: &[Complex64],
    bands: &[(f64, f64)],
    window: Window,
) -> Result<FailureDiagnostic> {
    let xs = grid.points();
    if reference.len() != xs.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: reference.len(),
        });
    }
    let approx = trained.eval_many(&xs)?;
    let err: Vec<Complex64> = approx.iter().zip(reference).map(|(a, r)| a - r).collect();
    let spectrum = dft_spectrum(&err, grid.h(), window)?;
    let band_masses = bands
        .iter()
        .map(|&(lo, hi)| (lo, hi, band_mass(&spectrum, lo, hi)))
        .collect();
    Ok(FailureDiagnostic { spectrum, band_masses })
}
