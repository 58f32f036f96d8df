//! Reference solutions and diagnostics: finite differences, closed forms,
//! error norms, spectra and the subnet cross-term ratio.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::{AnsatzForm, CoupledAnsatz, FrequencyGrid};
use crate::pde::{Boundary, HelmholtzProblem};
use crate::{Error, Result};

/// Uniform grid with `n` intervals on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 || !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("invalid grid [{a}, {b}] with {n} intervals")));
        }
        Ok(Self { a, b, n })
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        if k == self.n {
            self.b
        } else {
            self.a + k as f64 * self.h()
        }
    }

    /// The `n + 1` nodes.
    pub fn points(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.x(k)).collect()
    }

    /// Smallest power-of-two interval count giving at least
    /// `per_wavelength` points per wavelength `2 pi / k`.
    pub fn resolving(a: f64, b: f64, k: f64, per_wavelength: f64) -> Result<Self> {
        let needed = ((b - a) * k.abs() * per_wavelength / (2.0 * std::f64::consts::PI)).ceil() as usize;
        Self::new(a, b, needed.max(16).next_power_of_two())
    }
}

/// Points per wavelength below which a grid counts as under-resolved.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FdOptions {
    /// Turn resolution warnings into errors.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdSolution {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
    pub warnings: Vec<String>,
}

impl FdSolution {
    /// Piecewise-linear interpolation of the nodal values.
    pub fn interpolate(&self, x: f64) -> Complex64 {
        let g = &self.grid;
        let t = ((x - g.a) / g.h()).clamp(0.0, g.n as f64);
        let k = (t.floor() as usize).min(g.n - 1);
        let s = t - k as f64;
        self.values[k] * (1.0 - s) + self.values[k + 1] * s
    }
}

/// Second-order finite-difference solution of the problem on `grid`.
///
/// Dirichlet values are imposed at the grid ends; the Robin conditions are
/// closed with ghost points eliminated through the boundary relation.
pub fn fd_solve(problem: &HelmholtzProblem, grid: &Grid1D, opts: FdOptions) -> Result<FdSolution> {
    problem.validate()?;
    let (a, b) = problem.domain();
    let tol = 1e-12 * (b - a);
    if (grid.a - a).abs() > tol || (grid.b - b).abs() > tol {
        return Err(Error::Config(format!(
            "grid [{}, {}] does not span the problem domain [{a}, {b}]",
            grid.a, grid.b
        )));
    }
    let mut warnings = Vec::new();
    let k = problem.lambda.max(problem.mu.abs());
    let per_wavelength = 2.0 * std::f64::consts::PI / (k * grid.h());
    if per_wavelength < MIN_POINTS_PER_WAVELENGTH {
        let msg =
            format!("{per_wavelength:.1} points per wavelength (need {MIN_POINTS_PER_WAVELENGTH}) for wave number {k}");
        if opts.strict {
            return Err(Error::Resolution(msg));
        }
        warnings.push(msg);
    }

    let n = grid.n;
    let h = grid.h();
    let h2 = h * h;
    let xs = grid.points();
    let i_lambda = Complex64::new(0.0, problem.lambda);
    // Rows scaled by h^2: u_{k-1} + (h^2 q_k - 2) u_k + u_{k+1} = h^2 f_k.
    let (lower, diag, upper, rhs) = match problem.bc {
        Boundary::Dirichlet { u1, u2, .. } => {
            let m = n - 1;
            let mut lower = vec![Complex64::new(1.0, 0.0); m];
            let mut upper = vec![Complex64::new(1.0, 0.0); m];
            let mut diag = Vec::with_capacity(m);
            let mut rhs = Vec::with_capacity(m);
            for i in 1..n {
                diag.push(Complex64::from(h2 * problem.q(xs[i]) - 2.0));
                rhs.push(Complex64::from(h2 * problem.source(xs[i])));
            }
            rhs[0] -= u1;
            rhs[m - 1] -= u2;
            lower[0] = 0.0.into();
            upper[m - 1] = 0.0.into();
            (lower, diag, upper, rhs)
        }
        Boundary::Robin { .. } => {
            let m = n + 1;
            let mut lower = vec![Complex64::new(1.0, 0.0); m];
            let mut upper = vec![Complex64::new(1.0, 0.0); m];
            let mut diag = Vec::with_capacity(m);
            let mut rhs = Vec::with_capacity(m);
            for (i, &x) in xs.iter().enumerate() {
                let mut d = Complex64::from(h2 * problem.q(x) - 2.0);
                if i == 0 || i == n {
                    d += 2.0 * h * i_lambda;
                }
                diag.push(d);
                rhs.push(Complex64::from(h2 * problem.source(x)));
            }
            // The ghost values fold into the neighbouring coefficient.
            upper[0] = 2.0.into();
            lower[n] = 2.0.into();
            lower[0] = 0.0.into();
            upper[n] = 0.0.into();
            (lower, diag, upper, rhs)
        }
    };
    let interior = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let values = match problem.bc {
        Boundary::Dirichlet { u1, u2, .. } => {
            let mut v = Vec::with_capacity(n + 1);
            v.push(u1.into());
            v.extend(interior);
            v.push(u2.into());
            v
        }
        Boundary::Robin { .. } => interior,
    };
    debug_assert_eq!(values.len(), n + 1);
    Ok(FdSolution {
        grid: *grid,
        values,
        warnings,
    })
}

/// Gaussian elimination with partial pivoting for a tridiagonal system.
/// `lower[0]` and `upper[m - 1]` are ignored.
fn solve_tridiagonal(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let m = diag.len();
    let zero = Complex64::new(0.0, 0.0);
    let scale = diag
        .iter()
        .zip(lower)
        .zip(upper)
        .map(|((d, l), u)| d.norm() + l.norm() + u.norm())
        .fold(0.0, f64::max);
    let singular_tol = 1e-13 * scale * (m as f64).sqrt();
    // Row k of the factor holds (d, u, u2) at columns k, k+1, k+2.
    let mut d = diag.to_vec();
    let mut u = upper.to_vec();
    let mut u2 = vec![zero; m];
    let mut l: Vec<Complex64> = lower.to_vec();
    let mut r = rhs.to_vec();
    for k in 0..m.saturating_sub(1) {
        // Row k+1 currently holds l[k+1] at column k.
        if l[k + 1].norm() > d[k].norm() {
            // Swap rows k and k+1.
            let (dk, uk, u2k, rk) = (d[k], u[k], u2[k], r[k]);
            d[k] = l[k + 1];
            u[k] = d[k + 1];
            u2[k] = if k + 1 < m - 1 { u[k + 1] } else { zero };
            r[k] = r[k + 1];
            l[k + 1] = dk;
            d[k + 1] = uk;
            u[k + 1] = u2k;
            r[k + 1] = rk;
        }
        if d[k].norm() <= singular_tol {
            return Err(Error::Resonance(format!(
                "pivot {k} vanishes: the discrete operator is singular or nearly so"
            )));
        }
        let factor = l[k + 1] / d[k];
        d[k + 1] -= factor * u[k];
        if k + 1 < m - 1 {
            u[k + 1] -= factor * u2[k];
        }
        let rk = r[k];
        r[k + 1] -= factor * rk;
    }
    if d[m - 1].norm() <= singular_tol {
        return Err(Error::Resonance(
            "last pivot vanishes: the discrete operator is singular or nearly so".into(),
        ));
    }
    let mut x = vec![zero; m];
    for k in (0..m).rev() {
        let mut acc = r[k];
        if k + 1 < m {
            acc -= u[k] * x[k + 1];
        }
        if k + 2 < m {
            acc -= u2[k] * x[k + 2];
        }
        x[k] = acc / d[k];
    }
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Resonance("non-finite solution of the banded system".into()));
    }
    Ok(x)
}

/// `u(x) = -(sin mu / sinh lambda) sinh(lambda x) + sin(mu x)`.
pub fn exact_elliptic(lambda: f64, mu: f64, x: f64) -> f64 {
    -(mu.sin() / lambda.sinh()) * (lambda * x).sinh() + (mu * x).sin()
}

/// Solution of `u'' + lambda^2 u = (lambda^2 - mu^2) sin(mu x)`, `u(+-1) = 0`:
/// `sin(mu x) - (sin mu / sin lambda) sin(lambda x)`.
pub fn exact_dirichlet_manufactured(lambda: f64, mu: f64, x: f64) -> f64 {
    (mu * x).sin() - (mu.sin() / lambda.sin()) * (lambda * x).sin()
}

/// `||approx - ref|| / ||ref||` over a common grid.
pub fn rel_l2_error(approx: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if approx.len() != reference.len() {
        return Err(Error::Dimension {
            expected: reference.len(),
            got: approx.len(),
        });
    }
    let den: f64 = reference.iter().map(|r| r.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::Degenerate("reference has zero norm".into()));
    }
    let num: f64 = approx.iter().zip(reference).map(|(a, r)| (a - r).norm_sqr()).sum();
    Ok((num / den).sqrt())
}

pub fn max_abs_error(approx: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if approx.len() != reference.len() {
        return Err(Error::Dimension {
            expected: reference.len(),
            got: approx.len(),
        });
    }
    Ok(approx
        .iter()
        .zip(reference)
        .map(|(a, r)| (a - r).norm())
        .fold(0.0, f64::max))
}

/// Taper applied before the DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

/// DFT magnitudes of a uniformly sampled signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Angular frequencies `2 pi k / (N h)`, ascending.
    pub freqs: Vec<f64>,
    /// `h |X_k|`, a Riemann approximation of the continuous transform.
    pub mags: Vec<f64>,
    /// `sum mags^2 dk / 2 pi`, equal to `h sum |s|^2` of the (windowed) signal.
    pub parseval_energy: f64,
    pub spacing: f64,
}

impl SpectrumReport {
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.freqs.len() as f64 * self.spacing)
    }

    /// Index of the largest magnitude.
    pub fn peak(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.mags.iter().enumerate() {
            if *m > self.mags[best] {
                best = i;
            }
        }
        best
    }
}

/// Spectrum of samples at spacing `h`.
pub fn dft_spectrum(signal: &[Complex64], h: f64, window: Window) -> Result<SpectrumReport> {
    let n = signal.len();
    if n < 4 {
        return Err(Error::Data(format!("spectrum needs at least 4 samples, got {n}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
    }
    let mut buf: Vec<Complex64> = match window {
        Window::Rectangular => signal.to_vec(),
        Window::Hann => signal
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                s * w
            })
            .collect(),
    };
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let dk = 2.0 * std::f64::consts::PI / (n as f64 * h);
    let half = n.div_ceil(2);
    let mut freqs = Vec::with_capacity(n);
    let mut mags = Vec::with_capacity(n);
    // Reorder so that frequencies ascend from the most negative bin.
    for j in (half..n).chain(0..half) {
        let k = if j >= half { j as f64 - n as f64 } else { j as f64 };
        freqs.push(k * dk);
        mags.push(h * buf[j].norm());
    }
    let parseval_energy = mags.iter().map(|m| m * m).sum::<f64>() * dk / (2.0 * std::f64::consts::PI);
    Ok(SpectrumReport {
        freqs,
        mags,
        parseval_energy,
        spacing: h,
    })
}

/// Spectrum of samples at explicit points, which must be uniformly spaced.
pub fn dft_spectrum_at(xs: &[f64], signal: &[Complex64], window: Window) -> Result<SpectrumReport> {
    if xs.len() != signal.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: signal.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::Data("spectrum needs at least 4 samples".into()));
    }
    let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    if xs
        .windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300))
    {
        return Err(Error::Data("spectrum needs a uniform grid".into()));
    }
    dft_spectrum(signal, h, window)
}

/// Energy in the bins with `lo <= |k| <= hi`.
pub fn band_mass(report: &SpectrumReport, lo: f64, hi: f64) -> f64 {
    let dk = report.dk();
    report
        .freqs
        .iter()
        .zip(&report.mags)
        .filter(|(k, _)| (lo..=hi).contains(&k.abs()))
        .map(|(_, m)| m * m)
        .sum::<f64>()
        * dk
        / (2.0 * std::f64::consts::PI)
}

/// Smooth bump `exp(1 - 1 / (1 - t^2))` mapped onto `[a, b]`, zero at the ends.
pub fn bump_window(a: f64, b: f64, x: f64) -> f64 {
    let t = (2.0 * x - a - b) / (b - a);
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Spectral overlap of two phase-shifted subnets,
/// `sum |F_m| |F_n| / sum |F_m|^2`, where `F_m` is the DFT of
/// `e^{i w_m x} T_m(x)` on the grid times a smooth bump window.
pub fn cross_term_ratio(ansatz: &CoupledAnsatz, m: usize, n: usize, grid: &Grid1D) -> Result<f64> {
    if ansatz.form() != AnsatzForm::Complex || ansatz.dim() != 1 {
        return Err(Error::Config(
            "cross-term ratio needs a one-dimensional complex ansatz".into(),
        ));
    }
    let count = ansatz.num_freqs();
    if m >= count || n >= count {
        return Err(Error::Config(format!("subnet index out of range (have {count})")));
    }
    let fm = subnet_spectrum(ansatz, m, grid);
    let fn_ = if m == n {
        fm.clone()
    } else {
        subnet_spectrum(ansatz, n, grid)
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in fm.iter().zip(&fn_) {
        num += a * b;
        den += a * a;
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("subnet {m} has a vanishing spectrum")));
    }
    Ok(num / den)
}

fn subnet_spectrum(ansatz: &CoupledAnsatz, m: usize, grid: &Grid1D) -> Vec<f64> {
    let (p, q) = ansatz.pair(m);
    let w = ansatz.grid().get(m)[0];
    let mut buf: Vec<Complex64> = grid
        .points()
        .into_iter()
        .map(|x| {
            let t = Complex64::new(p.forward(&[x]), q.forward(&[x]));
            Complex64::from_polar(bump_window(grid.a, grid.b, x), w * x) * t
        })
        .collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|z| z.norm()).collect()
}

/// Complex ansatz of the form `u_m(w x + b)` for the input-scale sweep.
///
/// Input weights are uniform on `[-input_bound, input_bound]`, every bias is
/// uniform on `[-1, 1]`, deeper weights follow the usual fan-in scaling.
/// Nonzero biases matter: without them each subnet tends to a multiple of `x`
/// as the input scale shrinks and the ratio saturates.
pub fn sweep_base(grid: FrequencyGrid, layer_sizes: &[usize], input_bound: f64, seed: u64) -> Result<CoupledAnsatz> {
    if !(input_bound > 0.0 && input_bound.is_finite()) {
        return Err(Error::Config(format!(
            "input bound must be positive, got {input_bound}"
        )));
    }
    let mut a = CoupledAnsatz::new(AnsatzForm::Complex, grid, layer_sizes, 1.0, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5_0000_0000_0001);
    for net in a.nets_mut() {
        for w in net.weight_mut(0) {
            *w = rng.gen_range(-input_bound..=input_bound);
        }
        for l in 0..net.num_layers() {
            for b in net.bias_mut(l) {
                *b = rng.gen_range(-1.0..=1.0);
            }
        }
    }
    Ok(a)
}

/// Copy of `ansatz` with every input-layer weight multiplied by `eta`.
pub fn with_input_scale(ansatz: &CoupledAnsatz, eta: f64) -> CoupledAnsatz {
    let mut out = ansatz.clone();
    for net in out.nets_mut() {
        for w in net.weight_mut(0) {
            *w *= eta;
        }
    }
    out
}

/// [`cross_term_ratio`] of `(m, n)` after rescaling the inputs by each `eta`.
pub fn eta_sweep(base: &CoupledAnsatz, m: usize, n: usize, etas: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    etas.iter()
        .map(|&eta| {
            if !(eta > 0.0) {
                return Err(Error::Config(format!("eta must be positive, got {eta}")));
            }
            cross_term_ratio(&with_input_scale(base, eta), m, n, grid)
        })
        .collect()
}
