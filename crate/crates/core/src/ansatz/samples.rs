use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Supervised samples `(x_i, y_i)` with `x_i` in `R^dim` and complex `y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<Complex64>,
}

impl SampleSet {
    /// `xs` is laid out `[sample][dim]`.
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || xs.len() != dim * ys.len() {
            return Err(Error::Data(format!(
                "{} coordinates do not match {} samples of dimension {dim}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.iter().any(|x| !x.is_finite()) || ys.iter().any(|y| !(y.re.is_finite() && y.im.is_finite())) {
            return Err(Error::Data("samples contain non-finite values".into()));
        }
        Ok(Self { dim, xs, ys })
    }

    pub fn from_real(dim: usize, xs: Vec<f64>, ys: &[f64]) -> Result<Self> {
        Self::new(dim, xs, ys.iter().map(|&y| y.into()).collect())
    }

    /// `n` points drawn uniformly from the box `domain`.
    pub fn uniform_random<F>(domain: &[(f64, f64)], n: usize, seed: u64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        if domain.is_empty() || domain.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::Config(format!("invalid sampling box {domain:?}")));
        }
        let dim = domain.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n * dim);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let start = xs.len();
            for &(a, b) in domain {
                xs.push(rng.gen_range(a..b));
            }
            ys.push(f(&xs[start..]));
        }
        Self::new(dim, xs, ys)
    }

    /// `n` equispaced points on `[a, b]` including both ends.
    pub fn evenly_spaced<F>(a: f64, b: f64, n: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Complex64,
    {
        if n < 2 || !(a < b) {
            return Err(Error::Config(format!("cannot place {n} points on [{a}, {b}]")));
        }
        let h = (b - a) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(1, xs, ys)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> Complex64 {
        self.ys[i]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[Complex64] {
        &self.ys
    }

    /// Subset of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut xs = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            xs.extend_from_slice(self.x(r));
        }
        Self {
            dim: self.dim,
            xs,
            ys: rows.iter().map(|&r| self.ys[r]).collect(),
        }
    }

    /// Same points with new labels.
    pub fn relabel(&self, ys: Vec<Complex64>) -> Result<Self> {
        Self::new(self.dim, self.xs.clone(), ys)
    }
}
