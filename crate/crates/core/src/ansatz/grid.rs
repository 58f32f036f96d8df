use crate::{Error, Result};

/// Frequencies attached to the subnetworks of a coupled ansatz.
///
/// Each entry is a vector of `dim` components (rad per unit length). One
/// dimensional grids are kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    dim: usize,
    freqs: Vec<f64>,
}

impl FrequencyGrid {
    /// Deduplicated, sorted 1-D grid.
    pub fn select(freqs: &[f64]) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::Config("frequency list is empty".into()));
        }
        if let Some(bad) = freqs.iter().find(|f| !f.is_finite()) {
            return Err(Error::Config(format!("non-finite frequency {bad}")));
        }
        let mut sorted = freqs.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        Ok(Self { dim: 1, freqs: sorted })
    }

    /// Arithmetic progression `kmin, kmin + step, ...` up to `kmax`.
    pub fn sweep(kmin: f64, kmax: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("sweep step must be positive, got {step}")));
        }
        if !(kmin <= kmax) {
            return Err(Error::Config(format!("sweep needs kmin <= kmax, got {kmin} > {kmax}")));
        }
        // Tolerate rounding so that e.g. -1600:10:1600 keeps its endpoint.
        let count = ((kmax - kmin) / step + 1e-9).floor() as usize + 1;
        let freqs: Vec<f64> = (0..count).map(|i| kmin + i as f64 * step).collect();
        Self::select(&freqs)
    }

    /// Tensor product of two 1-D lists: every `(a, b)` with `a` in `xs`, `b` in `ys`.
    pub fn product(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let xs = Self::select(xs)?;
        let ys = Self::select(ys)?;
        let mut freqs = Vec::with_capacity(2 * xs.len() * ys.len());
        for &a in xs.iter_scalar() {
            for &b in ys.iter_scalar() {
                freqs.extend([a, b]);
            }
        }
        Ok(Self { dim: 2, freqs })
    }

    /// Product grid closed under flipping the sign of the second component,
    /// with `w` and `-w` identified (the real form covers both).
    ///
    /// A real ansatz `A cos(w.x) + B sin(w.x)` only reaches the directions in
    /// its grid, so separable targets like `g(x) g(y)` need both `(a, b)` and
    /// `(a, -b)`.
    pub fn product_signed(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let xs = Self::select(xs)?;
        let ys = Self::select(ys)?;
        let mut vecs: Vec<[f64; 2]> = Vec::new();
        for &a in xs.iter_scalar() {
            for &b in ys.iter_scalar() {
                for v in [[a, b], [a, -b]] {
                    let canon = if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
                        [-v[0], -v[1]]
                    } else {
                        v
                    };
                    let canon = [canon[0] + 0.0, canon[1] + 0.0];
                    if !vecs.contains(&canon) {
                        vecs.push(canon);
                    }
                }
            }
        }
        Self::from_vectors(2, &vecs.concat())
    }

    /// Grid from explicit vectors laid out `[entry][dim]`.
    pub fn from_vectors(dim: usize, flat: &[f64]) -> Result<Self> {
        if dim == 0 || flat.is_empty() || !flat.len().is_multiple_of(dim) {
            return Err(Error::Config(format!(
                "cannot split {} values into {dim}-dimensional frequencies",
                flat.len()
            )));
        }
        if dim == 1 {
            return Self::select(flat);
        }
        let entries: Vec<&[f64]> = flat.chunks(dim).collect();
        for (i, a) in entries.iter().enumerate() {
            if entries[..i].contains(a) {
                return Err(Error::Config(format!("duplicate frequency vector {a:?}")));
            }
        }
        Ok(Self {
            dim,
            freqs: flat.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.freqs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Frequency vector `m`.
    pub fn get(&self, m: usize) -> &[f64] {
        &self.freqs[m * self.dim..(m + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.freqs.chunks(self.dim)
    }

    fn iter_scalar(&self) -> impl Iterator<Item = &f64> {
        self.freqs.iter()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.freqs
    }
}
