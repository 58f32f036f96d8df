//! Band decomposition of scattered data and independent per-band training.
//!
//! Each band `[w_j - dk/2, w_j + dk/2]` is cut out of the samples by a
//! discrete convolution with a modulated sinc, shifted down to baseband by
//! `e^{-i w_j x}`, learned by a small complex subnet, and shifted back up at
//! assembly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{fit_train, AnsatzForm, CoupledAnsatz, FrequencyGrid, SampleSet};
use crate::nn::TrainConfig;
use crate::{Error, Result};

/// One pass band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub center: f64,
    pub width: f64,
    /// Support radius of the truncated kernel.
    pub truncation: f64,
}

impl BandSpec {
    pub fn new(center: f64, width: f64, truncation: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Config(format!("band width must be positive, got {width}")));
        }
        if !(truncation > 0.0) {
            return Err(Error::Config(format!(
                "band truncation must be positive, got {truncation}"
            )));
        }
        if !center.is_finite() {
            return Err(Error::Config(format!("band center {center} is not finite")));
        }
        Ok(Self {
            center,
            width,
            truncation,
        })
    }

    /// Band with the default truncation of ten sinc main lobes.
    pub fn with_default_truncation(center: f64, width: f64) -> Result<Self> {
        Self::new(center, width, default_truncation(width))
    }

    /// Band covering `[lo, hi]`.
    pub fn covering(lo: f64, hi: f64) -> Result<Self> {
        Self::with_default_truncation(0.5 * (lo + hi), hi - lo)
    }
}

/// `10 * 2 pi / dk`.
pub fn default_truncation(width: f64) -> f64 {
    10.0 * 2.0 * PI / width
}

fn sinc(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y.sin() / y
    }
}

/// `K(x) = (dk / 2 pi) e^{i w x} sinc(dk x / 2)`, whose convolution with `f`
/// has Fourier symbol equal to the indicator of the band.
pub fn bandpass_kernel(spec: &BandSpec, x: f64) -> Complex64 {
    let amp = spec.width / (2.0 * PI) * sinc(0.5 * spec.width * x);
    Complex64::from_polar(amp, spec.center * x)
}

/// Weights of the scattered-data convolution sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandQuadrature {
    /// Each sample carries the length of its cell among the sorted samples.
    #[default]
    CellLength,
    /// Every sample in the window carries `2 delta / N_s`.
    MonteCarlo,
}

/// Window occupancy of an extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandQuality {
    pub min_window: usize,
    pub max_window: usize,
    pub mean_window: f64,
    /// Sample indices whose window holds fewer than [`SPARSE_WINDOW`] samples.
    pub sparse: Vec<usize>,
}

pub const SPARSE_WINDOW: usize = 16;

/// Band-passed and down-shifted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BandData {
    pub spec: BandSpec,
    /// Same points as the input, labels `e^{-i w_j x_i} f_j(x_i)`.
    pub shifted: SampleSet,
    pub quality: BandQuality,
}

impl BandData {
    /// The band component itself, `f_j(x_i)`.
    pub fn band_values(&self) -> Vec<Complex64> {
        (0..self.shifted.len())
            .map(|i| self.shifted.y(i) * Complex64::from_polar(1.0, self.spec.center * self.shifted.x(i)[0]))
            .collect()
    }
}

/// Discrete convolution of the samples with the band kernel, evaluated at
/// every sample location. Rows are computed in parallel; the result does not
/// depend on the number of threads.
pub fn extract_band(data: &SampleSet, spec: &BandSpec, quadrature: BandQuadrature) -> Result<BandData> {
    let at: Vec<f64> = (0..data.len())
        .map(|i| data.x(i).first().copied().unwrap_or(0.0))
        .collect();
    let (ys, counts) = convolve(data, spec, quadrature, &at)?;
    let n = counts.len();
    let quality = BandQuality {
        min_window: *counts.iter().min().unwrap(),
        max_window: *counts.iter().max().unwrap(),
        mean_window: counts.iter().sum::<usize>() as f64 / n as f64,
        sparse: (0..n).filter(|&i| counts[i] < SPARSE_WINDOW).collect(),
    };
    Ok(BandData {
        spec: *spec,
        shifted: data.relabel(ys)?,
        quality,
    })
}

/// Down-shifted band values `e^{-i w_j x} f_j(x)` estimated at arbitrary points.
pub fn shifted_band_at(
    data: &SampleSet,
    spec: &BandSpec,
    quadrature: BandQuadrature,
    points: &[f64],
) -> Result<Vec<Complex64>> {
    Ok(convolve(data, spec, quadrature, points)?.0)
}

fn convolve(
    data: &SampleSet,
    spec: &BandSpec,
    quadrature: BandQuadrature,
    at: &[f64],
) -> Result<(Vec<Complex64>, Vec<usize>)> {
    if data.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: data.dim(),
        });
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::Data("band extraction needs at least two samples".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.x(a)[0].total_cmp(&data.x(b)[0]));
    let xs: Vec<f64> = order.iter().map(|&i| data.x(i)[0]).collect();

    let cell: Vec<f64> = match quadrature {
        BandQuadrature::CellLength => (0..n)
            .map(|s| {
                let left = if s == 0 { xs[0] } else { xs[s - 1] };
                let right = if s + 1 == n { xs[n - 1] } else { xs[s + 1] };
                0.5 * (right - left)
            })
            .collect(),
        BandQuadrature::MonteCarlo => vec![1.0; n],
    };
    // With the shift folded in, the down-shifted value at x is
    // sum_s w_s (dk / 2 pi) sinc(dk (x - x_s) / 2) e^{-i w_j x_s} f(x_s).
    let weighted: Vec<Complex64> = order
        .iter()
        .zip(&cell)
        .map(|(&i, &w)| w * data.y(i) * Complex64::from_polar(1.0, -spec.center * data.x(i)[0]))
        .collect();

    let delta = spec.truncation;
    let scale = spec.width / (2.0 * PI);
    let half_width = 0.5 * spec.width;
    let rows: Vec<(Complex64, usize)> = at
        .par_iter()
        .map(|&x| {
            let lo = xs.partition_point(|&s| s <= x - delta);
            let hi = xs.partition_point(|&s| s < x + delta);
            let mut acc = Complex64::new(0.0, 0.0);
            for s in lo..hi {
                acc += weighted[s] * sinc(half_width * (x - xs[s]));
            }
            let count = hi - lo;
            let w = match quadrature {
                BandQuadrature::CellLength => scale,
                BandQuadrature::MonteCarlo => scale * 2.0 * delta / count.max(1) as f64,
            };
            (acc * w, count)
        })
        .collect();
    if let Some(i) = rows.iter().position(|r| r.1 == 0) {
        return Err(Error::Data(format!("empty convolution window at x = {}", at[i])));
    }
    Ok(rows.into_iter().unzip())
}

/// A band's data together with the complex subnet that learns it.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTask {
    pub data: BandData,
    /// Complex-form ansatz with the single frequency 0, i.e. `P + iQ`.
    pub subnet: CoupledAnsatz,
    /// Seed for this band's training.
    pub seed: u64,
    pub history: Vec<f64>,
}

impl BandTask {
    pub fn new(data: BandData, layer_sizes: &[usize], init_scale: f64, seed: u64) -> Result<Self> {
        let subnet = CoupledAnsatz::new(
            AnsatzForm::Complex,
            FrequencyGrid::select(&[0.0])?,
            layer_sizes,
            init_scale,
            seed,
        )?;
        Ok(Self {
            data,
            subnet,
            seed,
            history: Vec::new(),
        })
    }

    pub fn spec(&self) -> &BandSpec {
        &self.data.spec
    }

    /// Learned band component `e^{i w_j x} T_j(x)`.
    pub fn eval(&self, x: f64) -> Result<Complex64> {
        Ok(Complex64::from_polar(1.0, self.data.spec.center * x) * self.subnet.eval(&[x])?)
    }
}

/// Seed of band `j` derived from a run seed.
pub fn band_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add((j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Fits the task's subnet to its shifted samples. The training seed is the
/// task's own, so the result does not depend on other bands.
pub fn train_band(task: &mut BandTask, cfg: &TrainConfig) -> Result<()> {
    let cfg = TrainConfig {
        seed: task.seed,
        ..cfg.clone()
    };
    task.history = fit_train(&mut task.subnet, &task.data.shifted, &cfg)?;
    Ok(())
}

/// Trains all tasks, in parallel on up to `threads` workers (all cores when
/// `None`).
pub fn train_bands(tasks: &mut [BandTask], cfg: &TrainConfig, threads: Option<usize>) -> Result<()> {
    with_threads(threads, || tasks.par_iter_mut().try_for_each(|t| train_band(t, cfg)))
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// `sum_j e^{i w_j x} T_j(x)`.
pub fn assemble(tasks: &[BandTask], x: f64) -> Result<Complex64> {
    tasks.iter().map(|t| t.eval(x)).sum()
}

/// Bands covering `[lo_j, hi_j]` with the default truncation.
pub fn bands_from_intervals(intervals: &[(f64, f64)]) -> Result<Vec<BandSpec>> {
    intervals.iter().map(|&(lo, hi)| BandSpec::covering(lo, hi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_peak_and_zeros() {
        let spec = BandSpec::with_default_truncation(7.0, 5.0).unwrap();
        assert_eq!(bandpass_kernel(&spec, 0.0), Complex64::new(5.0 / (2.0 * PI), 0.0));
        for n in [1.0, 2.0, -3.0] {
            assert!(bandpass_kernel(&spec, 2.0 * PI * n / 5.0).norm() < 1e-15);
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(BandSpec::new(0.0, 0.0, 1.0).is_err());
        assert!(BandSpec::new(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn empty_window_is_reported() {
        let data = SampleSet::from_real(1, vec![0.0, 10.0], &[1.0, 1.0]).unwrap();
        let spec = BandSpec::new(0.0, 5.0, 1.0).unwrap();
        assert!(extract_band(&data, &spec, BandQuadrature::MonteCarlo).is_ok());
        let err = shifted_band_at(&data, &spec, BandQuadrature::MonteCarlo, &[5.0]).unwrap_err();
        assert!(err.to_string().contains("x = 5"), "{err}");
    }

    #[test]
    fn sparse_windows_are_flagged() {
        let spec = BandSpec::new(0.0, 5.0, 1.0).unwrap();
        let data = SampleSet::from_real(1, vec![0.0, 0.5, 10.0], &[1.0, 1.0, 1.0]).unwrap();
        let out = extract_band(&data, &spec, BandQuadrature::CellLength).unwrap();
        assert_eq!(out.quality.min_window, 1);
        assert_eq!(out.quality.sparse, vec![0, 1, 2]);
    }

    #[test]
    fn band_seeds_differ() {
        assert_ne!(band_seed(0, 0), band_seed(0, 1));
        assert_eq!(band_seed(5, 3), band_seed(5, 3));
    }
}
