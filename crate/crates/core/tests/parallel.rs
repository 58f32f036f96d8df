use num_complex::Complex64;
use phasewave::ansatz::{AnsatzForm, CoupledAnsatz, FrequencyGrid, SampleSet};
use phasewave::nn::{Mlp, TrainConfig};
use phasewave::parallel::*;
use std::f64::consts::PI;

/// Composite Simpson rule, used as an oracle independent of the library.
fn simpson(f: impl Fn(f64) -> Complex64, a: f64, b: f64, n: usize) -> Complex64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Band kernel written out from its definition.
fn kernel(center: f64, width: f64, x: f64) -> Complex64 {
    let y = 0.5 * width * x;
    let s = if y == 0.0 { 1.0 } else { y.sin() / y };
    Complex64::from_polar(width / (2.0 * PI) * s, center * x)
}

fn uniform(a: f64, b: f64, n: usize, seed: u64, f: impl Fn(f64) -> f64) -> SampleSet {
    SampleSet::uniform_random(&[(a, b)], n, seed, |x| f(x[0]).into()).unwrap()
}

#[test]
fn kernel_symbol_is_band_indicator() {
    // Numeric Fourier transform of K (center 0, width 5) on a long grid.
    let spec = BandSpec::new(0.0, 5.0, 1e9).unwrap();
    let (len, h) = (400.0, 0.02);
    let n = (2.0 * len / h) as usize;
    let samples: Vec<(f64, Complex64)> = (0..=n)
        .map(|i| {
            let x = -len + i as f64 * h;
            (x, bandpass_kernel(&spec, x))
        })
        .collect();
    let symbol = |k: f64| -> Complex64 { samples.iter().map(|&(x, v)| v * Complex64::from_polar(h, -k * x)).sum() };
    let mut k = -6.0;
    while k <= 6.0 {
        let s = symbol(k);
        if k.abs() < 2.0 {
            assert!((s - 1.0).norm() <= 0.02, "k={k}: {s}");
        } else if k.abs() > 3.0 {
            assert!(s.norm() <= 0.02, "k={k}: {s}");
        }
        k += 0.25;
    }
}

#[test]
fn cosine_band_with_short_truncation_matches_truncated_response() {
    let data = uniform(-PI, PI, 10_000, 1, |x| (3.0 * x).cos());
    let spec = BandSpec::new(5.0, 5.0, 2.0).unwrap();
    let band = extract_band(&data, &spec, BandQuadrature::CellLength).unwrap();
    let values = band.band_values();
    let mut worst: f64 = 0.0;
    for i in 0..data.len() {
        let x = data.x(i)[0];
        if x.abs() > PI - 2.0 {
            continue;
        }
        let exact = simpson(|s| kernel(5.0, 5.0, s) * (3.0 * (x - s)).cos(), -2.0, 2.0, 4000);
        worst = worst.max((values[i] - exact).norm());
    }
    assert!(worst <= 5e-2, "max error {worst}");
}

#[test]
fn cosine_band_recovers_half_tone() {
    // Wider data so that a delta = 4 window fits around |x| <= pi.
    let data = uniform(-3.0 * PI, 3.0 * PI, 30_000, 2, |x| (3.0 * x).cos());
    let spec = BandSpec::new(5.0, 5.0, 4.0).unwrap();
    let at: Vec<f64> = (0..201).map(|i| -PI + i as f64 * PI / 100.0).collect();
    let shifted = shifted_band_at(&data, &spec, BandQuadrature::CellLength, &at).unwrap();
    for (x, v) in at.iter().zip(&shifted) {
        let exact = Complex64::from_polar(0.5, -2.0 * x);
        assert!((v - exact).norm() <= 5e-2, "x={x}: {v} vs {exact}");
    }
}

#[test]
fn empty_band_and_dc_band() {
    let data = uniform(-PI, PI, 10_000, 3, |x| (3.0 * x).cos());
    let far = BandSpec::new(50.0, 5.0, 2.0).unwrap();
    let band = extract_band(&data, &far, BandQuadrature::CellLength).unwrap();
    assert!(band.shifted.ys().iter().all(|v| v.norm() <= 5e-2));

    let ones = uniform(-PI, PI, 10_000, 4, |_| 1.0);
    let dc = BandSpec::new(0.0, 5.0, 2.0).unwrap();
    let band = extract_band(&ones, &dc, BandQuadrature::CellLength).unwrap();
    for i in 0..ones.len() {
        if ones.x(i)[0].abs() <= PI - 2.0 {
            assert!((band.shifted.y(i) - 1.0).norm() <= 5e-2, "{}", band.shifted.y(i));
        }
    }
}

fn tones(x: f64) -> f64 {
    (3.0 * x).cos() + 0.5 * (21.0 * x).sin() + 2.0 * (42.0 * x).cos()
}

#[test]
fn band_pass_oracle_and_reconstruction() {
    // delta = 20 * 2 pi / dk keeps the truncation ripple well below the tolerance.
    let data = uniform(-22.0, 22.0, 60_000, 5, tones);
    let centers = [-40.0, -20.0, 0.0, 20.0, 40.0];
    let specs: Vec<BandSpec> = centers
        .iter()
        .map(|&c| BandSpec::new(c, 10.0, 4.0 * PI).unwrap())
        .collect();
    let at: Vec<f64> = (0..161).map(|i| -8.0 + 0.1 * i as f64).collect();
    let bands: Vec<Vec<Complex64>> = specs
        .iter()
        .map(|s| shifted_band_at(&data, s, BandQuadrature::CellLength, &at).unwrap())
        .collect();
    let i = Complex64::i();
    let component = |c: f64, x: f64| -> Complex64 {
        match c as i64 {
            0 => (3.0 * x).cos().into(),
            20 => 0.5 * Complex64::from_polar(1.0, 21.0 * x) / (2.0 * i),
            -20 => -0.5 * Complex64::from_polar(1.0, -21.0 * x) / (2.0 * i),
            40 => Complex64::from_polar(1.0, 42.0 * x),
            -40 => Complex64::from_polar(1.0, -42.0 * x),
            _ => unreachable!(),
        }
    };
    for (k, x) in at.iter().enumerate() {
        let mut sum = Complex64::new(0.0, 0.0);
        for (j, s) in specs.iter().enumerate() {
            let fj = bands[j][k] * Complex64::from_polar(1.0, s.center * x);
            let exact = component(s.center, *x);
            assert!(
                (fj - exact).norm() <= 5e-2,
                "band {} at x={x}: {fj} vs {exact}",
                s.center
            );
            sum += fj;
        }
        assert!((sum - tones(*x)).norm() <= 5e-2, "reconstruction at x={x}");
        // Real data: the band at -w is the conjugate of the band at +w.
        assert!((bands[0][k] - bands[4][k].conj()).norm() <= 1e-10);
        assert!((bands[1][k] - bands[3][k].conj()).norm() <= 1e-10);
    }
}

#[test]
fn monte_carlo_weights_are_selectable() {
    let data = uniform(-15.0, 15.0, 20_000, 6, |x| (3.0 * x).cos());
    let spec = BandSpec::new(0.0, 10.0, 2.0 * PI).unwrap();
    let at = [-1.0, 0.0, 2.0];
    let mc = shifted_band_at(&data, &spec, BandQuadrature::MonteCarlo, &at).unwrap();
    for (x, v) in at.iter().zip(&mc) {
        // Statistical quadrature: a looser check than the cell-length rule.
        assert!((v - (3.0 * x).cos()).norm() <= 0.15, "x={x}: {v}");
    }
}

fn const_subnet(re: f64, im: f64) -> CoupledAnsatz {
    let net = |v: f64| {
        let mut n = Mlp::zeros(&[1, 2, 1]).unwrap();
        n.bias_mut(1)[0] = v;
        n
    };
    CoupledAnsatz::from_nets(
        AnsatzForm::Complex,
        FrequencyGrid::select(&[0.0]).unwrap(),
        vec![net(re), net(im)],
    )
    .unwrap()
}

fn task_with(center: f64, subnet: CoupledAnsatz) -> BandTask {
    let data = uniform(-1.0, 1.0, 10, 0, |_| 0.0);
    let band = extract_band(
        &data,
        &BandSpec::new(center, 1.0, 1.0).unwrap(),
        BandQuadrature::CellLength,
    )
    .unwrap();
    let mut task = BandTask::new(band, &[1, 2, 1], 1.0, 0).unwrap();
    task.subnet = subnet;
    task
}

#[test]
fn assembly_examples() {
    let single = task_with(0.0, const_subnet(0.3, -0.7));
    assert_eq!(
        assemble(std::slice::from_ref(&single), 0.4).unwrap(),
        Complex64::new(0.3, -0.7)
    );
    let pair = [
        task_with(3.0, const_subnet(0.5, 0.0)),
        task_with(-3.0, const_subnet(0.5, 0.0)),
    ];
    for x in [-1.0, 0.2, 2.5] {
        let v = assemble(&pair, x).unwrap();
        assert!((v - (3.0 * x).cos()).norm() < 1e-15);
    }
}

fn fit_task(target: impl Fn(f64) -> Complex64, epochs: usize) -> BandTask {
    let data = SampleSet::uniform_random(&[(-PI, PI)], 1000, 9, |x| target(x[0])).unwrap();
    let band = BandData {
        spec: BandSpec::new(0.0, 5.0, 2.0).unwrap(),
        shifted: data,
        quality: BandQuality {
            min_window: 0,
            max_window: 0,
            mean_window: 0.0,
            sparse: vec![],
        },
    };
    let mut task = BandTask::new(band, &[1, 40, 40, 40, 40, 1], 1.0, 17).unwrap();
    let cfg = TrainConfig {
        epochs,
        batch_size: 100,
        lr: 0.002,
        ..TrainConfig::default()
    };
    train_band(&mut task, &cfg).unwrap();
    task
}

#[test]
fn zero_band_trains_to_zero() {
    let task = fit_task(|_| Complex64::new(0.0, 0.0), 100);
    let last = *task.history.last().unwrap();
    assert!(last <= 1e-6, "loss {last}");
}

#[test]
fn shifted_tone_is_learned() {
    let target = |x: f64| Complex64::from_polar(0.5, -2.0 * x);
    let task = fit_task(target, 500);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..10_000 {
        let x = -PI + 2.0 * PI * i as f64 / 9999.0;
        num += (task.subnet.eval(&[x]).unwrap() - target(x)).norm_sqr();
        den += target(x).norm_sqr();
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 2e-2, "relative L2 {rel}");
}

#[test]
fn band_training_is_independent_of_thread_count() {
    let data = uniform(-PI, PI, 400, 10, tones);
    let make = || -> Vec<BandTask> {
        [-20.0, 0.0, 20.0]
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let band =
                    extract_band(&data, &BandSpec::new(c, 10.0, 2.0).unwrap(), BandQuadrature::CellLength).unwrap();
                BandTask::new(band, &[1, 8, 8, 1], 1.0, band_seed(3, j)).unwrap()
            })
            .collect()
    };
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 50,
        ..TrainConfig::default()
    };
    let mut one = make();
    let mut many = make();
    train_bands(&mut one, &cfg, Some(1)).unwrap();
    train_bands(&mut many, &cfg, Some(8)).unwrap();
    assert_eq!(one, many);
    // Training a band alone gives the same result as in a batch.
    let mut alone = make().remove(1);
    train_band(&mut alone, &cfg).unwrap();
    assert_eq!(alone, one[1]);
}
