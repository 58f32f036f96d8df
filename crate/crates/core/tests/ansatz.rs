use num_complex::Complex64;
use phasewave::ansatz::{fit_loss, fit_train, AnsatzForm, CoupledAnsatz, FrequencyGrid, SampleSet};
use phasewave::nn::{Mlp, TrainConfig};
use proptest::prelude::*;
use std::f64::consts::PI;

fn random_ansatz(form: AnsatzForm, freqs: &[f64], seed: u64) -> CoupledAnsatz {
    CoupledAnsatz::new(form, FrequencyGrid::select(freqs).unwrap(), &[1, 6, 6, 1], 1.0, seed).unwrap()
}

#[test]
fn second_derivative_matches_finite_differences() {
    let a = random_ansatz(AnsatzForm::Complex, &[-7.0, 0.0, 4.0, 12.0], 5);
    let h = 1e-4;
    for i in 0..21 {
        let x = -1.0 + 0.1 * i as f64;
        let t = a.eval_with_derivs(x).unwrap();
        let d1p = a.eval_with_derivs(x + h).unwrap().d1;
        let d1m = a.eval_with_derivs(x - h).unwrap().d1;
        let fd2 = (d1p - d1m) / (2.0 * h);
        let vp = a.eval(&[x + h]).unwrap();
        let vm = a.eval(&[x - h]).unwrap();
        let (vp2, vm2) = (a.eval(&[x + 2.0 * h]).unwrap(), a.eval(&[x - 2.0 * h]).unwrap());
        let fd1 = (8.0 * (vp - vm) - (vp2 - vm2)) / (12.0 * h);
        assert!(
            (t.d1 - fd1).norm() <= 1e-5 * t.d1.norm().max(1.0),
            "x={x}: d1 {} vs {fd1}",
            t.d1
        );
        assert!(
            (t.d2 - fd2).norm() <= 1e-5 * t.d2.norm().max(1.0),
            "x={x}: d2 {} vs {fd2}",
            t.d2
        );
        assert_eq!(t.value, a.eval(&[x]).unwrap());
    }
}

#[test]
fn phase_frame_is_linear() {
    let pair = random_ansatz(AnsatzForm::Complex, &[-3.0, 9.0], 8);
    let first = CoupledAnsatz::from_nets(
        AnsatzForm::Complex,
        FrequencyGrid::select(&[-3.0]).unwrap(),
        pair.nets()[..2].to_vec(),
    )
    .unwrap();
    let second = CoupledAnsatz::from_nets(
        AnsatzForm::Complex,
        FrequencyGrid::select(&[9.0]).unwrap(),
        pair.nets()[2..].to_vec(),
    )
    .unwrap();
    for x in [-0.8, -0.2, 0.0, 0.45, 1.3] {
        let sum = first.eval(&[x]).unwrap() + second.eval(&[x]).unwrap();
        assert!((pair.eval(&[x]).unwrap() - sum).norm() < 1e-14);
    }
}

#[test]
fn fit_loss_is_permutation_invariant() {
    // Two-dimensional grids keep their order, so a permutation is observable.
    let flat = [0.0, 0.0, 2.0, 1.0, -1.0, 3.0];
    let grid = FrequencyGrid::from_vectors(2, &flat).unwrap();
    let a = CoupledAnsatz::new(AnsatzForm::Complex, grid, &[2, 5, 1], 1.0, 1).unwrap();
    let perm = [2usize, 0, 1];
    let pflat: Vec<f64> = perm.iter().flat_map(|&m| flat[2 * m..2 * m + 2].to_vec()).collect();
    let pnets: Vec<Mlp> = perm.iter().flat_map(|&m| a.nets()[2 * m..2 * m + 2].to_vec()).collect();
    let b = CoupledAnsatz::from_nets(
        AnsatzForm::Complex,
        FrequencyGrid::from_vectors(2, &pflat).unwrap(),
        pnets,
    )
    .unwrap();
    let data = SampleSet::uniform_random(&[(-1.0, 1.0), (-1.0, 1.0)], 40, 3, |x| (x[0] * x[1]).into()).unwrap();
    let (la, lb) = (fit_loss(&a, &data, 0.0).unwrap(), fit_loss(&b, &data, 0.0).unwrap());
    assert!((la - lb).abs() <= 1e-12 * la);
}

#[test]
fn cosine_fit_reaches_one_percent() {
    let data = SampleSet::uniform_random(&[(-PI, PI)], 2000, 21, |x| (5.0 * x[0]).cos().into()).unwrap();
    let mut a = random_ansatz(AnsatzForm::Real, &[0.0, 5.0], 4);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 100,
        lr: 0.002,
        seed: 4,
        ..TrainConfig::default()
    };
    fit_train(&mut a, &data, &cfg).unwrap();
    let test = SampleSet::evenly_spaced(-PI, PI, 10_000, |x| (5.0 * x).cos().into()).unwrap();
    let approx = a.eval_many(test.xs()).unwrap();
    let num: f64 = approx.iter().zip(test.ys()).map(|(t, y)| (t - y).norm_sqr()).sum();
    let den: f64 = test.ys().iter().map(|y| y.norm_sqr()).sum();
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-2, "relative L2 error {rel}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn real_form_has_zero_imaginary_part(seed in 0u64..1000, x in -5.0f64..5.0) {
        let a = random_ansatz(AnsatzForm::Real, &[0.0, 2.5, 40.0], seed);
        prop_assert_eq!(a.eval(&[x]).unwrap().im, 0.0);
        let t = a.eval_with_derivs(x).unwrap();
        prop_assert_eq!(t.d2.im, 0.0);
    }

    #[test]
    fn batched_evaluation_matches_pointwise(seed in 0u64..1000, xs in prop::collection::vec(-2.0f64..2.0, 1..40)) {
        let a = random_ansatz(AnsatzForm::Complex, &[-5.0, 0.0, 30.0], seed);
        let many = a.eval_many(&xs).unwrap();
        for (x, t) in xs.iter().zip(&many) {
            let one: Complex64 = a.eval(&[*x]).unwrap();
            prop_assert!((one - t).norm() <= 1e-12 * (1.0 + one.norm()));
        }
    }
}
