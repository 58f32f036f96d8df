use num_complex::Complex64;
use phasewave::ansatz::{AnsatzForm, CoupledAnsatz, FrequencyGrid};
use phasewave::integral::*;
use phasewave::nn::TrainConfig;
use phasewave::pde::{CollocationSet, HelmholtzProblem, ScalarFn};
use phasewave::reference::{fd_solve, FdOptions, Grid1D};

fn kernels() -> Vec<GreenKernel> {
    let mut out = Vec::new();
    for lambda in [3.0, 100.0] {
        out.push(GreenKernel::exterior(lambda).unwrap());
        out.push(GreenKernel::interior_dirichlet(lambda).unwrap());
    }
    out
}

#[test]
fn kernels_solve_the_homogeneous_equation_with_unit_jump() {
    let h = 1e-4;
    for k in kernels() {
        let l2 = k.lambda() * k.lambda();
        for &xp in &[-0.6, 0.0, 0.35] {
            for i in 0..=40 {
                let x = -0.95 + 0.0475 * i as f64;
                if (x - xp).abs() < 10.0 * h {
                    continue;
                }
                let d2 = (k.eval(x + h, xp) - 2.0 * k.eval(x, xp) + k.eval(x - h, xp)) / (h * h);
                let res = (d2 + k.eval(x, xp) * l2).norm();
                assert!(res <= 1e-3 * l2, "{k:?} residual {res} at ({x}, {xp})");
            }
            // Second-order one-sided derivatives on each side of the diagonal.
            let s = 1e-6;
            let g = |t: f64| k.eval(xp + t, xp);
            let right = (-3.0 * g(0.0) + 4.0 * g(s) - g(2.0 * s)) / (2.0 * s);
            let left = (3.0 * g(0.0) - 4.0 * g(-s) + g(-2.0 * s)) / (2.0 * s);
            let jump = right - left;
            assert!((jump - 1.0).norm() <= 1e-3, "{k:?} jump {jump}");
        }
    }
}

#[test]
fn kernels_are_symmetric() {
    for k in kernels() {
        for i in 0..30 {
            let x = -1.0 + 0.069 * i as f64;
            let xp = 0.91 - 0.057 * i as f64;
            assert_eq!(k.eval(x, xp), k.eval(xp, x));
        }
    }
}

#[test]
fn gauss_legendre_exactness() {
    for order in 2..=40 {
        let q = QuadratureRule::gauss_legendre(order).unwrap();
        let top = 2 * order as i32 - 1;
        let odd = q.integrate(0.0, 1.0, |x| x.powi(top));
        assert!((odd - 1.0 / (top + 1) as f64).abs() <= 1e-12, "order {order}: {odd}");
        let full = q.integrate(-1.0, 1.0, |x| x.powi(top - 1));
        assert!((full - 2.0 / top as f64).abs() <= 1e-12, "order {order}: {full}");
        assert!((q.weights().iter().sum::<f64>() - 2.0).abs() <= 1e-13);
    }
}

fn interior(lambda: f64, mu: f64, c: f64, omega: ScalarFn) -> HelmholtzProblem {
    HelmholtzProblem::dirichlet_manufactured(lambda, mu, c, omega, 1.0)
}

#[test]
fn structural_examples() {
    let p = interior(10.0, 4.0, 0.0, ScalarFn::Zero);
    let k = GreenKernel::for_problem(&p).unwrap();
    let mesh = MeshBasis::new(33).unwrap();
    let coll = CollocationSet::evenly_spaced(-1.0, 1.0, 50).unwrap();
    let quad = QuadratureRule::gauss_legendre(16).unwrap();
    let sys = assemble_system(&k, &p, &mesh, &coll, &quad).unwrap();
    assert!(sys.b.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    for i in 0..sys.rows() {
        let row: f64 = sys.a[i * 33..(i + 1) * 33].iter().sum();
        assert!((row - 1.0).abs() <= 1e-14);
    }
    assert!(QuadratureRule::gauss_legendre(1).is_err());

    // Zero ansatz leaves ||f_G||^2.
    let zero = CoupledAnsatz::from_nets(
        AnsatzForm::Real,
        FrequencyGrid::select(&[0.0]).unwrap(),
        vec![
            phasewave::nn::Mlp::zeros(&[1, 3, 1]).unwrap(),
            phasewave::nn::Mlp::zeros(&[1, 3, 1]).unwrap(),
        ],
    )
    .unwrap();
    let expect: f64 = sys.f_g.iter().map(|z| z.norm_sqr()).sum();
    assert_eq!(integral_loss(&zero, &sys).unwrap(), expect);

    // Collocation on the nodes: A is the identity and f_G is a fixed point.
    let on_nodes = CollocationSet::new(mesh.nodes()).unwrap();
    let sys = assemble_system(&k, &p, &mesh, &on_nodes, &quad).unwrap();
    let res = sys.residual(&sys.f_g.clone()).unwrap();
    assert!(res.iter().all(|r| r.norm() == 0.0));

    // Mismatched setups.
    let elliptic = HelmholtzProblem::elliptic(3.0, 5.0, 1.0);
    assert!(assemble_system(
        &GreenKernel::interior_dirichlet(3.0).unwrap(),
        &elliptic,
        &mesh,
        &coll,
        &quad
    )
    .is_err());
    let ext = HelmholtzProblem::exterior(10.0, 4.0, 1.0, 2.0, 1.0);
    assert!(assemble_system(&k, &ext, &mesh, &coll, &quad).is_err());
    let wide = CollocationSet::evenly_spaced(-2.0, 2.0, 10).unwrap();
    let ke = GreenKernel::exterior(10.0).unwrap();
    assert!(assemble_system(&ke, &ext, &mesh, &wide, &quad).is_err());
}

/// Adaptive Simpson on a complex integrand.
fn adaptive(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    fn rec(
        f: &dyn Fn(f64) -> Complex64,
        a: f64,
        b: f64,
        fa: Complex64,
        fm: Complex64,
        fb: Complex64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Complex64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
        let delta = left + right - whole;
        if depth == 0 || delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[test]
fn psi_rows_sum_to_kernel_moment() {
    let cases = [
        (
            interior(10.0, 4.0, 1.0, ScalarFn::SinQuadratic { m: 1.0 }),
            GreenKernel::interior_dirichlet(10.0).unwrap(),
        ),
        (
            interior(100.0, 200.0, 1.0, ScalarFn::SinQuadratic { m: 3.0 }),
            GreenKernel::interior_dirichlet(100.0).unwrap(),
        ),
        (
            HelmholtzProblem::exterior(100.0, 200.0, 1.0, 2.0, 1.0),
            GreenKernel::exterior(100.0).unwrap(),
        ),
    ];
    let mesh = MeshBasis::new(64).unwrap();
    let coll = CollocationSet::evenly_spaced(-1.0, 1.0, 21).unwrap();
    let quad = QuadratureRule::gauss_legendre(16).unwrap();
    for (p, k) in cases {
        let sys = assemble_system(&k, &p, &mesh, &coll, &quad).unwrap();
        for (i, &x) in coll.xs().iter().enumerate() {
            let sum: Complex64 = sys.b[i * 64..(i + 1) * 64].iter().sum();
            let g = |s: f64| k.eval(x, s) * p.omega.eval(s);
            let oracle = adaptive(&g, -1.0, x, 1e-14) + adaptive(&g, x, 1.0, 1e-14);
            assert!((sum - oracle).norm() <= 1e-10, "{k:?} x={x}: {sum} vs {oracle}");
        }
    }
}

fn residual_rms(p: &HelmholtzProblem, m: usize, u: &dyn Fn(f64) -> Complex64) -> f64 {
    let k = GreenKernel::for_problem(p).unwrap();
    let mesh = MeshBasis::new(m).unwrap();
    // Collocation points avoid every node of the meshes used below.
    let coll = CollocationSet::new((0..200).map(|i| -0.995 + 0.00997 * i as f64 + 1e-4).collect()).unwrap();
    let sys = assemble_system(&k, p, &mesh, &coll, &QuadratureRule::gauss_legendre(16).unwrap()).unwrap();
    let nodal: Vec<Complex64> = mesh.nodes().iter().map(|&x| u(x)).collect();
    let r = sys.residual(&nodal).unwrap();
    (r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64).sqrt()
}

#[test]
fn discretization_residual_is_second_order() {
    let cases = [
        (
            interior(10.0, 5.0, 20.0, ScalarFn::SinQuadratic { m: 1.0 }),
            1 << 16,
            [33usize, 65, 129],
        ),
        (
            interior(100.0, 200.0, 1000.0, ScalarFn::SinQuadratic { m: 100.0 }),
            1 << 17,
            [257, 513, 1025],
        ),
    ];
    for (p, n_fd, ms) in cases {
        let fd = fd_solve(&p, &Grid1D::new(-1.0, 1.0, n_fd).unwrap(), FdOptions { strict: true }).unwrap();
        let u = |x: f64| fd.interpolate(x);
        let r: Vec<f64> = ms.iter().map(|&m| residual_rms(&p, m, &u)).collect();
        for w in r.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (3.5..=4.5).contains(&ratio),
                "lambda {}: ratio {ratio} from {r:?}",
                p.lambda
            );
        }
    }
}

#[test]
fn zero_coefficient_training_reproduces_source_term() {
    let p = interior(5.0, 3.0, 0.0, ScalarFn::Zero);
    let k = GreenKernel::for_problem(&p).unwrap();
    let mesh = MeshBasis::new(65).unwrap();
    let coll = CollocationSet::evenly_spaced(-1.0, 1.0, 128).unwrap();
    let sys = assemble_system(&k, &p, &mesh, &coll, &QuadratureRule::gauss_legendre(16).unwrap()).unwrap();
    let mut a = CoupledAnsatz::new(
        AnsatzForm::Real,
        FrequencyGrid::select(&[0.0]).unwrap(),
        &[1, 20, 20, 1],
        1.0,
        0,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 1000,
        batch_size: 16,
        lr: 0.005,
        lr_decay: 0.1,
        ..TrainConfig::default()
    };
    let hist = solve_integral(&p, &k, &mut a, &sys, &cfg).unwrap();
    assert!(hist.last().unwrap() < &hist[0]);
    let t = a.eval_many(coll.xs()).unwrap();
    let num: f64 = t.iter().zip(&sys.f_g).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = sys.f_g.iter().map(|z| z.norm_sqr()).sum();
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-2, "rel L2 {rel}");

    let other = GreenKernel::interior_dirichlet(5.5).unwrap();
    assert!(solve_integral(&p, &other, &mut a, &sys, &cfg).is_err());
}

#[test]
fn cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = interior(10.0, 4.0, 3.0, ScalarFn::SinQuadratic { m: 2.0 });
    let k = GreenKernel::for_problem(&p).unwrap();
    let mesh = MeshBasis::new(17).unwrap();
    let coll = CollocationSet::evenly_spaced(-1.0, 1.0, 23).unwrap();
    let quad = QuadratureRule::gauss_legendre(8).unwrap();
    let fresh = assemble_system(&k, &p, &mesh, &coll, &quad).unwrap();
    let first = assemble_system_cached(&k, &p, &mesh, &coll, &quad, dir.path()).unwrap();
    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(files.len(), 1);
    let second = assemble_system_cached(&k, &p, &mesh, &coll, &quad, dir.path()).unwrap();
    assert_eq!(first, fresh);
    assert_eq!(second, fresh);

    // A truncated file is ignored and rewritten.
    let bytes = std::fs::read(&files[0]).unwrap();
    std::fs::write(&files[0], &bytes[..100]).unwrap();
    let third = assemble_system_cached(&k, &p, &mesh, &coll, &quad, dir.path()).unwrap();
    assert_eq!(third, fresh);
    assert_eq!(std::fs::read(&files[0]).unwrap(), bytes);

    let other = system_key(&k, &p, &mesh, &coll, &QuadratureRule::gauss_legendre(9).unwrap());
    assert_ne!(other, system_key(&k, &p, &mesh, &coll, &quad));
}

#[test]
fn integral_form_trains_better_at_equal_budget() {
    // Same ansatz init, collocation points and optimizer for both forms on
    // the lambda = 100 interior problem, 300 epochs each.
    let n = 1025;
    let p = HelmholtzProblem::dirichlet_manufactured(
        100.0,
        200.0,
        1000.0,
        ScalarFn::SinQuadratic { m: 100.0 },
        HelmholtzProblem::default_rho(n),
    );
    let grid = FrequencyGrid::select(&[0.0, 90.0, 100.0, 110.0, 190.0, 200.0, 210.0]).unwrap();
    let fresh = || CoupledAnsatz::new(AnsatzForm::Real, grid.clone(), &[1, 20, 20, 20, 20, 1], 1.0, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 128,
        lr: 0.005,
        lr_decay: 0.02,
        ..TrainConfig::default()
    };
    let coll = CollocationSet::evenly_spaced(-1.0, 1.0, n).unwrap();

    let mut a = fresh();
    let diff = phasewave::pde::solve(&p, &mut a, &coll, &cfg).unwrap();

    let k = GreenKernel::for_problem(&p).unwrap();
    let mesh = MeshBasis::new(n).unwrap();
    let sys = assemble_system(&k, &p, &mesh, &coll, &QuadratureRule::gauss_legendre(16).unwrap()).unwrap();
    let mut b = fresh();
    let int = solve_integral(&p, &k, &mut b, &sys, &cfg).unwrap();

    let (ld, li) = (*diff.last().unwrap(), *int.last().unwrap());
    assert!(li < ld, "final training loss: integral {li:.3e}, residual {ld:.3e}");

    // Error against a fine FD solution, sampled every 64th node.
    let fd = fd_solve(&p, &Grid1D::new(-1.0, 1.0, 1 << 16).unwrap(), FdOptions::default()).unwrap();
    let idx: Vec<usize> = (0..=1024).map(|i| 64 * i).collect();
    let xs: Vec<f64> = idx.iter().map(|&i| fd.grid.x(i)).collect();
    let rel = |t: &CoupledAnsatz| {
        let v = t.eval_many(&xs).unwrap();
        let num: f64 = v.iter().zip(&idx).map(|(v, &i)| (v - fd.values[i]).norm_sqr()).sum();
        let den: f64 = idx.iter().map(|&i| fd.values[i].norm_sqr()).sum();
        (num / den).sqrt()
    };
    let (ed, ei) = (rel(&a), rel(&b));
    assert!(ei < ed, "rel L2 vs FD: integral {ei:.3e}, residual {ed:.3e}");
}
