use kbr::derivatives::{explicit_derivatives_1d, implicit_derivatives_1d, implicit_derivatives_2d, ImplicitConfig};
use kbr::training::typical_distance;
use kbr::{KernelModel, TrainingSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sorted random points on `[lo, lo + span]` and a width `theta = k d_typ^2`
/// in normalized units.
fn setup(seed: u64, n: usize, lo: f64, span: f64, k: f64) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..n).map(|_| lo + span * rng.gen::<f64>()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (a, b) = (xs[0], xs[xs.len() - 1]);
    let unit: Vec<f64> = xs.iter().map(|x| (x - a) / (b - a)).collect();
    let d = typical_distance(&unit, 1, 5).unwrap();
    (xs, k * d * d)
}

fn model(xs: &[f64], f: impl Fn(f64) -> f64, theta: f64) -> KernelModel {
    let v: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    KernelModel::new(TrainingSet::from_1d(xs, &v).unwrap(), theta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_reproduced(
        seed in any::<u64>(), n in 10usize..40, lo in -1.0f64..1.0, span in 0.5f64..2.0,
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, lk in -0.5f64..2.0, t in 0.0f64..1.0,
    ) {
        let (xs, theta) = setup(seed, n, lo, span, 10f64.powf(lk));
        let f = |x: f64| a + b * x + c * x * x;
        let m = model(&xs, f, theta);
        let x = xs[1] + t * (xs[xs.len() - 2] - xs[1]);
        let p = m.predict_order2_exact(&[x]).unwrap();
        prop_assert!((p - f(x)).abs() <= 1e-12, "error {:e}", (p - f(x)).abs());
    }

    #[test]
    fn prediction_is_shift_equivariant(
        seed in any::<u64>(), n in 10usize..40, shift in -5.0f64..5.0, lk in -0.5f64..1.5, t in 0.0f64..1.0,
    ) {
        let (xs, theta) = setup(seed, n, 0.0, 1.0, 10f64.powf(lk));
        let f = |x: f64| (3.0 * x).sin() + x * x;
        let moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let m1 = model(&xs, f, theta);
        let v: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let m2 = KernelModel::new(TrainingSet::from_1d(&moved, &v).unwrap(), theta).unwrap();
        let x = xs[1] + t * (xs[xs.len() - 2] - xs[1]);
        let (p1, p2) = (m1.predict_order2_detailed(&[x]).unwrap(), m2.predict_order2_detailed(&[x + shift]).unwrap());
        prop_assert_eq!(p1.degenerate, p2.degenerate);
        prop_assert!((p1.value - p2.value).abs() <= 1e-12, "diff {:e}", (p1.value - p2.value).abs());
    }

    #[test]
    fn weights_normalized_and_moment_consistent(
        seed in any::<u64>(), n in 10usize..60, lk in -0.5f64..2.0, t in 0.0f64..1.0,
    ) {
        let (xs, theta) = setup(seed, n, -1.0, 2.0, 10f64.powf(lk));
        let m = model(&xs, |x| x, theta);
        let x = xs[0] + t * (xs[xs.len() - 1] - xs[0]);
        let w = m.kernel_weights(&[x]).unwrap();
        prop_assert!((w.w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        prop_assert!(w.w.iter().all(|&v| v >= 0.0));
        let lag = m.solve_lagrange_multiplier(&[x], 100).unwrap();
        prop_assert!((lag.weights.w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        if lag.converged {
            prop_assert!(lag.residual <= m.config().tol_moment);
            let affine = m.predict_order1(&[x], &lag).unwrap();
            prop_assert!((affine - x).abs() <= 1e-10, "affine error {:e}", (affine - x).abs());
        }
    }

    #[test]
    fn explicit_and_implicit_agree_on_quadratics(
        seed in any::<u64>(), b in -1.0f64..1.0, c in -1.0f64..1.0, t in 0.1f64..0.9,
    ) {
        let (xs, theta) = setup(seed, 60, 0.0, 1.0, 3.0);
        let m = model(&xs, |x| 0.5 + b * x + c * x * x, theta);
        let x = xs[0] + t * (xs[xs.len() - 1] - xs[0]);
        let e = explicit_derivatives_1d(&m, x).unwrap();
        let i = implicit_derivatives_1d(&m, x, &ImplicitConfig::default()).unwrap();
        prop_assert!((e.grad[0] - i.grad[0]).abs() <= 1e-6);
        prop_assert!((e.lap - i.lap).abs() <= 1e-6);
    }
}

#[test]
fn laplacian_is_hessian_trace_in_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<f64> = (0..800).map(|_| rng.gen::<f64>()).collect();
    let vals: Vec<f64> = pts.chunks(2).map(|p| (2.0 * p[0]).sin() * (1.0 + p[1] * p[1])).collect();
    let m = KernelModel::new(TrainingSet::new(pts, 2, vals).unwrap(), 0.004).unwrap();
    for _ in 0..20 {
        let q = [0.2 + 0.6 * rng.gen::<f64>(), 0.2 + 0.6 * rng.gen::<f64>()];
        let e = implicit_derivatives_2d(&m, q, &ImplicitConfig::default()).unwrap();
        let h = e.hessian.unwrap();
        assert_eq!(e.lap, h[0] + h[3]);
        assert_eq!(h[1], h[2]);
    }
}
