use kbr::metrics::{convergence_study, median, noise_study, Method, StudyConfig, TestFunction};

#[test]
fn median_error_non_decreasing_in_noise() {
    let levels = [0.0, 0.01, 0.02, 0.05];
    let methods = [Method::KbrExplicit, Method::KbrImplicit, Method::Spline];
    let seeds: Vec<u64> = (1..=5).collect();
    let cfg = StudyConfig { n_test: 1000, ..Default::default() };
    let rows = noise_study(TestFunction::Camel1d, 500, &levels, &methods, &seeds, &cfg).unwrap();
    for m in methods {
        for grad in [true, false] {
            let meds: Vec<f64> = levels
                .iter()
                .map(|&s| {
                    let v = rows.iter().filter(|r| r.method == m && r.s == s).filter_map(|r| if grad { r.rmse_grad } else { r.rmse_lap });
                    median(v.collect()).unwrap()
                })
                .collect();
            assert!(meds.windows(2).all(|w| w[1] >= w[0]), "{m} grad={grad}: {meds:?}");
        }
    }
}

#[test]
fn kbr_comparable_to_finite_differences() {
    let seeds = [1, 2, 3];
    let cfg = StudyConfig { n_test: 1000, ..Default::default() };
    let methods = [Method::KbrExplicit, Method::Fd];
    let rows = convergence_study(TestFunction::Camel1d, &[300, 1000, 3000], &methods, &seeds, &cfg).unwrap();
    for n in [300, 1000, 3000] {
        let med = |m| median(rows.iter().filter(|r| r.n == n && r.method == m).filter_map(|r| r.rmse_grad).collect()).unwrap();
        let (kbr, fd) = (med(Method::KbrExplicit), med(Method::Fd));
        assert!(kbr <= 10.0 * fd, "N = {n}: kbr {kbr:e}, fd {fd:e}");
    }
}
