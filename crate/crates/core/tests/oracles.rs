mod common;

use common::oracles;
use confkern_core::conformal::{ConformalOptions, ConformalSpec, FittedConformal};
use confkern_core::datasets::{sample_points, trial_rng, Boundary};
use confkern_core::geometry::{
    conformal_metric, gaussian_metric_closed, gc_metric_closed, induced_metric_fd,
    null_direction_residual, relative_frobenius, DEFAULT_STEP,
};
use confkern_core::linalg::{symmetric_eigenvalues, Matrix};
use confkern_core::stats::{paired_ttest, t_cdf, t_two_sided_p};
use confkern_core::svm::{train, SvmParams, TrainSet};
use confkern_core::{KernelFn, KernelSpec, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
#[allow(clippy::needless_range_loop)]
fn eigenvalues_match_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1usize, 2, 3, 7, 20, 64] {
        for _ in 0..5 {
            let mut rows = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    rows[i][j] = v;
                    rows[j][i] = v;
                }
            }
            let ours = symmetric_eigenvalues(&Matrix::from_rows(&rows));
            let na = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-11, "n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn ttest_example_matches_quadrature() {
    let a = [1.2, -0.8, 0.5, -0.1, 1.0];
    let b = [0.0; 5];
    let r = paired_ttest(&a, &b).unwrap();
    let oracle = oracles::t_two_sided_p(r.t, r.df);
    assert!(
        (r.p_value - oracle).abs() < 1e-10,
        "{} vs {oracle}",
        r.p_value
    );
    // Frozen from the quadrature oracle.
    assert!((r.p_value - 0.382_026_165_682_123_2).abs() < 1e-12);
    assert!((r.t - 0.981_250_680_241_291_4).abs() < 1e-12);
}

#[test]
fn t_tails_match_quadrature() {
    for &(t, df) in &[
        (2.5, 7.0),
        (0.1, 1.0),
        (4.0, 19.0),
        (-1.3, 3.5),
        (30.0, 2.0),
        (0.7, 120.0),
    ] {
        let ours = t_two_sided_p(t, df);
        let oracle = oracles::t_two_sided_p(t, df);
        assert!(
            (ours - oracle).abs() < 1e-10,
            "t={t} df={df}: {ours} vs {oracle}"
        );
    }
    assert!((t_two_sided_p(2.5, 7.0) - 0.040_992_218_585_752_87).abs() < 1e-12);
    assert!((t_cdf(-1.3, 3.5) - 0.136_297_707_902_184_98).abs() < 1e-12);
}

#[test]
fn smo_matches_projected_gradient() {
    for trial in 0..5u64 {
        let mut rng = trial_rng(77, trial);
        let ts = loop {
            let ts = sample_points(Boundary::Sin, 20, &mut rng);
            if ts.labels.contains(&1) && ts.labels.contains(&-1) {
                break ts;
            }
        };
        let k = KernelSpec::gaussian(8.0).unwrap();
        let m = train(
            &ts,
            &KernelFn::from(k),
            &SvmParams {
                c: 10.0,
                tol: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        let gram: Vec<Vec<f64>> = ts
            .points
            .iter()
            .map(|a| {
                ts.points
                    .iter()
                    .map(|b| k.eval_pair(a, b).unwrap())
                    .collect()
            })
            .collect();
        let y: Vec<f64> = ts.labels.iter().map(|&l| l as f64).collect();
        let oracle = oracles::dual_objective_pg(&gram, &y, 10.0, 200_000);
        assert!(
            (m.objective - oracle).abs() < 1e-4,
            "trial {trial}: {} vs {oracle}",
            m.objective
        );
    }
}

fn random_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        if x.iter().map(|v| v * v).sum::<f64>() > 0.1 {
            return x;
        }
    }
}

#[test]
fn gc_metric_closed_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..30 {
        let n = 2 + trial % 4;
        let x = random_point(&mut rng, n);
        let gamma = 0.2 + rng.random::<f64>() * 3.0;
        let closed = gc_metric_closed(gamma, &x).unwrap();
        let fd = induced_metric_fd(
            &KernelSpec::gaussian_cosine(gamma).unwrap(),
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(relative_frobenius(&fd.g, &closed.g) < 1e-4);
        assert!(null_direction_residual(&closed.g, &x) < 1e-10);
        let ev = symmetric_eigenvalues(&closed.g);
        let norm2 = x.iter().map(|v| v * v).sum::<f64>();
        assert!(ev[0] > -1e-12 && ev[n - 1] <= gamma / norm2 * (1.0 + 1e-12));
    }
}

#[test]
fn gaussian_metric_matches_symbolic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let x = random_point(&mut rng, 3);
        let fd = induced_metric_fd(&KernelSpec::gaussian(0.8).unwrap(), &x, DEFAULT_STEP).unwrap();
        assert!(relative_frobenius(&fd.g, &gaussian_metric_closed(0.8, 3)) < 1e-6);
    }
}

#[test]
fn conformal_gc_general_matches_specialised() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let svs: Vec<SparseVector> = (0..6)
        .map(|_| SparseVector::from_dense(&random_point(&mut rng, 3)))
        .collect();
    for (spec, options) in [
        (ConformalSpec::Cosine { m: 3 }, ConformalOptions::default()),
        (ConformalSpec::D2 { m: 3 }, ConformalOptions::default()),
    ] {
        let f = FittedConformal::from_support_vectors(spec, svs.clone(), options).unwrap();
        for _ in 0..10 {
            let x = random_point(&mut rng, 3);
            let gc = KernelSpec::gaussian_cosine(1.5).unwrap();
            let cm = conformal_metric(&f, &gc, &x, DEFAULT_STEP).unwrap();
            assert!(cm.grad_k.iter().all(|v| v.abs() < 1e-8));
            let spec_g = cm.gc_specialized.unwrap().g;
            assert!(relative_frobenius(&cm.general.g, &spec_g) < 1e-4);
            assert!(cm.general.g.max_asymmetry() < 1e-10);
        }
    }
}

#[test]
fn sin_labels_balanced() {
    let mut rng = trial_rng(1, 0);
    let ts: TrainSet = sample_points(Boundary::Sin, 1_000_000, &mut rng);
    let pos = ts.labels.iter().filter(|&&l| l == 1).count() as f64 / 1e6;
    assert!((pos - 0.5).abs() < 0.002, "{pos}");
}
