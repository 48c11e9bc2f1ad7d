//! Independent reference computations shared by the test suites.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Two-sided Student-t tail by quadrature of the unnormalised density
/// `(1 + s²/ν)^{−(ν+1)/2}`. With `s = √ν·tanθ` the integrand becomes
/// `cos^{ν−1}θ` on a finite interval, and the normalisation is the same
/// integral over `[0, π/2]`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let f = move |th: f64| th.cos().powf(df - 1.0);
    let lo = (t.abs() / df.sqrt()).atan();
    integrate(&f, lo, FRAC_PI_2, 1e-15) / integrate(&f, 0.0, FRAC_PI_2, 1e-15)
}

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let resid = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if resid(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximises `Σα − ½αᵀQα` over the SVM dual feasible set by projected
/// gradient ascent with a fixed step. `k` is the kernel matrix.
pub fn dual_objective_pg(k: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> f64 {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect())
        .collect();
    let mut v = vec![1.0; n];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q[i][j] * v[j]).sum::<f64>())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / lambda.max(1e-12);
    let mut a = vec![0.0; n];
    let objective = |a: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * q[i][j] * a[j];
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>())
            .collect();
        let next: Vec<f64> = a.iter().zip(&grad).map(|(ai, gi)| ai + step * gi).collect();
        let next = project(&next, y, c);
        let moved = next
            .iter()
            .zip(&a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        a = next;
        if moved < 1e-14 {
            break;
        }
    }
    objective(&a)
}
