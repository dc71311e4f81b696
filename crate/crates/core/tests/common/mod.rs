//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths being checked.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inverse-transform Weibull draws.
pub fn weibull_sample(seed: u64, n: usize, lambda: f64, kappa: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            lambda * (-u.ln()).powf(1.0 / kappa)
        })
        .collect()
}

pub fn weibull_log_density(d: f64, lambda: f64, kappa: f64) -> f64 {
    let x = d / lambda;
    (kappa / lambda * x.powf(kappa - 1.0) * (-x.powf(kappa)).exp()).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct GridMax {
    pub log_likelihood: f64,
    pub kappa: f64,
    pub lambda: f64,
}

/// Exhaustive maximization of the exact two-parameter log-likelihood over
/// kappa in (0, kappa_max] and lambda in (0, lambda_max] at spacing `step`.
/// The sum over data is factored through `sum d^kappa`, which is exact.
pub fn grid_oracle(data: &[f64], kappa_max: f64, lambda_max: f64, step: f64) -> GridMax {
    let n = data.len() as f64;
    let sum_log: f64 = data.iter().map(|d| d.ln()).sum();
    let n_lambda = (lambda_max / step).round() as usize;
    let log_lambdas: Vec<f64> = (1..=n_lambda).map(|i| (i as f64 * step).ln()).collect();
    let n_kappa = (kappa_max / step).round() as usize;
    let mut best = GridMax {
        log_likelihood: f64::NEG_INFINITY,
        kappa: f64::NAN,
        lambda: f64::NAN,
    };
    for ik in 1..=n_kappa {
        let kappa = ik as f64 * step;
        let s: f64 = data.iter().map(|d| d.powf(kappa)).sum();
        let base = n * kappa.ln() + (kappa - 1.0) * sum_log;
        for (il, &ll_lambda) in log_lambdas.iter().enumerate() {
            let ll = base - n * kappa * ll_lambda - s * (-kappa * ll_lambda).exp();
            if ll > best.log_likelihood {
                best = GridMax {
                    log_likelihood: ll,
                    kappa,
                    lambda: (il + 1) as f64 * step,
                };
            }
        }
    }
    best
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}
