//! Quadrature, root finding, pseudo-inverses and normal maxima.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use roots::{find_root_brent, SimpleConvergency};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::link::Link;

const GL_ORDER: usize = 32;

/// Gauss-Legendre nodes and weights on [-1, 1] via the Golub-Welsch
/// eigenproblem of the Jacobi matrix.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn default_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Composite Gauss-Legendre integral of `f` over [a, b] with `panels`
/// equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = default_rule();
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        let part: f64 = nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum();
        total += half * part;
    }
    total
}

/// Root of `f` on a sign-changing bracket.
pub fn find_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let mut conv = SimpleConvergency {
        eps: tol,
        max_iter: 200,
    };
    find_root_brent(lo, hi, f, &mut conv).map_err(|e| Error::Convergence(format!("root finding failed: {e}")))
}

/// Upper tail of the chi-square distribution.
pub fn chisq_sf(x: f64, df: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    if !x.is_finite() {
        return 0.0;
    }
    ChiSquared::new(df).map_or(f64::NAN, |d| d.sf(x))
}

/// Moore-Penrose inverse of a symmetric positive semi-definite matrix and
/// its numerical rank.
pub fn pinv_sym(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * 1e-10 * n as f64;
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l > tol {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / l;
        }
    }
    (out, rank)
}

/// Covariance to correlation.
pub fn correlation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect();
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        if i == j {
            1.0
        } else if d[i] > 0.0 && d[j] > 0.0 {
            cov[(i, j)] / (d[i] * d[j])
        } else {
            0.0
        }
    })
}

/// P(max_k |Z_k| <= c) for Z ~ N(0, R) with correlation matrix `corr`.
/// Exact by quadrature up to dimension two, Monte Carlo beyond.
pub fn max_abs_normal_cdf(corr: &DMatrix<f64>, c: f64, draws: usize, seed: u64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let n = Link::Probit;
    match corr.nrows() {
        0 => 1.0,
        1 => n.cdf(c) - n.cdf(-c),
        2 => {
            let rho = corr[(0, 1)].clamp(-1.0, 1.0);
            let r = (1.0 - rho * rho).sqrt();
            if r < 1e-12 {
                return n.cdf(c) - n.cdf(-c);
            }
            integrate(
                |x| n.density(x) * (n.cdf((c - rho * x) / r) - n.cdf((-c - rho * x) / r)),
                -c,
                c,
                16,
            )
        }
        _ => {
            let draws_mat = normal_draws(corr, draws, seed);
            let hit = draws_mat.iter().filter(|z| z.iter().all(|v| v.abs() <= c)).count();
            hit as f64 / draws as f64
        }
    }
}

fn normal_draws(corr: &DMatrix<f64>, draws: usize, seed: u64) -> Vec<DVector<f64>> {
    let k = corr.nrows();
    let l = cholesky_psd(corr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|_| {
            let e = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            &l * e
        })
        .collect()
}

/// Lower factor L with L L' = A, via the eigen-decomposition when A is only
/// semi-definite.
pub fn cholesky_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = a.clone().cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d
}

/// Equicoordinate two-sided quantile c with P(max |Z_k| <= c) = level.
pub fn equicoordinate_quantile(corr: &DMatrix<f64>, level: f64, draws: usize, seed: u64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0, 1)")));
    }
    let k = corr.nrows();
    if k == 1 {
        return Link::Probit.quantile_upper(0.5 * (1.0 - level));
    }
    if k > 2 {
        // empirical quantile of the simulated maxima
        let mut m: Vec<f64> = normal_draws(corr, draws, seed)
            .iter()
            .map(|z| z.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .collect();
        m.sort_by(f64::total_cmp);
        let idx = ((level * draws as f64).ceil() as usize).clamp(1, draws) - 1;
        return Ok(m[idx]);
    }
    find_root(|c| max_abs_normal_cdf(corr, c, draws, seed) - level, 0.0, 12.0, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((int - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn composite_integral() {
        let v = integrate(f64::exp, 0.0, 3.0, 4);
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn chisq_reference() {
        assert!((chisq_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-9);
        assert!((chisq_sf(5.991_464_547_107_979, 2.0) - 0.05).abs() < 1e-9);
        assert_eq!(chisq_sf(0.0, 3.0), 1.0);
    }

    #[test]
    fn pinv_of_singular_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, r) = pinv_sym(&a);
        assert_eq!(r, 1);
        let back = &a * &p * &a;
        assert!((back - a).abs().max() < 1e-12);
    }

    #[test]
    fn max_abs_quantiles() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let c = equicoordinate_quantile(&one, 0.95, 0, 1).unwrap();
        assert!((c - 1.959_963_984_540_054).abs() < 1e-10);
        // independent pair: each coordinate at sqrt(0.95)
        let two = DMatrix::identity(2, 2);
        let c = equicoordinate_quantile(&two, 0.95, 0, 1).unwrap();
        let single = Link::Probit.quantile_upper(0.5 * (1.0 - 0.95f64.sqrt())).unwrap();
        assert!((c - single).abs() < 1e-8);
        // perfectly correlated pair collapses to one coordinate
        let perfect = DMatrix::from_element(2, 2, 1.0);
        let c = equicoordinate_quantile(&perfect, 0.95, 0, 1).unwrap();
        assert!((c - 1.959_963_984_540_054).abs() < 1e-8);
    }

    #[test]
    fn monte_carlo_max_matches_quadrature() {
        let mut r = DMatrix::identity(3, 3);
        r[(0, 1)] = 0.5;
        r[(1, 0)] = 0.5;
        let p = max_abs_normal_cdf(&r, 2.2, 200_000, 7);
        let two = r.view((0, 0), (2, 2)).into_owned();
        let n = Link::Probit;
        let exact = max_abs_normal_cdf(&two, 2.2, 0, 0) * (n.cdf(2.2) - n.cdf(-2.2));
        assert!((p - exact).abs() < 3e-3, "{p} vs {exact}");
    }
}
