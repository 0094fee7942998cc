mod common;

use std::collections::HashMap;

use common::{ks_distance, ks_p_value, normal, rng};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use tramls::basis::BasisSpec;
use tramls::data::{Dataset, Response, ResponseDatum};
use tramls::features::SplineBasis;
use tramls::fit::{fit, FitOptions, FitResult};
use tramls::inference::{
    contrast_matrix, pi_confint, predict_curve, predictor, probabilistic_index, probabilistic_index_of, roc_curve,
    simultaneous_ci, CurveRequest, Target,
};
use tramls::likelihood::Predictor;
use tramls::link::Link;
use tramls::permutation::{moments, score_test_residuals, Resampling};
use tramls::simulate::{dgp_cdf, simulate_dgp};
use tramls::ModelSpec;

fn ls_fit(link: Link, seed: u64) -> FitResult {
    let d = simulate_dgp(1.0, 1.0, 500, 0, seed).unwrap();
    let basis = BasisSpec::bernstein_for(&d.responses, 6).unwrap();
    let spec = ModelSpec::new(basis, link).with_location(&["x1"]).with_scale(&["x2"]);
    fit(&d, &spec, &FitOptions::default()).unwrap()
}

fn curve(f: &FitResult, x: &[(&str, f64)], target: Target, grid: &[f64]) -> Vec<f64> {
    let req = CurveRequest {
        target,
        grid: grid.to_vec(),
        stratum: 0,
    };
    predict_curve(f, x, &req).unwrap().values
}

fn interior_grid(f: &FitResult, n: usize) -> Vec<f64> {
    let (a, b) = f.spec.basis.support();
    (1..=n).map(|k| a + (b - a) * k as f64 / (n + 1) as f64).collect()
}

#[test]
fn quantiles_invert_the_distribution_function() {
    let f = ls_fit(Link::Logit, 3);
    let grid = interior_grid(&f, 40);
    for x in [[("x1", 0.1), ("x2", 0.9)], [("x1", 0.7), ("x2", 0.2)]] {
        let p = curve(&f, &x, Target::Cdf, &grid);
        let inner: Vec<(f64, f64)> = grid
            .iter()
            .zip(&p)
            .filter(|(_, p)| **p > 1e-6 && **p < 1.0 - 1e-6)
            .map(|(y, p)| (*y, *p))
            .collect();
        let probs: Vec<f64> = inner.iter().map(|v| v.1).collect();
        let q = curve(&f, &x, Target::Quantile, &probs);
        for ((y, _), qy) in inner.iter().zip(&q) {
            assert!((y - qy).abs() < 1e-6, "{y} vs {qy}");
        }
    }
}

#[test]
fn curves_are_mutually_consistent() {
    let f = ls_fit(Link::Probit, 4);
    let grid = interior_grid(&f, 30);
    let x = [("x1", 0.4), ("x2", 0.6)];
    let cdf = curve(&f, &x, Target::Cdf, &grid);
    let sf = curve(&f, &x, Target::Survivor, &grid);
    let dens = curve(&f, &x, Target::Density, &grid);
    let haz = curve(&f, &x, Target::Hazard, &grid);
    let cumhaz = curve(&f, &x, Target::Cumhazard, &grid);
    let odds = curve(&f, &x, Target::Odds, &grid);
    for k in 0..grid.len() {
        assert!((cdf[k] + sf[k] - 1.0).abs() < 1e-12);
        assert!((haz[k] - dens[k] / sf[k]).abs() < 1e-8 * haz[k].max(1.0));
        assert!((cumhaz[k] + sf[k].ln()).abs() < 1e-10);
        assert!((odds[k] - cdf[k] / sf[k]).abs() < 1e-8 * odds[k].max(1.0));
        let e = 1e-5;
        let num =
            (curve(&f, &x, Target::Cdf, &[grid[k] + e])[0] - curve(&f, &x, Target::Cdf, &[grid[k] - e])[0]) / (2.0 * e);
        assert!((num - dens[k]).abs() < 1e-6, "{num} vs {}", dens[k]);
    }
    assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn larger_location_gives_stochastically_larger_response() {
    let f = ls_fit(Link::Logit, 5);
    let b = f.beta("x1").unwrap();
    assert!(b > 0.0);
    let grid = interior_grid(&f, 50);
    let lo = curve(&f, &[("x1", 0.0), ("x2", 0.5)], Target::Cdf, &grid);
    let hi = curve(&f, &[("x1", 1.0), ("x2", 0.5)], Target::Cdf, &grid);
    for (a, c) in lo.iter().zip(&hi) {
        assert!(c <= a);
    }
}

#[test]
fn cloglog_location_shifts_the_log_cumulative_hazard() {
    let d = simulate_dgp(1.0, 0.0, 400, 0, 6).unwrap();
    let basis = BasisSpec::bernstein_for(&d.responses, 6).unwrap();
    let spec = ModelSpec::new(basis, Link::Cloglog).with_location(&["x1"]);
    let f = fit(&d, &spec, &FitOptions::default()).unwrap();
    let grid = interior_grid(&f, 25);
    let (x, xt) = ([("x1", 0.2)], [("x1", 0.9)]);
    let a = curve(&f, &x, Target::Cumhazard, &grid);
    let b = curve(&f, &xt, Target::Cumhazard, &grid);
    let shift = predictor(&f, &xt).unwrap().mu - predictor(&f, &x).unwrap().mu;
    for (u, v) in a.iter().zip(&b) {
        // log Lambda(y | x) = h(y) - mu(x)
        assert!((v.ln() - u.ln() + shift).abs() < 1e-9);
    }
}

#[test]
fn probabilistic_index_basics() {
    let f = ls_fit(Link::Logit, 7);
    let x = [("x1", 0.3), ("x2", 0.3)];
    assert!((probabilistic_index(&f, &x, &x).unwrap() - 0.5).abs() < 1e-8);
    let mut r = rng(8);
    for _ in 0..20 {
        let a = [("x1", r.gen::<f64>()), ("x2", r.gen::<f64>())];
        let b = [("x1", r.gen::<f64>()), ("x2", r.gen::<f64>())];
        let s = probabilistic_index(&f, &a, &b).unwrap() + probabilistic_index(&f, &b, &a).unwrap();
        assert!((s - 1.0).abs() < 1e-8, "{s}");
    }
    let ci = pi_confint(&f, &[("x1", 0.0), ("x2", 0.5)], &[("x1", 1.0), ("x2", 0.5)], 0.95).unwrap();
    assert!(ci.lower < ci.estimate && ci.estimate < ci.upper);
    assert!(ci.estimate > 0.5);
}

#[test]
fn probit_index_matches_quadrature() {
    let phi = Normal::new(0.0, 1.0).unwrap();
    let closed = probabilistic_index_of(
        Link::Probit,
        Predictor {
            mu: 0.0,
            inv_scale: 1.0,
        },
        Predictor {
            mu: 1.0,
            inv_scale: 1.0,
        },
    );
    assert!((closed - phi.cdf(1.0 / 2f64.sqrt())).abs() < 1e-12);
    assert!((closed - 0.7602).abs() < 1e-4);

    // P(Y <= Y~) = int Phi(s (w + mu~) / s~ - mu) phi(w) dw by the midpoint rule
    let mut r = rng(9);
    for _ in 0..25 {
        let a = Predictor {
            mu: r.gen_range(-2.0..2.0),
            inv_scale: r.gen_range(0.3..3.0),
        };
        let b = Predictor {
            mu: r.gen_range(-2.0..2.0),
            inv_scale: r.gen_range(0.3..3.0),
        };
        let ratio = a.inv_scale / b.inv_scale;
        let n = 200_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let quad: f64 = (0..n)
            .map(|k| {
                let w = lo + (k as f64 + 0.5) * h;
                phi.cdf(ratio * (w + b.mu) - a.mu) * (-0.5 * w * w).exp()
            })
            .sum::<f64>()
            * h
            / (2.0 * std::f64::consts::PI).sqrt();
        let lib = probabilistic_index_of(Link::Probit, a, b);
        assert!((lib - quad).abs() < 1e-6, "{lib} vs {quad}");
    }
}

#[test]
fn fitted_roc_tracks_the_empirical_roc_for_ordinal_data() {
    let theta = [-1.0, -0.3, 0.4, 1.2];
    let levels = theta.len() + 1;
    let (mu1, gamma1) = (0.8, -0.6);
    let mut r = rng(10);
    let mut resp = Vec::new();
    let mut rows = Vec::new();
    let mut cats = Vec::new();
    for i in 0..2000 {
        let g = (i % 2) as f64;
        let s = (0.5 * gamma1 * g).exp();
        let h = (normal(&mut r) + mu1 * g) / s;
        let k = theta.iter().position(|t| h <= *t).map_or(levels, |p| p + 1);
        resp.push(ResponseDatum::ordinal(k, levels).unwrap());
        rows.push(vec![g]);
        cats.push((k, i % 2));
    }
    let d = Dataset::new(resp, &rows, vec!["g".into()]).unwrap();
    let spec = ModelSpec::new(BasisSpec::ordinal(levels), Link::Probit)
        .with_location(&["g"])
        .with_scale(&["g"]);
    let f = fit(&d, &spec, &FitOptions::default()).unwrap();

    let frac_above = |grp: usize, k: usize| {
        let n = cats.iter().filter(|c| c.1 == grp).count() as f64;
        cats.iter().filter(|c| c.1 == grp && c.0 > k).count() as f64 / n
    };
    let mut sup = 0.0f64;
    for k in 1..levels {
        let (fpr, tpr) = (frac_above(0, k), frac_above(1, k));
        let fitted = roc_curve(&f, &[("g", 0.0)], &[("g", 1.0)], &[fpr]).unwrap()[0];
        sup = sup.max((fitted - tpr).abs());
    }
    assert!(sup < 0.05, "sup distance {sup}");

    let t: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
    let diag = roc_curve(&f, &[("g", 1.0)], &[("g", 1.0)], &t).unwrap();
    for (a, b) in diag.iter().zip(&t) {
        assert!((a - b).abs() < 1e-10);
    }
}

/// Conditional moments of T = sum_i g_i r_i^T written out for one design
/// column.
fn oracle_moments(r: &DMatrix<f64>, g: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = g.len() as f64;
    let sg: f64 = g.iter().sum();
    let sgg: f64 = g.iter().map(|v| v * v).sum();
    let rbar = DVector::from_fn(r.ncols(), |k, _| r.column(k).sum() / n);
    let mut v = DMatrix::zeros(r.ncols(), r.ncols());
    for i in 0..r.nrows() {
        let d = r.row(i).transpose() - &rbar;
        v += &d * d.transpose() / n;
    }
    let e = &rbar * sg;
    let c = v * (n / (n - 1.0) * sgg - sg * sg / (n - 1.0));
    (e, c)
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn exhaustive_p_value_matches_brute_force() {
    let mut r = rng(11);
    for _ in 0..5 {
        let res = DMatrix::from_fn(6, 2, |_, _| normal(&mut r));
        let g = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let gm = DMatrix::from_column_slice(6, 1, &g);
        let (e, c) = oracle_moments(&res, &g);
        let ci = c.clone().try_inverse().unwrap();
        let quad = |perm: &[usize]| {
            let t = DVector::from_fn(2, |k, _| (0..6).map(|i| g[i] * res[(perm[i], k)]).sum());
            let d = t - &e;
            d.dot(&(&ci * &d))
        };
        let obs = quad(&[0, 1, 2, 3, 4, 5]);
        let perms = all_permutations(6);
        assert_eq!(perms.len(), 720);
        let hits = perms.iter().filter(|p| quad(p) >= obs - 1e-9 * obs).count();
        let brute = hits as f64 / 720.0;

        let lib = score_test_residuals(&res, &gm, &Resampling::Exhaustive).unwrap();
        assert!((lib.quadratic_statistic - obs).abs() < 1e-9 * obs.max(1.0));
        assert_eq!(lib.p_quadratic_permutation.unwrap(), brute);
        let mc = score_test_residuals(&res, &gm, &Resampling::MonteCarlo { b: 720, seed: 1 }).unwrap();
        assert_eq!(mc.p_quadratic_permutation, lib.p_quadratic_permutation);
        assert_eq!(mc.p_max_permutation, lib.p_max_permutation);
    }
}

#[test]
fn permutation_moments_match_brute_force_enumeration() {
    let mut r = rng(12);
    for n in [4usize, 6, 8] {
        let res = DMatrix::from_fn(n, 2, |_, _| normal(&mut r));
        let g: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..2.0)).collect();
        let gm = DMatrix::from_column_slice(n, 1, &g);
        let perms = all_permutations(n);
        let stats: Vec<DVector<f64>> = perms
            .iter()
            .map(|p| DVector::from_fn(2, |k, _| (0..n).map(|i| g[i] * res[(p[i], k)]).sum()))
            .collect();
        let m = perms.len() as f64;
        let mean = stats.iter().fold(DVector::zeros(2), |a, t| a + t) / m;
        let cov = stats.iter().fold(DMatrix::zeros(2, 2), |a, t| {
            let d = t - &mean;
            a + &d * d.transpose()
        }) / m;
        let lib = moments(&res, &gm);
        assert!((lib.expectation - mean).amax() < 1e-10);
        assert!((lib.covariance - cov).amax() < 1e-10);
    }
}

#[test]
fn permutation_moments_match_random_permutations() {
    let mut r = rng(13);
    let b = 100_000;
    for n in [10usize, 15] {
        let res = DMatrix::from_fn(n, 2, |_, _| normal(&mut r));
        let gm = DMatrix::from_fn(n, 2, |i, q| {
            if q == 0 {
                (i % 3 == 0) as u8 as f64
            } else {
                r.gen_range(-1.0..1.0)
            }
        });
        let lib = moments(&res, &gm);
        let dim = lib.expectation.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut draws = Vec::with_capacity(b);
        for _ in 0..b {
            perm.shuffle(&mut r);
            let t = DVector::from_fn(dim, |k, _| {
                let (q, c) = (k / 2, k % 2);
                (0..n).map(|i| gm[(i, q)] * res[(perm[i], c)]).sum::<f64>()
            });
            draws.push(t);
        }
        let bf = b as f64;
        for k in 0..dim {
            let x: Vec<f64> = draws.iter().map(|t| t[k]).collect();
            let m = x.iter().sum::<f64>() / bf;
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (bf - 1.0)).sqrt();
            assert!((m - lib.expectation[k]).abs() < 3.0 * sd / bf.sqrt(), "mean {k}");
        }
        for a in 0..dim {
            for c in a..dim {
                let prod: Vec<f64> = draws
                    .iter()
                    .map(|t| (t[a] - lib.expectation[a]) * (t[c] - lib.expectation[c]))
                    .collect();
                let m = prod.iter().sum::<f64>() / bf;
                let sd = (prod.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (bf - 1.0)).sqrt();
                assert!((m - lib.covariance[(a, c)]).abs() < 3.0 * sd / bf.sqrt(), "cov {a},{c}");
            }
        }
    }
}

#[test]
fn single_contrast_interval_is_the_wald_interval() {
    let f = ls_fit(Link::Logit, 14);
    let c = contrast_matrix(&f, &[vec![("loc:x1", 1.0)]]).unwrap();
    let ci = simultaneous_ci(&f, &c, 0.95, 1).unwrap();
    let k = f.index_of("loc:x1").unwrap();
    let se = f.std_errors().unwrap()[k];
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
    assert!((ci.critical_value - z).abs() < 1e-9);
    assert!((ci.lower[0] - (f.params.beta[0] - z * se)).abs() < 1e-9);
    assert!((ci.upper[0] - (f.params.beta[0] + z * se)).abs() < 1e-9);
}

#[test]
fn duplicated_contrasts_give_identical_intervals() {
    let f = ls_fit(Link::Logit, 15);
    let rows = vec![
        vec![("loc:x1", 1.0)],
        vec![("scale:x2", 1.0)],
        vec![("loc:x1", 1.0)],
        vec![("loc:x1", 1.0), ("scale:x2", -1.0)],
    ];
    let c = contrast_matrix(&f, &rows).unwrap();
    let ci = simultaneous_ci(&f, &c, 0.95, 2).unwrap();
    assert_eq!(ci.lower[0], ci.lower[2]);
    assert_eq!(ci.upper[0], ci.upper[2]);
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
    assert!(ci.critical_value > z);
    let without = simultaneous_ci(
        &f,
        &contrast_matrix(&f, &[rows[0].clone(), rows[1].clone(), rows[3].clone()]).unwrap(),
        0.95,
        2,
    )
    .unwrap();
    assert_eq!(without.critical_value, ci.critical_value);
}

#[test]
fn quantile_curves_do_not_cross() {
    let f = ls_fit(Link::Logit, 16);
    let probs: Vec<f64> = (1..40).map(|k| k as f64 / 40.0).collect();
    let mut r = rng(17);
    for _ in 0..30 {
        let x = [("x1", r.gen::<f64>()), ("x2", r.gen::<f64>())];
        let q = curve(&f, &x, Target::Quantile, &probs);
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "{q:?}");
    }
}

#[test]
fn spline_location_scale_model_recovers_a_growth_curve() {
    let median = |age: f64| 35.0 + 10.0 * (1.0 - (-age / 2.0).exp());
    let spread = |age: f64| 1.0 + 0.1 * age;
    let mut r = rng(18);
    let n = 2000;
    let age: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..10.0)).collect();
    let resp: Vec<ResponseDatum> = age
        .iter()
        .map(|&a| ResponseDatum::exact(median(a) + spread(a) * normal(&mut r)).unwrap())
        .collect();
    let sb = SplineBasis::new(&age, &[2.5, 5.0, 7.5], 3).unwrap();
    let design = sb.design(&age).unwrap();
    let names: Vec<String> = (2..=sb.dim()).map(|k| format!("age_bs{k}")).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (1..sb.dim()).map(|c| design[(i, c)]).collect())
        .collect();
    let d = Dataset::new(resp, &rows, names.clone()).unwrap();
    let basis = BasisSpec::bernstein_for(&d.responses, 6).unwrap();
    let spec = ModelSpec::new(basis, Link::Probit)
        .with_location(&names)
        .with_scale(&names);
    let f = fit(&d, &spec, &FitOptions::default()).unwrap();
    assert!(f.converged);
    for k in 0..19 {
        let a = 0.25 + 0.5 * k as f64;
        let b = sb.eval(a).unwrap();
        let x: HashMap<String, f64> = names.iter().cloned().zip(b[1..].iter().copied()).collect();
        let req = CurveRequest {
            target: Target::Quantile,
            grid: vec![0.5],
            stratum: 0,
        };
        let q = predict_curve(&f, &x, &req).unwrap().values[0];
        assert!(
            (q - median(a)).abs() < 0.02 * median(a),
            "age {a}: {q} vs {}",
            median(a)
        );
    }
}

#[test]
fn simulated_responses_follow_the_process() {
    let chi = ChiSquared::new(3.0).unwrap();
    let d = simulate_dgp(0.0, 0.0, 2000, 0, 19).unwrap();
    let y: Vec<f64> = d
        .responses
        .iter()
        .map(|r| if let Response::Exact(v) = r.value { v } else { panic!() })
        .collect();
    let dist = ks_distance(&y, |v| chi.cdf(v));
    assert!(ks_p_value(dist, y.len()) > 0.01);

    // probability integral transform under the conditional distribution
    let d = simulate_dgp(1.0, 1.0, 2000, 0, 20).unwrap();
    let (x1, x2) = (d.column("x1").unwrap(), d.column("x2").unwrap());
    let u: Vec<f64> = d
        .responses
        .iter()
        .enumerate()
        .map(|(i, r)| match r.value {
            Response::Exact(v) => dgp_cdf(v, x1[i], x2[i], 1.0, 1.0),
            _ => panic!(),
        })
        .collect();
    let dist = ks_distance(&u, |v| v.clamp(0.0, 1.0));
    assert!(ks_p_value(dist, u.len()) > 0.01);

    // frequency of Y <= y at fixed covariates
    let (b1, b2) = (0.6, 0.3);
    let near: Vec<usize> = (0..d.len())
        .filter(|&i| (x1[i] - b1).abs() < 0.1 && (x2[i] - b2).abs() < 0.1)
        .collect();
    assert!(near.len() > 50);
    let yq = 2.0;
    let freq = near
        .iter()
        .filter(|&&i| matches!(d.responses[i].value, Response::Exact(v) if v <= yq))
        .count() as f64
        / near.len() as f64;
    let p = dgp_cdf(yq, b1, b2, 1.0, 1.0);
    let se = (p * (1.0 - p) / near.len() as f64).sqrt();
    assert!((freq - p).abs() < 4.0 * se + 0.05, "{freq} vs {p}");
}
