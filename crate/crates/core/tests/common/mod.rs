#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tramls::data::{Dataset, ResponseDatum};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

pub fn logistic(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.gen_range(1e-12..1.0);
    (u / (1.0 - u)).ln()
}

/// P(Y <= y | x) = expit(sqrt(exp(gamma x2)) y - beta x1) with x ~ U[0, 1]:
/// linear h, so a Bernstein basis on a support symmetric about 0 contains
/// the truth with beta0 = 0 and the centered model has exactly the
/// support {loc:x1, scale:x2}.
pub fn planted(n: usize, beta: f64, gamma: f64, noise: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let k = 2 + noise;
    let mut rows = Vec::with_capacity(n);
    let mut resp = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..k).map(|_| r.gen::<f64>()).collect();
        let z = logistic(&mut r);
        let y = (z + beta * x[0]) / (gamma * x[1]).exp().sqrt();
        resp.push(ResponseDatum::exact(y).unwrap());
        rows.push(x);
    }
    Dataset::new(resp, &rows, (1..=k).map(|j| format!("x{j}")).collect()).unwrap()
}

/// Support for [`planted`] data.
pub const PLANTED_SUPPORT: (f64, f64) = (-40.0, 40.0);

/// Two-arm survival data: exponential times with rate 1 (arm 0) and
/// 1 / `ratio` (arm 1), uniform censoring on [0, `cens`].
pub fn two_arm_survival(n: usize, ratio: f64, cens: f64, seed: u64) -> (Dataset, Vec<(f64, bool, usize)>) {
    let mut r = rng(seed);
    let mut resp = Vec::new();
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    for i in 0..n {
        let g = i % 2;
        let t = -r.gen_range(1e-12..1.0f64).ln() * if g == 1 { ratio } else { 1.0 };
        let c = cens * r.gen::<f64>();
        let (y, d) = if t <= c { (t, true) } else { (c, false) };
        resp.push(if d {
            ResponseDatum::exact(y).unwrap()
        } else {
            ResponseDatum::right_censored(y).unwrap()
        });
        rows.push(vec![g as f64]);
        raw.push((y, d, g));
    }
    (Dataset::new(resp, &rows, vec!["g".into()]).unwrap(), raw)
}

/// Observed minus expected events in arm 1, by direct enumeration of the
/// risk sets.
pub fn log_rank_numerator(raw: &[(f64, bool, usize)]) -> f64 {
    let mut times: Vec<f64> = raw.iter().filter(|r| r.1).map(|r| r.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut oe = 0.0;
    for &t in &times {
        let n = raw.iter().filter(|r| r.0 >= t).count() as f64;
        let n1 = raw.iter().filter(|r| r.0 >= t && r.2 == 1).count() as f64;
        let d = raw.iter().filter(|r| r.0 == t && r.1).count() as f64;
        let d1 = raw.iter().filter(|r| r.0 == t && r.1 && r.2 == 1).count() as f64;
        oe += d1 - d * n1 / n;
    }
    oe
}

/// Kolmogorov-Smirnov distance of a sample to a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = cdf(y);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}
