//! Standard error distributions F_Z used on the transformation scale.
//!
//! All four choices have log-concave densities on the real line. Tail
//! quantities are evaluated in log space so that censored contributions
//! far in the tails stay finite.

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt;
use std::str::FromStr;

use libm::erfc;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Probit,
    Logit,
    Cloglog,
    Loglog,
}

impl Link {
    pub const ALL: [Link; 4] = [Link::Probit, Link::Logit, Link::Cloglog, Link::Loglog];

    pub fn name(self) -> &'static str {
        match self {
            Link::Probit => "probit",
            Link::Logit => "logit",
            Link::Cloglog => "cloglog",
            Link::Loglog => "loglog",
        }
    }

    pub fn cdf(self, z: f64) -> f64 {
        match self {
            Link::Probit => 0.5 * erfc(-z / SQRT_2),
            Link::Logit => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Link::Cloglog => -(-z.exp()).exp_m1(),
            Link::Loglog => (-(-z).exp()).exp(),
        }
    }

    /// Survivor function 1 - F(z), accurate in the upper tail.
    pub fn sf(self, z: f64) -> f64 {
        match self {
            Link::Probit => 0.5 * erfc(z / SQRT_2),
            Link::Logit => Link::Logit.cdf(-z),
            Link::Cloglog => (-z.exp()).exp(),
            Link::Loglog => -(-(-z).exp()).exp_m1(),
        }
    }

    pub fn log_cdf(self, z: f64) -> f64 {
        if z == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        if z == f64::INFINITY {
            return 0.0;
        }
        match self {
            Link::Probit => log_ndtr(z),
            Link::Logit => -softplus(-z),
            Link::Cloglog => log_one_minus_exp_neg(z.exp()),
            Link::Loglog => -(-z).exp(),
        }
    }

    pub fn log_sf(self, z: f64) -> f64 {
        if z == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        if z == f64::NEG_INFINITY {
            return 0.0;
        }
        match self {
            Link::Probit => log_ndtr(-z),
            Link::Logit => -softplus(z),
            Link::Cloglog => -z.exp(),
            Link::Loglog => log_one_minus_exp_neg((-z).exp()),
        }
    }

    pub fn density(self, z: f64) -> f64 {
        if z.is_infinite() {
            return 0.0;
        }
        self.log_density(z).exp()
    }

    pub fn log_density(self, z: f64) -> f64 {
        if z.is_infinite() {
            return f64::NEG_INFINITY;
        }
        match self {
            Link::Probit => -0.5 * z * z - LN_SQRT_2PI,
            Link::Logit => -z.abs() - 2.0 * (-z.abs()).exp().ln_1p(),
            Link::Cloglog => z - z.exp(),
            Link::Loglog => -z - (-z).exp(),
        }
    }

    /// d/dz log f(z).
    pub fn log_density_deriv(self, z: f64) -> f64 {
        match self {
            Link::Probit => -z,
            Link::Logit => -(0.5 * z).tanh(),
            Link::Cloglog => 1.0 - z.exp(),
            Link::Loglog => (-z).exp() - 1.0,
        }
    }

    /// Inverse of [`Link::cdf`]. Returns an error at p = 0 or p = 1 where the
    /// quantile is infinite.
    pub fn quantile(self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "quantile of {} at p = {p} is not finite",
                self.name()
            )));
        }
        Ok(match self {
            Link::Probit => {
                if p <= 0.5 {
                    probit_lower(p)
                } else {
                    -probit_lower(1.0 - p)
                }
            }
            Link::Logit => p.ln() - (-p).ln_1p(),
            Link::Cloglog => (-(-p).ln_1p()).ln(),
            Link::Loglog => -(-p.ln()).ln(),
        })
    }

    /// Quantile at upper-tail probability q = 1 - p, accurate for small q.
    pub fn quantile_upper(self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "upper quantile of {} at q = {q} is not finite",
                self.name()
            )));
        }
        Ok(match self {
            Link::Probit => {
                if q <= 0.5 {
                    -probit_lower(q)
                } else {
                    probit_lower(1.0 - q)
                }
            }
            Link::Logit => (-q).ln_1p() - q.ln(),
            Link::Cloglog => (-q.ln()).ln(),
            Link::Loglog => -(-(-q).ln_1p()).ln(),
        })
    }

    /// log{F(zu) - F(zl)} for zl < zu, evaluated on whichever tail keeps
    /// the difference well conditioned.
    pub fn log_interval_prob(self, zl: f64, zu: f64) -> f64 {
        if zl == f64::NEG_INFINITY {
            return self.log_cdf(zu);
        }
        if zu == f64::INFINITY {
            return self.log_sf(zl);
        }
        if !(zu > zl) {
            return f64::NEG_INFINITY;
        }
        if zu <= 0.0 {
            let lu = self.log_cdf(zu);
            let ll = self.log_cdf(zl);
            lu + log_one_minus_exp(ll - lu)
        } else if zl >= 0.0 {
            let ll = self.log_sf(zl);
            let lu = self.log_sf(zu);
            ll + log_one_minus_exp(lu - ll)
        } else {
            let mass = 1.0 - self.cdf(zl) - self.sf(zu);
            mass.ln()
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "probit" => Ok(Link::Probit),
            "logit" => Ok(Link::Logit),
            "cloglog" => Ok(Link::Cloglog),
            "loglog" => Ok(Link::Loglog),
            other => Err(Error::Config(format!("unknown link `{other}`"))),
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// log(1 - exp(x)) for x <= 0.
fn log_one_minus_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// log(1 - exp(-t)) for t >= 0.
fn log_one_minus_exp_neg(t: f64) -> f64 {
    if t == f64::INFINITY {
        0.0
    } else {
        log_one_minus_exp(-t)
    }
}

/// log Phi(z) with an asymptotic expansion deep in the lower tail.
fn log_ndtr(z: f64) -> f64 {
    if z > 0.0 {
        (-0.5 * erfc(z / SQRT_2)).ln_1p()
    } else if z > -37.0 {
        (0.5 * erfc(-z / SQRT_2)).ln()
    } else {
        // asymptotic expansion of Mills' ratio
        let z2 = z * z;
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) / z2;
            series += term;
        }
        -0.5 * z2 - LN_SQRT_2PI - (-z).ln() + series.ln()
    }
}

/// Normal quantile for p <= 1/2: initial guess polished by Newton steps on
/// log Phi, which keeps relative accuracy deep in the tail.
fn probit_lower(p: f64) -> f64 {
    let lp = p.ln();
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..3 {
        let l = log_ndtr(z);
        let step = (l - lp) * (l + 0.5 * z * z + LN_SQRT_2PI).exp();
        if !step.is_finite() {
            break;
        }
        z -= step;
        if step.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
        (f(z + h) - f(z - h)) / (2.0 * h)
    }

    #[test]
    fn reference_values() {
        assert!((Link::Logit.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((Link::Cloglog.cdf(0.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((Link::Cloglog.cdf(0.0) - 0.632_120_6).abs() < 1e-7);
        assert!((Link::Probit.quantile(0.975).unwrap() - 1.959_964).abs() < 1e-6);
        assert!((Link::Probit.cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
    }

    #[test]
    fn quantile_rejects_boundary() {
        for link in Link::ALL {
            assert!(link.quantile(0.0).is_err());
            assert!(link.quantile(1.0).is_err());
            assert!(link.quantile(f64::NAN).is_err());
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        // Wherever the smaller tail probability carries enough relative
        // precision the round trip is exact to 1e-10; using the upper-tail
        // quantile on the survivor function covers the other half.
        for link in Link::ALL {
            let mut z = -8.0;
            while z <= 8.0 {
                let p = link.cdf(z);
                let q = link.sf(z);
                if p > 0.0 && q > 0.0 && p.min(q) > 1e-300 {
                    let back = if p <= 0.5 {
                        link.quantile(p).unwrap()
                    } else {
                        link.quantile_upper(q).unwrap()
                    };
                    assert!((back - z).abs() < 1e-10, "{link} z={z} back={back}");
                }
                z += 0.125;
            }
        }
    }

    #[test]
    fn quantile_of_cdf_in_bulk() {
        for link in Link::ALL {
            let mut z = -8.0;
            while z <= 8.0 {
                let p = link.cdf(z);
                // precision of 1 - p limits the upper tail
                if link.sf(z) > 1e-5 && p > 0.0 {
                    let back = link.quantile(p).unwrap();
                    assert!((back - z).abs() < 1e-10, "{link} z={z} back={back}");
                }
                z += 0.25;
            }
        }
    }

    #[test]
    fn density_matches_cdf_differences() {
        for link in Link::ALL {
            let mut z = -6.0;
            while z <= 6.0 {
                let fd = central(|t| link.cdf(t), z, 1e-5);
                assert!((fd - link.density(z)).abs() < 1e-6, "{link} z={z}");
                let fd = central(|t| link.log_density(t), z, 1e-5);
                assert!((fd - link.log_density_deriv(z)).abs() < 1e-6, "{link} z={z}");
                z += 0.1;
            }
        }
    }

    #[test]
    fn log_tails_agree_with_direct_evaluation() {
        for link in Link::ALL {
            for &z in &[-5.0, -2.0, -0.3, 0.0, 0.7, 2.5, 5.0] {
                let lc = link.log_cdf(z);
                let ls = link.log_sf(z);
                assert!((lc - link.cdf(z).ln()).abs() < 1e-12 * (1.0 + lc.abs()));
                assert!((ls - link.sf(z).ln()).abs() < 1e-12 * (1.0 + ls.abs()));
            }
            // deep tails remain finite
            assert!(link.log_cdf(-60.0).is_finite());
            assert!(link.log_sf(60.0).is_finite());
        }
    }

    #[test]
    fn loglog_reflects_cloglog() {
        let mut z = -7.0;
        while z <= 7.0 {
            let lhs = Link::Loglog.cdf(z);
            let rhs = 1.0 - Link::Cloglog.cdf(-z);
            assert!((lhs - rhs).abs() < 1e-15);
            z += 0.37;
        }
    }

    #[test]
    fn interval_probability_uses_stable_tail() {
        for link in Link::ALL {
            for &(a, b) in &[(-3.0, -1.0), (-1.0, 2.0), (0.5, 4.0), (-0.2, -0.1)] {
                let direct = (link.cdf(b) - link.cdf(a)).ln();
                let stable = link.log_interval_prob(a, b);
                assert!((direct - stable).abs() < 1e-10, "{link} ({a},{b})");
            }
            // far upper tail where the direct difference cancels to zero
            let far = link.log_interval_prob(12.0, 13.0);
            assert!(far.is_finite() || link == Link::Cloglog, "{link}");
        }
    }

    #[test]
    fn cdf_monotone() {
        for link in Link::ALL {
            let mut prev = 0.0;
            let mut z = -40.0;
            while z <= 40.0 {
                let p = link.cdf(z);
                assert!(p >= prev);
                prev = p;
                z += 0.05;
            }
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("probit".parse::<Link>().unwrap(), Link::Probit);
        assert_eq!("CLOGLOG".parse::<Link>().unwrap(), Link::Cloglog);
        assert!("gumbel".parse::<Link>().is_err());
    }
}
