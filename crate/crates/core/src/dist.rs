//! Parametric lifetime distributions and their textual grammar.
//!
//! Four families are supported, each with an optional location shift `mu`
//! and written in a compact text form used throughout configs and CLIs:
//!
//! * `Exp(mu, lambda)` — exponential with **rate** `lambda`;
//! * `We(mu, lambda, nu)` — Weibull with scale `lambda` and shape `nu`;
//! * `G(mu, lambda, nu)` — gamma with scale `lambda` and shape `nu`;
//! * `LgN(mu, lambda)` — log-normal, where `ln T ~ N(mu, lambda^2)`.
//!
//! For the first three families `mu >= 0` shifts the support to `[mu, inf)`;
//! for the log-normal `mu` is the mean of `ln T` (any finite value) and the
//! support is `[0, inf)`. Sampling is by inverse transform on an open-interval
//! uniform draw, so samples are always finite and strictly inside the support.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::special;

/// Distribution family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Exp,
    We,
    G,
    LgN,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Exp => "Exp",
            Family::We => "We",
            Family::G => "G",
            Family::LgN => "LgN",
        }
    }

    /// Whether the family takes a third (shape) parameter.
    pub fn has_shape(&self) -> bool {
        matches!(self, Family::We | Family::G)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Exp" => Ok(Family::Exp),
            "We" => Ok(Family::We),
            "G" => Ok(Family::G),
            "LgN" => Ok(Family::LgN),
            other => Err(Error::invalid(format!(
                "unknown distribution family {other:?} (expected Exp, We, G or LgN)"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully parameterized lifetime distribution.
///
/// Constructed through [`DistSpec::new`] or parsed from the textual grammar;
/// parameters are validated once so every method can assume they are sane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistSpec {
    family: Family,
    mu: f64,
    lambda: f64,
    nu: Option<f64>,
}

impl DistSpec {
    pub fn new(family: Family, mu: f64, lambda: f64, nu: Option<f64>) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid(format!("{family}: mu={mu} must be finite")));
        }
        if family != Family::LgN && mu < 0.0 {
            return Err(Error::invalid(format!(
                "{family}: shift mu={mu} must be nonnegative (lifetimes cannot be negative)"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("{family}: lambda={lambda} must be positive")));
        }
        match (family.has_shape(), nu) {
            (true, Some(v)) if v > 0.0 && v.is_finite() => {}
            (true, Some(v)) => {
                return Err(Error::invalid(format!("{family}: nu={v} must be positive")))
            }
            (true, None) => {
                return Err(Error::invalid(format!("{family}: shape parameter nu is required")))
            }
            (false, Some(_)) => {
                return Err(Error::invalid(format!("{family}: unexpected shape parameter")))
            }
            (false, None) => {}
        }
        Ok(DistSpec { family, mu, lambda, nu })
    }

    pub fn exponential(mu: f64, rate: f64) -> Result<Self> {
        DistSpec::new(Family::Exp, mu, rate, None)
    }

    pub fn weibull(mu: f64, scale: f64, shape: f64) -> Result<Self> {
        DistSpec::new(Family::We, mu, scale, Some(shape))
    }

    pub fn gamma(mu: f64, scale: f64, shape: f64) -> Result<Self> {
        DistSpec::new(Family::G, mu, scale, Some(shape))
    }

    pub fn log_normal(mu: f64, sigma: f64) -> Result<Self> {
        DistSpec::new(Family::LgN, mu, sigma, None)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    /// Lower end of the support.
    pub fn lower(&self) -> f64 {
        match self.family {
            Family::LgN => 0.0,
            _ => self.mu,
        }
    }

    /// Density at `t` (zero outside the support).
    pub fn pdf(&self, t: f64) -> f64 {
        match self.family {
            Family::Exp => {
                let x = t - self.mu;
                if x < 0.0 {
                    0.0
                } else {
                    self.lambda * (-self.lambda * x).exp()
                }
            }
            Family::We => {
                let nu = self.nu.expect("validated");
                let x = (t - self.mu) / self.lambda;
                if x < 0.0 || (x == 0.0 && nu < 1.0) {
                    0.0
                } else if x == 0.0 {
                    // nu == 1 reduces to Exp(mu, 1/lambda); nu > 1 gives 0.
                    if nu == 1.0 {
                        1.0 / self.lambda
                    } else {
                        0.0
                    }
                } else {
                    nu / self.lambda * x.powf(nu - 1.0) * (-x.powf(nu)).exp()
                }
            }
            Family::G => {
                let nu = self.nu.expect("validated");
                let x = (t - self.mu) / self.lambda;
                if x <= 0.0 {
                    if x == 0.0 && nu == 1.0 {
                        1.0 / self.lambda
                    } else {
                        0.0
                    }
                } else {
                    ((nu - 1.0) * x.ln() - x - special::ln_gamma(nu)).exp() / self.lambda
                }
            }
            Family::LgN => {
                if t <= 0.0 {
                    0.0
                } else {
                    let z = (t.ln() - self.mu) / self.lambda;
                    special::normal_pdf(z) / (t * self.lambda)
                }
            }
        }
    }

    /// Cumulative distribution function F(t); zero left of the support.
    pub fn cdf(&self, t: f64) -> f64 {
        match self.family {
            Family::Exp => {
                let x = t - self.mu;
                if x <= 0.0 {
                    0.0
                } else {
                    -(-self.lambda * x).exp_m1()
                }
            }
            Family::We => {
                let nu = self.nu.expect("validated");
                let x = (t - self.mu) / self.lambda;
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x.powf(nu)).exp_m1()
                }
            }
            Family::G => {
                let nu = self.nu.expect("validated");
                let x = (t - self.mu) / self.lambda;
                if x <= 0.0 {
                    0.0
                } else {
                    special::gamma_p(nu, x).expect("gamma cdf converges on validated parameters")
                }
            }
            Family::LgN => {
                if t <= 0.0 {
                    0.0
                } else {
                    special::normal_cdf((t.ln() - self.mu) / self.lambda)
                }
            }
        }
    }

    /// Survival function S(t) = 1 - F(t).
    pub fn survival(&self, t: f64) -> f64 {
        match self.family {
            // Closed forms keep full precision deep in the tail.
            Family::Exp => {
                let x = t - self.mu;
                if x <= 0.0 {
                    1.0
                } else {
                    (-self.lambda * x).exp()
                }
            }
            Family::We => {
                let nu = self.nu.expect("validated");
                let x = (t - self.mu) / self.lambda;
                if x <= 0.0 {
                    1.0
                } else {
                    (-x.powf(nu)).exp()
                }
            }
            Family::G => {
                let nu = self.nu.expect("validated");
                let x = (t - self.mu) / self.lambda;
                if x <= 0.0 {
                    1.0
                } else {
                    special::gamma_q(nu, x).expect("gamma sf converges on validated parameters")
                }
            }
            Family::LgN => {
                if t <= 0.0 {
                    1.0
                } else {
                    special::normal_cdf(-(t.ln() - self.mu) / self.lambda)
                }
            }
        }
    }

    /// Quantile function for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("quantile: p={p} outside (0, 1)")));
        }
        match self.family {
            Family::Exp => Ok(self.mu - (-p).ln_1p() / self.lambda),
            Family::We => {
                let nu = self.nu.expect("validated");
                Ok(self.mu + self.lambda * (-(-p).ln_1p()).powf(1.0 / nu))
            }
            Family::G => {
                let nu = self.nu.expect("validated");
                Ok(self.mu + self.lambda * gamma_quantile(nu, p)?)
            }
            Family::LgN => {
                let z = special::normal_quantile(p)?;
                Ok((self.mu + self.lambda * z).exp())
            }
        }
    }

    /// Inverse-transform sample.
    pub fn sample(&self, rng: &mut SplitMix64) -> f64 {
        let u = rng.next_open_f64();
        self.quantile(u).expect("open-interval uniform keeps quantile in domain")
    }
}

/// Quantile of the standard gamma distribution with shape `a` (unit scale):
/// solves P(a, x) = p.
///
/// Newton iterations from a Wilson-Hilferty starting point, safeguarded by a
/// shrinking bracket with bisection fallback.
fn gamma_quantile(a: f64, p: f64) -> Result<f64> {
    debug_assert!(a > 0.0 && p > 0.0 && p < 1.0);
    // Wilson-Hilferty approximation as the starting point.
    let z = special::normal_quantile(p)?;
    let c = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt());
    let mut x = a * c * c * c;
    if !(x.is_finite() && x > 0.0) {
        // Wilson-Hilferty collapses for small p at small shape; invert the
        // leading series term P(a, x) ~ x^a / Γ(a+1) instead.
        x = ((p.ln() + special::ln_gamma(a + 1.0)) / a).exp().max(1e-300);
    }
    // Bracket [lo, hi] always contains the root: P is increasing in x.
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let ln_gamma_a = special::ln_gamma(a);
    for _ in 0..200 {
        let f = special::gamma_p(a, x)? - p;
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        if f.abs() < 1e-13 {
            return Ok(x);
        }
        // Density of the standard gamma at x.
        let ln_pdf = (a - 1.0) * x.ln() - x - ln_gamma_a;
        let step = if ln_pdf > -700.0 { f / ln_pdf.exp() } else { f64::INFINITY };
        let mut next = x - step;
        // With an unbounded bracket, cap upward moves at doubling so a wild
        // Newton step cannot fling the iterate orders of magnitude too high.
        let accepted = next.is_finite()
            && next > lo
            && if hi.is_finite() { next < hi } else { next <= (2.0 * x).max(1.0) };
        if !accepted {
            // Newton left the bracket: bisect (or double when unbounded above).
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { (2.0 * x).max(1.0) };
        }
        if (next - x).abs() <= 1e-12 * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Numeric(format!("gamma_quantile: no convergence for a={a}, p={p}")))
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.nu {
            Some(nu) => write!(f, "{}({},{},{})", self.family, self.mu, self.lambda, nu),
            None => write!(f, "{}({},{})", self.family, self.mu, self.lambda),
        }
    }
}

impl FromStr for DistSpec {
    type Err = Error;

    /// Parses the textual grammar `Family(mu, lambda[, nu])`, e.g.
    /// `Exp(0,1)`, `We(0, 1.1, 2.4)` or `LgN(0,0.8)`. Whitespace around
    /// tokens is ignored.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let open = t.find('(').ok_or_else(|| {
            Error::invalid(format!("distribution {t:?}: expected Family(mu,lambda[,nu])"))
        })?;
        if !t.ends_with(')') {
            return Err(Error::invalid(format!("distribution {t:?}: missing closing parenthesis")));
        }
        let family: Family = t[..open].trim().parse()?;
        let body = &t[open + 1..t.len() - 1];
        let args: Vec<f64> = body
            .split(',')
            .map(|a| {
                let a = a.trim();
                a.parse::<f64>().map_err(|_| {
                    Error::invalid(format!("distribution {t:?}: bad numeric argument {a:?}"))
                })
            })
            .collect::<Result<_>>()?;
        let expected = if family.has_shape() { 3 } else { 2 };
        if args.len() != expected {
            return Err(Error::invalid(format!(
                "distribution {t:?}: {family} takes {expected} arguments, found {}",
                args.len()
            )));
        }
        DistSpec::new(family, args[0], args[1], args.get(2).copied())
    }
}

impl Serialize for DistSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DistSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}
