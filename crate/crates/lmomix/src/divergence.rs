//! Cressie–Read divergence generators φ_γ and their convex conjugates ψ_γ.
//!
//! The family is φ_γ(x) = (x^γ − γx + γ − 1)/(γ(γ−1)), with the logarithmic
//! limits φ_0(x) = −log x + x − 1 (modified KL) and φ_1(x) = x log x − x + 1
//! (KL). Every member is convex and vanishes with zero slope at x = 1, which
//! normalizes the conjugate to ψ(0) = 0, ψ′(0) = 1:
//!
//! ```text
//! ψ_γ(t) = (1/γ) ((γ−1)t + 1)^{γ/(γ−1)} − 1/γ      on (γ−1)t + 1 > 0,
//! ψ_1(t) = e^t − 1,        ψ_0(t) = −log(1 − t),
//! ψ_2(t) = t²/2 + t        on all of ℝ (χ², defined for signed arguments).
//! ```
//!
//! Evaluating ψ outside its effective domain is a hard error rather than a NaN:
//! a NaN objective silently corrupts simplex comparisons downstream.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which divergence to run the inner supremum with. `Chi2` is the default and
/// the only member with a closed-form inner solution; the rest go through the
/// damped-Newton path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DivergenceSpec {
    Chi2,
    CressieRead(f64),
}

impl DivergenceSpec {
    pub fn generator(&self) -> DivergenceGenerator {
        match *self {
            DivergenceSpec::Chi2 => DivergenceGenerator::chi2(),
            DivergenceSpec::CressieRead(gamma) => DivergenceGenerator::cressie_read(gamma),
        }
    }

    /// True when the closed-form χ² inner solution applies.
    pub fn is_chi2(&self) -> bool {
        match *self {
            DivergenceSpec::Chi2 => true,
            DivergenceSpec::CressieRead(g) => g == 2.0,
        }
    }
}

impl Default for DivergenceSpec {
    fn default() -> Self {
        DivergenceSpec::Chi2
    }
}

impl fmt::Display for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergenceSpec::Chi2 => write!(f, "chi2"),
            DivergenceSpec::CressieRead(g) => write!(f, "cr:{g}"),
        }
    }
}

impl FromStr for DivergenceSpec {
    type Err = Error;

    /// Flag syntax: `chi2` or `cr:<gamma>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "chi2" {
            return Ok(DivergenceSpec::Chi2);
        }
        if let Some(rest) = s.strip_prefix("cr:") {
            let gamma: f64 = rest
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad gamma in divergence '{s}'")))?;
            if !gamma.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be finite in divergence '{s}'"
                )));
            }
            return Ok(DivergenceSpec::CressieRead(gamma));
        }
        Err(Error::InvalidParameter(format!(
            "unknown divergence '{s}' (expected chi2 or cr:<gamma>)"
        )))
    }
}

impl From<DivergenceSpec> for String {
    fn from(d: DivergenceSpec) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for DivergenceSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A Cressie–Read pair (φ, ψ) with derivatives and effective domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceGenerator {
    gamma: f64,
}

impl DivergenceGenerator {
    pub fn cressie_read(gamma: f64) -> Self {
        debug_assert!(gamma.is_finite());
        Self { gamma }
    }

    pub fn chi2() -> Self {
        Self { gamma: 2.0 }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_chi2(&self) -> bool {
        self.gamma == 2.0
    }

    /// Effective domain of φ as an interval; the lower end is closed exactly
    /// when φ stays finite there (γ > 0).
    pub fn phi_domain(&self) -> (f64, f64) {
        if self.gamma == 2.0 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (0.0, f64::INFINITY)
        }
    }

    pub fn phi(&self, x: f64) -> Result<f64> {
        let g = self.gamma;
        if g == 2.0 {
            return Ok(0.5 * (x - 1.0) * (x - 1.0));
        }
        if x < 0.0 || (x == 0.0 && g <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "phi_{g} undefined at x = {x}"
            )));
        }
        if g == 0.0 {
            Ok(-x.ln() + x - 1.0)
        } else if g == 1.0 {
            let xlx = if x == 0.0 { 0.0 } else { x * x.ln() };
            Ok(xlx - x + 1.0)
        } else {
            Ok((x.powf(g) - g * x + g - 1.0) / (g * (g - 1.0)))
        }
    }

    pub fn phi_prime(&self, x: f64) -> Result<f64> {
        let g = self.gamma;
        if g == 2.0 {
            return Ok(x - 1.0);
        }
        if x <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "phi_{g}' undefined at x = {x}"
            )));
        }
        if g == 1.0 {
            Ok(x.ln())
        } else {
            Ok((x.powf(g - 1.0) - 1.0) / (g - 1.0))
        }
    }

    /// Upper end of ψ's domain (exclusive); +∞ when unbounded. The domain is
    /// one-sided: {t : (γ−1)t + 1 > 0}, except γ = 1 or 2 where it is all ℝ.
    pub fn psi_domain_upper(&self) -> f64 {
        let g = self.gamma;
        if g == 1.0 || g == 2.0 || g > 1.0 {
            f64::INFINITY
        } else {
            1.0 / (1.0 - g)
        }
    }

    /// Lower end of ψ's domain (exclusive); −∞ when unbounded.
    pub fn psi_domain_lower(&self) -> f64 {
        let g = self.gamma;
        if g == 1.0 || g == 2.0 || g < 1.0 {
            f64::NEG_INFINITY
        } else {
            -1.0 / (g - 1.0)
        }
    }

    #[inline]
    fn s_of(&self, t: f64) -> Result<f64> {
        let s = (self.gamma - 1.0) * t + 1.0;
        if s <= 0.0 {
            Err(Error::PsiDomain { t, y: None })
        } else {
            Ok(s)
        }
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        let g = self.gamma;
        if g == 2.0 {
            return Ok(0.5 * t * t + t);
        }
        if g == 1.0 {
            return Ok(t.exp() - 1.0);
        }
        let s = self.s_of(t)?;
        if g == 0.0 {
            Ok(-s.ln())
        } else {
            Ok((s.powf(g / (g - 1.0)) - 1.0) / g)
        }
    }

    pub fn psi_prime(&self, t: f64) -> Result<f64> {
        let g = self.gamma;
        if g == 2.0 {
            return Ok(t + 1.0);
        }
        if g == 1.0 {
            return Ok(t.exp());
        }
        let s = self.s_of(t)?;
        Ok(s.powf(1.0 / (g - 1.0)))
    }

    pub fn psi_second(&self, t: f64) -> Result<f64> {
        let g = self.gamma;
        if g == 2.0 {
            return Ok(1.0);
        }
        if g == 1.0 {
            return Ok(t.exp());
        }
        let s = self.s_of(t)?;
        Ok(s.powf((2.0 - g) / (g - 1.0)))
    }
}

/// Verifies ψ(t) = sup_x {tx − φ(x)} by direct 1-D maximization (bracket
/// expansion plus golden-section search, no use of ψ′). Returns the largest
/// absolute residual over the grid.
pub fn conjugate_check(g: &DivergenceGenerator, t_grid: &[f64]) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (dom_lo, _) = g.phi_domain();
    let mut worst: f64 = 0.0;

    for &t in t_grid {
        let h = |x: f64| -> f64 {
            match g.phi(x) {
                Ok(p) => t * x - p,
                Err(_) => f64::NEG_INFINITY,
            }
        };
        // Expand a bracket [lo, hi] that contains the maximizer.
        let mut lo = if dom_lo.is_finite() { 1e-12 } else { -1.0 };
        let mut hi = 2.0;
        let mut guard = 0;
        while h(hi) > h(hi * 0.5 + lo * 0.5) && guard < 400 {
            hi = lo + (hi - lo) * 2.0;
            guard += 1;
        }
        if dom_lo.is_infinite() {
            guard = 0;
            while h(lo) > h(lo * 0.5 + hi * 0.5) && guard < 400 {
                lo = hi - (hi - lo) * 2.0;
                guard += 1;
            }
        }
        // Golden-section search.
        let mut a = lo;
        let mut b = hi;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (h(c), h(d));
        for _ in 0..300 {
            if (b - a).abs() < 1e-13 * (1.0 + a.abs() + b.abs()) {
                break;
            }
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = h(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = h(d);
            }
        }
        let sup = fc.max(fd);
        let psi = g.psi(t)?;
        worst = worst.max((sup - psi).abs());
    }
    Ok(worst)
}
