//! Component distributions, closed-form L-moments, and two-component mixtures.
//!
//! Everything here is expressed through the quantile function, which makes the
//! L-moment identities direct: with probability-weighted moments
//! β_k = ∫₀¹ F⁻¹(u) u^k du, the r-th L-moment is λ_r = Σ_k c_{r,k} β_k where
//! c_{r,k} are the shifted-Legendre coefficients of L_{r−1}. For the Weibull
//! and two-sided Weibull families β_k reduces to finite sums over Γ(1 + 1/ν)
//! terms, which gives exact λ_r at any order without quadrature.

use crate::error::{Error, Result};
use crate::lmom::{self, ShiftedLegendre, MAX_ORDER};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};
use statrs::function::gamma::gamma;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub(crate) fn std_normal_cdf(u: f64) -> f64 {
    0.5 * (1.0 + erf(u / SQRT_2))
}

pub(crate) fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile: erf⁻¹ seed plus one Newton step, which holds the
/// round trip Φ(Φ⁻¹(u)) = u to full double precision away from the far tails.
pub(crate) fn std_normal_quantile(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    let mut q = SQRT_2 * erf_inv(2.0 * u - 1.0);
    let d = std_normal_pdf(q);
    if d > 0.0 && q.is_finite() {
        q -= (std_normal_cdf(q) - u) / d;
    }
    q
}

/// A univariate distribution usable as either mixture component.
///
/// `Weibull`/`TwoSidedWeibull` take (scale σ, shape ν); `LogNormal` takes the
/// log-scale parameters (μ, σ); `Exponential` takes a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ComponentDistribution {
    Weibull { scale: f64, shape: f64 },
    LogNormal { location: f64, scale: f64 },
    Gaussian { mean: f64, sd: f64 },
    TwoSidedWeibull { scale: f64, shape: f64 },
    Exponential { rate: f64 },
}

use ComponentDistribution::*;

impl ComponentDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Weibull { scale, shape } | TwoSidedWeibull { scale, shape } => {
                scale > 0.0 && shape > 0.0 && scale.is_finite() && shape.is_finite()
            }
            LogNormal { location, scale } => location.is_finite() && scale > 0.0 && scale.is_finite(),
            Gaussian { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Exponential { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid parameters in {self:?}")))
        }
    }

    /// Canonical parameter order used by `params`/`with_params` and the
    /// parameter gradient.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Weibull { .. } | TwoSidedWeibull { .. } => &["scale", "shape"],
            LogNormal { .. } => &["location", "scale"],
            Gaussian { .. } => &["mean", "sd"],
            Exponential { .. } => &["rate"],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Weibull { scale, shape } | TwoSidedWeibull { scale, shape } => vec![scale, shape],
            LogNormal { location, scale } => vec![location, scale],
            Gaussian { mean, sd } => vec![mean, sd],
            Exponential { rate } => vec![rate],
        }
    }

    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.params().len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameters, got {}",
                self.params().len(),
                p.len()
            )));
        }
        let out = match *self {
            Weibull { .. } => Weibull { scale: p[0], shape: p[1] },
            TwoSidedWeibull { .. } => TwoSidedWeibull { scale: p[0], shape: p[1] },
            LogNormal { .. } => LogNormal { location: p[0], scale: p[1] },
            Gaussian { .. } => Gaussian { mean: p[0], sd: p[1] },
            Exponential { .. } => Exponential { rate: p[0] },
        };
        out.validate()?;
        Ok(out)
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Weibull { .. } | LogNormal { .. } | Exponential { .. } => (0.0, f64::INFINITY),
            Gaussian { .. } | TwoSidedWeibull { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Weibull { scale, shape } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let w = (x / scale).powf(shape);
                    -(-w).exp_m1()
                }
            }
            LogNormal { location, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - location) / scale)
                }
            }
            Gaussian { mean, sd } => std_normal_cdf((x - mean) / sd),
            TwoSidedWeibull { scale, shape } => {
                if x >= 0.0 {
                    1.0 - 0.5 * (-((x / scale).powf(shape))).exp()
                } else {
                    0.5 * (-((-x / scale).powf(shape))).exp()
                }
            }
            Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Weibull { scale, shape } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = x / scale;
                    (shape / scale) * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
                }
            }
            LogNormal { location, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_pdf((x.ln() - location) / scale) / (scale * x)
                }
            }
            Gaussian { mean, sd } => std_normal_pdf((x - mean) / sd) / sd,
            TwoSidedWeibull { scale, shape } => {
                let z = x.abs() / scale;
                if z == 0.0 && shape < 1.0 {
                    return f64::INFINITY;
                }
                0.5 * (shape / scale) * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
            }
            Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
        }
    }

    /// Inverse CDF on (0,1); the closed endpoints map to the support ends.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidParameter(format!("quantile level {u} outside [0,1]")));
        }
        Ok(match *self {
            Weibull { scale, shape } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            LogNormal { location, scale } => {
                if u == 0.0 {
                    0.0
                } else if u == 1.0 {
                    f64::INFINITY
                } else {
                    (location + scale * std_normal_quantile(u)).exp()
                }
            }
            Gaussian { mean, sd } => {
                if u == 0.0 {
                    f64::NEG_INFINITY
                } else if u == 1.0 {
                    f64::INFINITY
                } else {
                    mean + sd * std_normal_quantile(u)
                }
            }
            TwoSidedWeibull { scale, shape } => {
                if u >= 0.5 {
                    scale * (-(2.0 * (1.0 - u)).ln()).powf(1.0 / shape)
                } else {
                    -scale * (-(2.0 * u).ln()).powf(1.0 / shape)
                }
            }
            Exponential { rate } => -(-u).ln_1p() / rate,
        })
    }

    /// One draw by inversion of a fresh uniform.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                return self.quantile(u).expect("uniform draw is in (0,1)");
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Weibull { scale, shape } => scale * gamma(1.0 + 1.0 / shape),
            LogNormal { location, scale } => (location + 0.5 * scale * scale).exp(),
            Gaussian { mean, .. } => mean,
            TwoSidedWeibull { .. } => 0.0,
            Exponential { rate } => 1.0 / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Weibull { scale, shape } => {
                let g1 = gamma(1.0 + 1.0 / shape);
                scale * scale * (gamma(1.0 + 2.0 / shape) - g1 * g1)
            }
            LogNormal { location, scale } => {
                let s2 = scale * scale;
                (2.0 * location + s2).exp() * (s2.exp_m1())
            }
            Gaussian { sd, .. } => sd * sd,
            TwoSidedWeibull { scale, shape } => scale * scale * gamma(1.0 + 2.0 / shape),
            Exponential { rate } => 1.0 / (rate * rate),
        }
    }

    /// λ_1..λ_ℓ. Closed-form families never touch `rel_tol`; the lognormal and
    /// Gaussian fall back to quadrature beyond their closed low orders.
    pub fn lmoments(&self, ell: usize, rel_tol: f64) -> Result<Vec<f64>> {
        self.validate()?;
        match *self {
            Weibull { scale, shape } => weibull_lmoments(scale, shape, ell),
            TwoSidedWeibull { scale, shape } => two_sided_weibull_lmoments(scale, shape, ell),
            LogNormal { location, scale } => lognormal_lmoments(location, scale, ell, rel_tol),
            Gaussian { mean, sd } => gaussian_lmoments(mean, sd, ell, rel_tol),
            Exponential { rate } => {
                let mut lam = vec![0.0; ell];
                check_order(ell)?;
                for (r0, l) in lam.iter_mut().enumerate() {
                    let r = r0 + 1;
                    *l = if r == 1 {
                        1.0 / rate
                    } else {
                        1.0 / (rate * (r * (r - 1)) as f64)
                    };
                }
                Ok(lam)
            }
        }
    }

    /// ∂F(x)/∂parameter in canonical parameter order.
    pub fn cdf_param_grad(&self, x: f64) -> Vec<f64> {
        match *self {
            Weibull { scale, shape } => {
                if x <= 0.0 {
                    return vec![0.0, 0.0];
                }
                let z = x / scale;
                let w = z.powf(shape);
                let e = (-w).exp();
                vec![-e * shape * w / scale, e * w * z.ln()]
            }
            LogNormal { location, scale } => {
                if x <= 0.0 {
                    return vec![0.0, 0.0];
                }
                let u = (x.ln() - location) / scale;
                let d = std_normal_pdf(u);
                vec![-d / scale, -d * u / scale]
            }
            Gaussian { mean, sd } => {
                let u = (x - mean) / sd;
                let d = std_normal_pdf(u);
                vec![-d / sd, -d * u / sd]
            }
            TwoSidedWeibull { scale, shape } => {
                let z = x.abs() / scale;
                if z == 0.0 {
                    return vec![0.0, 0.0];
                }
                let w = z.powf(shape);
                let e = 0.5 * (-w).exp();
                if x >= 0.0 {
                    vec![-e * shape * w / scale, e * w * z.ln()]
                } else {
                    vec![e * shape * w / scale, -e * w * z.ln()]
                }
            }
            Exponential { rate } => {
                if x <= 0.0 {
                    vec![0.0]
                } else {
                    vec![x * (-rate * x).exp()]
                }
            }
        }
    }
}

fn check_order(ell: usize) -> Result<()> {
    if ell == 0 || ell > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "requested {ell} L-moments; supported range is 1..={MAX_ORDER}"
        )));
    }
    Ok(())
}

/// λ_r = Σ_k c_{r,k} β_k with c_{r,k} the coefficients of L_{r−1}.
fn lmoments_from_pwm(beta: &[f64]) -> Result<Vec<f64>> {
    let ell = beta.len();
    let mut lam = vec![0.0; ell];
    for r in 1..=ell {
        let coeffs = ShiftedLegendre::new(r - 1)?.coefficients_f64();
        lam[r - 1] = coeffs.iter().zip(beta).map(|(c, b)| c * b).sum();
    }
    Ok(lam)
}

/// Weibull(σ, ν) L-moments, exact at every order:
/// β_k = σ Γ(1+1/ν) Σ_{j≤k} C(k,j) (−1)^j (j+1)^{−1−1/ν}.
pub fn weibull_lmoments(sigma: f64, nu: f64, ell: usize) -> Result<Vec<f64>> {
    check_order(ell)?;
    if sigma <= 0.0 || nu <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "weibull_lmoments needs positive parameters, got sigma={sigma}, nu={nu}"
        )));
    }
    let g = gamma(1.0 + 1.0 / nu);
    let p = -1.0 - 1.0 / nu;
    let beta: Vec<f64> = (0..ell)
        .map(|k| {
            let mut acc = 0.0;
            for j in 0..=k {
                let c = lmom::binomial(k as u64, j as u64) as f64;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * c * ((j + 1) as f64).powf(p);
            }
            sigma * g * acc
        })
        .collect();
    lmoments_from_pwm(&beta)
}

/// Two-sided Weibull(σ, ν) L-moments (symmetric about zero, so every odd
/// moment above the first vanishes):
/// β_k = σ Γ(1+1/ν) [ ½ Σ_{j≤k} C(k,j) (−½)^j (j+1)^{−1−1/ν} − 2^{−(k+1)} (k+1)^{−1−1/ν} ].
pub fn two_sided_weibull_lmoments(sigma: f64, nu: f64, ell: usize) -> Result<Vec<f64>> {
    check_order(ell)?;
    if sigma <= 0.0 || nu <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "two_sided_weibull_lmoments needs positive parameters, got sigma={sigma}, nu={nu}"
        )));
    }
    let g = gamma(1.0 + 1.0 / nu);
    let p = -1.0 - 1.0 / nu;
    let beta: Vec<f64> = (0..ell)
        .map(|k| {
            let mut pos = 0.0;
            for j in 0..=k {
                let c = lmom::binomial(k as u64, j as u64) as f64;
                pos += c * (-0.5f64).powi(j as i32) * ((j + 1) as f64).powf(p);
            }
            let neg = 0.5f64.powi(k as i32 + 1) * ((k + 1) as f64).powf(p);
            sigma * g * (0.5 * pos - neg)
        })
        .collect();
    let mut lam = lmoments_from_pwm(&beta)?;
    // Symmetry is exact; zero the odd orders rather than leave roundoff dust.
    for r in (3..=ell).step_by(2) {
        lam[r - 1] = 0.0;
    }
    if !lam.is_empty() {
        lam[0] = 0.0;
    }
    Ok(lam)
}

type LnKey = (u64, usize, u64);
static LN_BASE: OnceLock<Mutex<HashMap<LnKey, Vec<f64>>>> = OnceLock::new();

/// Lognormal(μ, σ) L-moments. λ₁ = e^{μ+σ²/2} and λ₂ = e^{μ+σ²/2} erf(σ/2)
/// are closed form; higher orders come from quadrature. Because the family is
/// a scale family in e^μ, the quadrature runs once per (σ, ℓ, tol) at μ = 0
/// and is cached; other μ reuse the cached base scaled by e^μ.
pub fn lognormal_lmoments(mu: f64, sigma: f64, ell: usize, rel_tol: f64) -> Result<Vec<f64>> {
    check_order(ell)?;
    if sigma <= 0.0 || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lognormal_lmoments needs finite mu and positive sigma, got mu={mu}, sigma={sigma}"
        )));
    }
    let mut base = if ell > 2 {
        let key: LnKey = (sigma.to_bits(), ell, rel_tol.to_bits());
        let cache = LN_BASE.get_or_init(|| Mutex::new(HashMap::new()));
        let hit = cache.lock().expect("lognormal cache poisoned").get(&key).cloned();
        match hit {
            Some(v) => v,
            None => {
                let v = lmom::population_lmoments_by_quadrature(
                    |u| (sigma * std_normal_quantile(u)).exp(),
                    ell,
                    rel_tol,
                )?;
                cache.lock().expect("lognormal cache poisoned").insert(key, v.clone());
                v
            }
        }
    } else {
        vec![0.0; ell]
    };
    // Closed forms override the first two orders of the cached base.
    base[0] = (0.5 * sigma * sigma).exp();
    if ell >= 2 {
        base[1] = base[0] * erf(0.5 * sigma);
    }
    let scale = mu.exp();
    Ok(base.into_iter().map(|l| scale * l).collect())
}

/// Gaussian(μ, σ) L-moments: λ₂ = σ/√π, λ₄ = λ₂ (30 arctan√2 / π − 9), odd
/// orders above the first vanish; orders past 4 come from quadrature.
fn gaussian_lmoments(mean: f64, sd: f64, ell: usize, rel_tol: f64) -> Result<Vec<f64>> {
    check_order(ell)?;
    let lam2 = sd / std::f64::consts::PI.sqrt();
    let tau4 = 30.0 * SQRT_2.atan() / std::f64::consts::PI - 9.0;
    let mut lam = if ell > 4 {
        lmom::population_lmoments_by_quadrature(|u| sd * std_normal_quantile(u), ell, rel_tol)?
    } else {
        vec![0.0; ell]
    };
    lam[0] = mean;
    if ell >= 2 {
        lam[1] = lam2;
    }
    if ell >= 4 {
        lam[3] = lam2 * tau4;
    }
    for r in (3..=ell).step_by(2) {
        lam[r - 1] = 0.0;
    }
    Ok(lam)
}

/// The parametric component: a template distribution with a chosen subset of
/// its canonical parameters exposed as the free vector θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    template: ComponentDistribution,
    free: Vec<usize>,
}

impl ParametricModel {
    /// `free_names` selects which canonical parameters θ ranges over, in the
    /// given order; the rest stay fixed at the template's values.
    pub fn new(template: ComponentDistribution, free_names: &[&str]) -> Result<Self> {
        template.validate()?;
        let names = template.param_names();
        let mut free = Vec::with_capacity(free_names.len());
        for want in free_names {
            let idx = names
                .iter()
                .position(|n| n == want)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "no parameter '{want}' in {:?} (have {:?})",
                        template, names
                    ))
                })?;
            if free.contains(&idx) {
                return Err(Error::InvalidParameter(format!("duplicate free parameter '{want}'")));
            }
            free.push(idx);
        }
        Ok(Self { template, free })
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn template(&self) -> &ComponentDistribution {
        &self.template
    }

    pub fn free_names(&self) -> Vec<&'static str> {
        let names = self.template.param_names();
        self.free.iter().map(|&i| names[i]).collect()
    }

    /// The distribution at a concrete θ.
    pub fn at(&self, theta: &[f64]) -> Result<ComponentDistribution> {
        if theta.len() != self.free.len() {
            return Err(Error::InvalidParameter(format!(
                "theta has length {}, model has {} free parameters",
                theta.len(),
                self.free.len()
            )));
        }
        let mut p = self.template.params();
        for (slot, &val) in self.free.iter().zip(theta) {
            p[*slot] = val;
        }
        self.template.with_params(&p)
    }

    /// ∂F(x|θ)/∂θ restricted to the free parameters.
    pub fn cdf_grad(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        let dist = self.at(theta)?;
        let full = dist.cdf_param_grad(x);
        Ok(self.free.iter().map(|&i| full[i]).collect())
    }
}

/// The constraint side: a model family for the unknown component, reduced to
/// the moment map α ↦ m(α) with m_r(α) = −λ_r(G_α) for r = 2..ℓ, matching the
/// sign of ∫ K_r(F₀(y)) dy for a distribution F₀ = G_α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintModel {
    model: ParametricModel,
    ell: usize,
    rel_tol: f64,
}

impl ConstraintModel {
    pub fn new(template: ComponentDistribution, free_names: &[&str], ell: usize) -> Result<Self> {
        check_order(ell)?;
        if ell < 2 {
            return Err(Error::InvalidParameter(
                "constraints start at order 2; need ell >= 2".into(),
            ));
        }
        Ok(Self {
            model: ParametricModel::new(template, free_names)?,
            ell,
            rel_tol: 1e-10,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Number of constraints, ℓ − 1.
    pub fn dim(&self) -> usize {
        self.ell - 1
    }

    pub fn alpha_dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &ParametricModel {
        &self.model
    }

    pub fn at(&self, alpha: &[f64]) -> Result<ComponentDistribution> {
        self.model.at(alpha)
    }

    /// m(α), length ℓ − 1.
    pub fn moments(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        let dist = self.model.at(alpha)?;
        let lam = dist.lmoments(self.ell, self.rel_tol)?;
        Ok(lam[1..].iter().map(|l| -l).collect())
    }

    /// ∇m(α) by central differences, step 1e−6 · max(1, |α_j|); returned as
    /// rows over constraints, columns over α.
    pub fn moment_gradient(&self, alpha: &[f64]) -> Result<Vec<Vec<f64>>> {
        let dim = self.dim();
        let mut grad = vec![vec![0.0; alpha.len()]; dim];
        let mut work = alpha.to_vec();
        for j in 0..alpha.len() {
            let h = 1e-6 * alpha[j].abs().max(1.0);
            work[j] = alpha[j] + h;
            let up = self.moments(&work)?;
            work[j] = alpha[j] - h;
            let dn = self.moments(&work)?;
            work[j] = alpha[j];
            for r in 0..dim {
                grad[r][j] = (up[r] - dn[r]) / (2.0 * h);
            }
        }
        Ok(grad)
    }
}

/// The data-generating two-component mixture λ F₁ + (1−λ) F₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub lambda: f64,
    pub parametric: ComponentDistribution,
    pub unknown: ComponentDistribution,
}

impl MixtureModel {
    pub fn new(
        lambda: f64,
        parametric: ComponentDistribution,
        unknown: ComponentDistribution,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("mixture weight {lambda} outside [0,1]")));
        }
        parametric.validate()?;
        unknown.validate()?;
        Ok(Self { lambda, parametric, unknown })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.lambda * self.parametric.cdf(x) + (1.0 - self.lambda) * self.unknown.cdf(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.lambda * self.parametric.pdf(x) + (1.0 - self.lambda) * self.unknown.pdf(x)
    }

    pub fn mean(&self) -> f64 {
        self.lambda * self.parametric.mean() + (1.0 - self.lambda) * self.unknown.mean()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let second = |d: &ComponentDistribution| d.variance() + d.mean() * d.mean();
        self.lambda * second(&self.parametric) + (1.0 - self.lambda) * second(&self.unknown)
            - m * m
    }

    /// Mixture quantile by bisection on the CDF (the mixture CDF has no
    /// closed inverse). Accurate to ~1e−13 relative.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0 < u && u < 1.0) {
            return Err(Error::InvalidParameter(format!("quantile level {u} outside (0,1)")));
        }
        let mut lo = self
            .parametric
            .quantile(u.min(1e-3))?
            .min(self.unknown.quantile(u.min(1e-3))?);
        let mut hi = self
            .parametric
            .quantile(u.max(1.0 - 1e-3))?
            .max(self.unknown.quantile(u.max(1.0 - 1e-3))?);
        if !lo.is_finite() {
            lo = hi.min(0.0) - 1.0;
        }
        if !hi.is_finite() {
            hi = lo.max(0.0) + 1.0;
        }
        let mut guard = 0;
        while self.cdf(lo) > u && guard < 200 {
            lo -= (hi - lo).abs().max(1.0);
            guard += 1;
        }
        while self.cdf(hi) < u && guard < 400 {
            hi += (hi - lo).abs().max(1.0);
            guard += 1;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Support box covering all but `tail` probability of each component.
    pub fn truncation_range(&self, tail: f64) -> Result<(f64, f64)> {
        let half = 0.5 * tail;
        let lo = self
            .parametric
            .quantile(half)?
            .min(self.unknown.quantile(half)?);
        let hi = self
            .parametric
            .quantile(1.0 - half)?
            .max(self.unknown.quantile(1.0 - half)?);
        Ok((lo, hi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        sample_mixture(n, self.lambda, &self.parametric, &self.unknown, rng)
    }
}

/// Draws n points from λ F₁ + (1−λ) F₀: each draw picks the component with a
/// fresh uniform, then inverts that component's CDF on another fresh uniform.
pub fn sample_mixture<R: Rng + ?Sized>(
    n: usize,
    lambda: f64,
    parametric: &ComponentDistribution,
    unknown: &ComponentDistribution,
    rng: &mut R,
) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let pick: f64 = rng.gen();
            if pick < lambda {
                parametric.draw(rng)
            } else {
                unknown.draw(rng)
            }
        })
        .collect()
}
