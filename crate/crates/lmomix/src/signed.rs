//! The signed sub-CDF F₀(y|φ) = (F(y) − λ F₁(y|θ)) / (1 − λ) and its
//! admissibility diagnostics.
//!
//! Away from the set Φ⁺ of proposals for which F₀ is a genuine distribution
//! function, F₀ can leave [0,1] or decrease; the estimation machinery works
//! with it regardless (the K_r transforms are polynomials, defined on all of
//! ℝ), so admissibility is reported as a diagnostic flag rather than being
//! enforced.

use crate::dist::{ComponentDistribution, MixtureModel};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Right-continuous empirical CDF over a sorted copy of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InsufficientData("empirical CDF of an empty sample".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("sample contains non-finite values".into()));
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// F_n(y) = #{x_i ≤ y} / n.
    pub fn eval(&self, y: f64) -> f64 {
        let k = self.sorted.partition_point(|&x| x <= y);
        k as f64 / self.sorted.len() as f64
    }

    pub fn range(&self) -> (f64, f64) {
        (self.sorted[0], *self.sorted.last().expect("nonempty"))
    }

    /// Jump locations for quadrature plans: every order statistic up to 2000
    /// points, thinned to every ⌈n/2000⌉-th beyond that.
    pub fn breakpoints(&self) -> Vec<f64> {
        let n = self.sorted.len();
        let stride = n.div_ceil(2000);
        self.sorted.iter().copied().step_by(stride).collect()
    }

    /// Kolmogorov-Smirnov distance sup_y |F_n(y) − F(y)|, via the order
    /// statistic identity: the supremum is attained immediately at or before a
    /// jump, so it equals max_i max(i/n − F(x_(i)), F(x_(i)) − (i−1)/n).
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        let mut sup: f64 = 0.0;
        for (i0, &x) in self.sorted.iter().enumerate() {
            let f = cdf(x);
            sup = sup.max((i0 as f64 + 1.0) / n - f).max(f - i0 as f64 / n);
        }
        sup
    }
}

/// The target CDF being decomposed: an empirical CDF of observed data, or a
/// fully known mixture (used for population-level checks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetCdf {
    Empirical(EmpiricalCdf),
    Model(MixtureModel),
}

impl TargetCdf {
    pub fn from_sample(data: &[f64]) -> Result<Self> {
        Ok(TargetCdf::Empirical(EmpiricalCdf::new(data)?))
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            TargetCdf::Empirical(e) => e.eval(y),
            TargetCdf::Model(m) => m.cdf(y),
        }
    }

    /// Sample size when empirical.
    pub fn n(&self) -> Option<usize> {
        match self {
            TargetCdf::Empirical(e) => Some(e.n()),
            TargetCdf::Model(_) => None,
        }
    }

    /// Interval carrying (essentially) all mass of the target.
    pub fn range_hint(&self) -> Result<(f64, f64)> {
        match self {
            TargetCdf::Empirical(e) => Ok(e.range()),
            TargetCdf::Model(m) => m.truncation_range(1e-8),
        }
    }

    /// Integration breakpoints: jump locations for data, quantile-spaced knots
    /// for a smooth model.
    pub fn breakpoints(&self) -> Result<Vec<f64>> {
        match self {
            TargetCdf::Empirical(e) => Ok(e.breakpoints()),
            TargetCdf::Model(m) => (1..64).map(|j| m.quantile(j as f64 / 64.0)).collect(),
        }
    }
}

/// F₀(·|φ) for a fixed proposal (λ, θ).
#[derive(Debug, Clone)]
pub struct SignedSubCdf<'a> {
    target: &'a TargetCdf,
    lambda: f64,
    parametric: ComponentDistribution,
}

impl<'a> SignedSubCdf<'a> {
    pub fn new(target: &'a TargetCdf, lambda: f64, parametric: ComponentDistribution) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "signed sub-CDF needs 0 <= lambda < 1, got {lambda}"
            )));
        }
        parametric.validate()?;
        Ok(Self { target, lambda, parametric })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn parametric(&self) -> &ComponentDistribution {
        &self.parametric
    }

    pub fn target(&self) -> &'a TargetCdf {
        self.target
    }

    pub fn eval(&self, y: f64) -> f64 {
        (self.target.eval(y) - self.lambda * self.parametric.cdf(y)) / (1.0 - self.lambda)
    }
}

/// F₀(y|φ) at a point; convenience wrapper over [`SignedSubCdf`].
pub fn eval_signed_cdf(
    target: &TargetCdf,
    lambda: f64,
    parametric: &ComponentDistribution,
    y: f64,
) -> Result<f64> {
    Ok(SignedSubCdf::new(target, lambda, *parametric)?.eval(y))
}

/// Population Φ⁺ membership for a known data model: F₀ is a valid CDF iff
/// f_T(y) ≥ λ f₁(y) everywhere, checked on `grid` quantile-spaced points of
/// the data model with tolerance −1e−9 on the normalized difference.
pub fn phi_plus_check(
    data_model: &MixtureModel,
    lambda: f64,
    parametric: &ComponentDistribution,
    grid: usize,
) -> Result<bool> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "phi_plus_check needs 0 <= lambda < 1, got {lambda}"
        )));
    }
    if grid < 2 {
        return Err(Error::InvalidParameter("phi_plus_check needs at least 2 grid points".into()));
    }
    parametric.validate()?;
    const EPS_TOL: f64 = -1e-9;
    for j in 0..grid {
        let u = (j as f64 + 0.5) / grid as f64;
        let y = data_model.quantile(u)?;
        let slope = (data_model.pdf(y) - lambda * parametric.pdf(y)) / (1.0 - lambda);
        // Normalize by the local density scale so the tolerance is unitless.
        let scale = data_model.pdf(y).max(parametric.pdf(y)).max(1e-300);
        if slope / scale < EPS_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sample analogue of the Φ⁺ flag. The plug-in F₀ differs from its population
/// version by at most sup|F_n − F| / (1−λ), so violations are only meaningful
/// past that sampling band; we use twice the 95% DKW bound, 2·1.36/√n, scaled
/// by 1/(1−λ). The flag is false when the plug-in F₀ at the order statistics
/// leaves [−s, 1+s] or falls more than s below its running maximum. A
/// diagnostic heuristic, not a test with a guaranteed level.
pub fn empirical_phi_plus_proxy(
    ecdf: &EmpiricalCdf,
    lambda: f64,
    parametric: &ComponentDistribution,
) -> Result<bool> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "empirical_phi_plus_proxy needs 0 <= lambda < 1, got {lambda}"
        )));
    }
    parametric.validate()?;
    let n = ecdf.n() as f64;
    let slack = 2.72 / ((1.0 - lambda) * n.sqrt());
    let mut running_max = f64::NEG_INFINITY;
    for (i, &x) in ecdf.sorted().iter().enumerate() {
        let v = ((i as f64 + 1.0) / n - lambda * parametric.cdf(x)) / (1.0 - lambda);
        running_max = running_max.max(v);
        if v < -slack || v > 1.0 + slack || v < running_max - slack {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ComponentDistribution::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empirical_cdf_steps() {
        let e = EmpiricalCdf::new(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(e.eval(1.0), 1.0 / 3.0);
        assert_eq!(e.eval(1.5), 1.0 / 3.0);
        assert_eq!(e.eval(3.0), 1.0);
        assert_eq!(e.eval(99.0), 1.0);
        assert!(EmpiricalCdf::new(&[]).is_err());
        assert!(EmpiricalCdf::new(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn breakpoint_thinning() {
        let small: Vec<f64> = (0..1500).map(|i| i as f64).collect();
        assert_eq!(EmpiricalCdf::new(&small).unwrap().breakpoints().len(), 1500);
        let big: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        let bp = EmpiricalCdf::new(&big).unwrap().breakpoints();
        assert!(bp.len() <= 2000);
        assert!(bp.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ks_identity_against_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = Weibull { scale: 1.0, shape: 1.5 };
        let xs: Vec<f64> = (0..7).map(|_| d.draw(&mut rng)).collect();
        let e = EmpiricalCdf::new(&xs).unwrap();
        let formula = e.ks_distance(|y| d.cdf(y));
        let mut brute: f64 = 0.0;
        for i in 0..200_000 {
            let y = -0.5 + 4.0 * i as f64 / 200_000.0;
            brute = brute.max((e.eval(y) - d.cdf(y)).abs());
        }
        assert!(formula >= brute - 1e-12);
        assert!(formula - brute <= 2e-4, "formula {formula} vs grid {brute}");

        let two = EmpiricalCdf::new(&[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(two.ks_distance(|y| y.clamp(0.0, 1.0)), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn lambda_zero_recovers_target() {
        let model = MixtureModel::new(
            0.3,
            Weibull { scale: 0.5, shape: 2.0 },
            Weibull { scale: 1.0, shape: 1.0 },
        )
        .unwrap();
        let target = TargetCdf::Model(model);
        let sub = SignedSubCdf::new(&target, 0.0, Gaussian { mean: 0.0, sd: 1.0 }).unwrap();
        for i in 0..50 {
            let y = 0.1 * i as f64;
            assert_abs_diff_eq!(sub.eval(y), target.eval(y));
        }
    }

    #[test]
    fn pure_parametric_target_is_fixed_point() {
        // If the data are exactly F₁, then (F₁ − λF₁)/(1−λ) = F₁ for any λ.
        let f1 = LogNormal { location: 1.0, scale: 0.4 };
        let model = MixtureModel::new(1.0, f1, Exponential { rate: 1.0 }).unwrap();
        let target = TargetCdf::Model(model);
        for &lam in &[0.1, 0.5, 0.9] {
            let sub = SignedSubCdf::new(&target, lam, f1).unwrap();
            for i in 1..40 {
                let y = 0.25 * i as f64;
                assert_abs_diff_eq!(sub.eval(y), f1.cdf(y), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn true_mixture_cancels_to_unknown_component() {
        let parametric = Weibull { scale: 0.5, shape: 2.0 };
        let unknown = Weibull { scale: 1.0, shape: 1.0 };
        let target = TargetCdf::Model(MixtureModel::new(0.3, parametric, unknown).unwrap());
        let sub = SignedSubCdf::new(&target, 0.3, parametric).unwrap();
        for i in 0..200 {
            let y = 0.05 * i as f64;
            assert_abs_diff_eq!(sub.eval(y), unknown.cdf(y), epsilon = 1e-10);
        }
    }

    #[test]
    fn phi_plus_true_at_truth_false_for_overweighted_slow_tail() {
        let model = MixtureModel::new(
            0.7,
            Exponential { rate: 1.5 },
            Exponential { rate: 0.75 },
        )
        .unwrap();
        assert!(phi_plus_check(&model, 0.7, &Exponential { rate: 1.5 }, 512).unwrap());
        // A proposal whose parametric tail decays slower than the data's must
        // eventually push F₀ downward.
        assert!(!phi_plus_check(&model, 0.99, &Exponential { rate: 0.1 }, 512).unwrap());
        assert!(phi_plus_check(&model, 0.0, &Exponential { rate: 0.1 }, 512).unwrap());
    }

    #[test]
    fn empirical_proxy_accepts_truth_rejects_gross_misfit() {
        let model = MixtureModel::new(
            0.3,
            Weibull { scale: 0.5, shape: 2.0 },
            Weibull { scale: 1.0, shape: 1.0 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs = model.sample(4000, &mut rng);
        let e = EmpiricalCdf::new(&xs).unwrap();
        assert!(empirical_phi_plus_proxy(&e, 0.3, &Weibull { scale: 0.5, shape: 2.0 }).unwrap());
        assert!(!empirical_phi_plus_proxy(&e, 0.97, &Weibull { scale: 0.5, shape: 2.0 }).unwrap());
    }

    proptest! {
        // F₀ at the generating proposal recovers the unknown component's CDF,
        // for arbitrary mixing weights and evaluation points.
        #[test]
        fn plug_in_truth_recovers_unknown(
            lam in 0.0f64..0.95,
            y in -2.0f64..8.0,
            nu in 0.5f64..4.0,
        ) {
            let parametric = LogNormal { location: 0.5, scale: 0.6 };
            let unknown = Weibull { scale: 1.0, shape: nu };
            let target = TargetCdf::Model(MixtureModel::new(lam, parametric, unknown).unwrap());
            let v = eval_signed_cdf(&target, lam, &parametric, y).unwrap();
            prop_assert!((v - unknown.cdf(y)).abs() <= 1e-12);
        }
    }
}
