//! Shifted Legendre polynomials, their integrals K_r, and L-moment computation.
//!
//! The shifted Legendre polynomial of order r on [0,1] is
//!
//! ```text
//! L_r(u) = Σ_{k=0}^{r} (−1)^{r−k} C(r,k) C(r+k,k) u^k ,
//! ```
//!
//! and K_r(t) = ∫₀ᵗ L_{r−1}(u) du for r ≥ 2, so that K_r(0) = K_r(1) = 0 and
//! K_r′ = L_{r−1}. L-moments are the projections of the quantile function on
//! this basis: λ_r = ∫₀¹ F⁻¹(u) L_{r−1}(u) du. For r ≥ 2 integration by parts
//! gives the sign convention used throughout the estimators:
//! ∫ K_r(F(y)) dy = −λ_r.
//!
//! Coefficients are built with exact i128 integer arithmetic. Evaluation of the
//! basis in f64 uses the three-term recurrence rather than the monomial form;
//! the recurrence stays accurate at orders where the monomial coefficients
//! (which grow like 4^r) no longer fit in the 53-bit mantissa.

use crate::error::{Error, Result};
use crate::quad::{self, IntegrationPlan};

/// Largest supported polynomial order. Binomial products in the coefficient
/// table stay within i128 up to this order.
pub const MAX_ORDER: usize = 32;

pub(crate) fn binomial(n: u64, k: u64) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for j in 0..k {
        // Exact at every step: acc * (n-j) is divisible by (j+1) after the multiply.
        acc = acc * (n - j) as i128 / (j + 1) as i128;
    }
    acc
}

/// A shifted Legendre polynomial on [0,1] with exact integer coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftedLegendre {
    order: usize,
    coeffs: Vec<i128>,
}

impl ShiftedLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::InvalidParameter(format!(
                "shifted Legendre order {order} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let r = order as u64;
        let coeffs = (0..=r)
            .map(|k| {
                let sign = if (r - k) % 2 == 0 { 1 } else { -1 };
                sign * binomial(r, k) * binomial(r + k, k)
            })
            .collect();
        Ok(Self { order, coeffs })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Exact monomial coefficients for u^0..u^r.
    pub fn coefficients(&self) -> &[i128] {
        &self.coeffs
    }

    pub fn coefficients_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(|&c| c as f64).collect()
    }

    /// Horner evaluation of the monomial form.
    pub fn eval(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * u + c as f64;
        }
        acc
    }
}

/// Evaluates L_0..L_max at t via the shifted three-term recurrence
/// (n+1) L_{n+1}(t) = (2n+1)(2t−1) L_n(t) − n L_{n−1}(t).
fn legendre_all(t: f64, max: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if max == 0 {
        return;
    }
    let x = 2.0 * t - 1.0;
    out.push(x);
    for n in 1..max {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * out[n] - nf * out[n - 1]) / (nf + 1.0);
        out.push(next);
    }
}

/// The basis K = (K_2, …, K_ℓ) of integrated shifted Legendre polynomials,
/// with first and second derivatives.
#[derive(Debug, Clone)]
pub struct LMomentBasis {
    ell: usize,
}

impl LMomentBasis {
    pub fn new(ell: usize) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&ell) {
            return Err(Error::InvalidParameter(format!(
                "basis order ell = {ell} outside the supported range 2..={MAX_ORDER}"
            )));
        }
        Ok(Self { ell })
    }

    pub fn max_order(&self) -> usize {
        self.ell
    }

    /// Number of constraint components, ℓ−1.
    pub fn dim(&self) -> usize {
        self.ell - 1
    }

    /// Coefficient table c_{r,k} = (−1)^{r−k−1} C(r−1,k) C(r+k−1,k) for
    /// k = 0..r−1; these are exactly the monomial coefficients of L_{r−1}.
    pub fn c_table(&self, r: usize) -> Result<Vec<i128>> {
        self.check_order(r)?;
        Ok(ShiftedLegendre::new(r - 1)?.coefficients().to_vec())
    }

    /// Monomial coefficients of K_r over t^1..t^r: c_{r,k}/(k+1) at power t^{k+1}.
    pub fn k_coefficients(&self, r: usize) -> Result<Vec<f64>> {
        let c = self.c_table(r)?;
        Ok(c.iter()
            .enumerate()
            .map(|(k, &ck)| ck as f64 / (k + 1) as f64)
            .collect())
    }

    fn check_order(&self, r: usize) -> Result<()> {
        if !(2..=self.ell).contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "order r = {r} outside basis range 2..={}",
                self.ell
            )));
        }
        Ok(())
    }

    /// K_2(t)..K_ℓ(t) into `out` (length ℓ−1), using
    /// ∫₀ᵗ L_n = (L_{n+1}(t) − L_{n−1}(t)) / (2(2n+1)) for n ≥ 1.
    pub fn eval_k(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let mut l = Vec::with_capacity(self.ell + 1);
        legendre_all(t, self.ell, &mut l);
        for r in 2..=self.ell {
            let n = r - 1;
            out[r - 2] = (l[n + 1] - l[n - 1]) / (2.0 * (2.0 * n as f64 + 1.0));
        }
    }

    /// K_r′(t) = L_{r−1}(t) for r = 2..ℓ.
    pub fn eval_k_deriv(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let mut l = Vec::with_capacity(self.ell);
        legendre_all(t, self.ell - 1, &mut l);
        out.copy_from_slice(&l[1..self.ell]);
    }

    /// K_r″(t) = L_{r−1}′(t), via the standard-interval derivative recurrence
    /// P′_{n+1} = P′_{n−1} + (2n+1) P_n and the chain-rule factor 2.
    pub fn eval_k_second(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let x = 2.0 * t - 1.0;
        let max = self.ell - 1;
        let mut p_prev = 1.0; // P_0
        let mut p_cur = x; // P_1
        let mut dp_prev = 0.0; // P'_0
        let mut dp_cur = 1.0; // P'_1
        for n in 1..=max {
            // out slot for r = n+1 holds L'_n = 2 P'_n.
            if n >= 1 {
                out[n - 1] = 2.0 * dp_cur;
            }
            if n < max {
                let nf = n as f64;
                let p_next = ((2.0 * nf + 1.0) * x * p_cur - nf * p_prev) / (nf + 1.0);
                let dp_next = dp_prev + (2.0 * nf + 1.0) * p_cur;
                p_prev = p_cur;
                p_cur = p_next;
                dp_prev = dp_cur;
                dp_cur = dp_next;
            }
        }
    }
}

/// Unbiased sample L-moments λ̂_1..λ̂_ℓ.
///
/// Uses the probability-weighted-moment form of the combinatorial
/// order-statistics estimator: with b_k = (1/n) Σ_i [C(i−1,k)/C(n−1,k)] X_{i:n},
/// λ_r = Σ_k c_{r,k} b_k where c_{r,k} are the coefficients of L_{r−1}. This is
/// algebraically identical to averaging E[X_{j:r}] over all size-r subsamples
/// and costs O(nℓ) after sorting.
pub fn sample_lmoments(data: &[f64], ell: usize) -> Result<Vec<f64>> {
    if ell == 0 || ell > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "requested {ell} L-moments; supported range is 1..={MAX_ORDER}"
        )));
    }
    let n = data.len();
    if n < ell {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot determine {ell} L-moments"
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "data contains non-finite values".into(),
        ));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let nf = n as f64;
    let mut b = vec![0.0; ell];
    for (i0, &x) in sorted.iter().enumerate() {
        // weight for b_k is C(i0, k) / C(n-1, k), built incrementally in k
        let mut w = 1.0;
        b[0] += x;
        for k in 1..ell {
            w *= (i0 as f64 - (k as f64 - 1.0)) / (nf - k as f64);
            if w == 0.0 {
                break;
            }
            b[k] += w * x;
        }
    }
    for bk in &mut b {
        *bk /= nf;
    }

    let mut lambda = Vec::with_capacity(ell);
    for r in 1..=ell {
        let leg = ShiftedLegendre::new(r - 1)?;
        let val = leg
            .coefficients()
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * b[k])
            .sum();
        lambda.push(val);
    }
    Ok(lambda)
}

/// Population L-moments λ_1..λ_ℓ from a quantile function, by adaptive
/// quadrature of ∫₀¹ F⁻¹(u) L_{r−1}(u) du. Integration nodes are strictly
/// interior to (0,1), so integrable endpoint singularities of the quantile are
/// handled by subdivision rather than evaluated.
pub fn population_lmoments_by_quadrature(
    quantile: impl Fn(f64) -> f64,
    ell: usize,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    if ell == 0 || ell > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "requested {ell} L-moments; supported range is 1..={MAX_ORDER}"
        )));
    }
    let plan = IntegrationPlan::new(0.0, 1.0)?
        .with_breakpoints(vec![0.25, 0.5, 0.75])?
        .with_rel_tol(rel_tol)
        .with_max_subdivisions(800);
    let mut legendre = Vec::new();
    let res = quad::integrate_vec(ell, &plan, |u, out| {
        let q = quantile(u);
        legendre_all(u, ell - 1, &mut legendre);
        for r in 0..ell {
            out[r] = q * legendre[r];
        }
    });
    if !res.converged {
        return Err(Error::QuadratureNonConvergent {
            achieved: res.abs_error.iter().cloned().fold(0.0, f64::max),
            requested: rel_tol,
        });
    }
    Ok(res.values)
}
