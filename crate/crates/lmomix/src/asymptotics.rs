//! Plug-in asymptotic covariance of the joint estimator (φ̂, ξ̂).
//!
//! The estimating system pairs the constraint vector c(φ) = m(α) − ∫K(F₀)dy
//! with its Gram matrix Ω = ∫K(F₀)K(F₀)ᵗdy. Sampling noise enters through the
//! empirical CDF inside F₀; the constraint-part covariance is
//!
//! ```text
//! Σ_{r,s} = ∬ (F(x∧y) − F(x)F(y)) K_r′(F₀(x)) K_s′(F₀(y)) dx dy,
//! ```
//!
//! a Brownian-bridge kernel against the shifted-Legendre polynomials
//! K_r′(t) = L_{r−1}(t), evaluated here with the plug-in pair (F_n, φ̂).
//!
//! The delta-method assembly inverts the bordered stationarity system. With
//! J = ∂c/∂φ and Ω at the solution,
//!
//! ```text
//! Σ̃ = (Jᵗ Ω⁻¹ J)⁻¹,   H = Σ̃ Jᵗ Ω⁻¹,   P = Ω⁻¹ − Ω⁻¹ J Σ̃ Jᵗ Ω⁻¹,
//! ```
//!
//! so that [[0, Jᵗ], [J, Ω]]⁻¹ = [[−Σ̃, H], [Hᵗ, P]] exactly, which forces the
//! annihilation identity P·J = 0. The joint covariance of (φ̂, ξ̂) is
//! (H; P) Σ (Hᵗ Pᵗ) and per-parameter standard errors are
//! sqrt(diag(HΣHᵗ)/n).

use crate::dist::{ConstraintModel, ParametricModel};
use crate::dual;
use crate::error::{Error, Result};
use crate::linalg::{assert_psd, symmetrize, SpdSolver};
use crate::lmom::LMomentBasis;
use crate::quad::{self, IntegrationPlan};
use crate::signed::SignedSubCdf;
use nalgebra::DMatrix;

/// Default Gauss panel count per axis for the 2-D covariance integral; the
/// accuracy check re-evaluates at half this resolution.
pub const COVARIANCE_PANELS: usize = 128;

/// Relative tolerance for the 2-D resolution check.
pub const COVARIANCE_REL_TOL: f64 = 1e-6;

/// The constraint-part covariance and its quadrature diagnostics.
#[derive(Debug, Clone)]
pub struct CovarianceIntegral {
    pub sigma: DMatrix<f64>,
    /// Max-norm difference between the full- and half-resolution grids.
    pub abs_error: f64,
    pub converged: bool,
    /// Crude bound on the mass ignored beyond the truncation bounds, from the
    /// bridge factor at the boundary nodes.
    pub tail_estimate: f64,
}

/// One composite-rule pass at a given panel count. Splitting at the diagonal
/// removes the kink of x ∧ y:
///
/// ```text
/// Σ_{r,s} = ∫ F(x) [P_r(x) I_s(x) + P_s(x) I_r(x)] dx − a_r a_s,
/// I_s(x)  = ∫_x^hi P_s(F₀(y)) dy,      a_r = ∫ F(x) P_r(F₀(x)) dx,
/// ```
///
/// every factor smooth between breakpoints. I_s at a node is the exact panel
/// remainder (a fresh sub-panel Gauss rule) plus the full mass of the later
/// panels, so the whole pass stays linear in the node count.
fn covariance_pass(
    basis: &LMomentBasis,
    sub: &SignedSubCdf<'_>,
    plan: &IntegrationPlan,
    panels: usize,
) -> (DMatrix<f64>, f64) {
    let dim = basis.dim();
    let edges = quad::panel_edges(plan, panels);
    let gl = |a: f64, b: f64| -> [(f64, f64); 4] {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        [
            (c - h * quad::XGL4[1], h * quad::WGL4[1]),
            (c - h * quad::XGL4[0], h * quad::WGL4[0]),
            (c + h * quad::XGL4[0], h * quad::WGL4[0]),
            (c + h * quad::XGL4[1], h * quad::WGL4[1]),
        ]
    };
    let panels: Vec<(f64, f64)> = edges
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect();
    let npan = panels.len();

    // Per-panel mass M_r[p] = ∫_panel P_r(F₀) dy and its suffix over later
    // panels; per-node values of F, P_r, and the within-panel remainder.
    let mut kbuf = vec![0.0; dim];
    let mut mass = vec![0.0; dim * npan];
    let mut node_x = vec![0.0; 4 * npan];
    let mut node_w = vec![0.0; 4 * npan];
    let mut node_f = vec![0.0; 4 * npan];
    let mut node_k = vec![0.0; dim * 4 * npan];
    let mut node_rem = vec![0.0; dim * 4 * npan];
    for (p, &(a, b)) in panels.iter().enumerate() {
        for (q, (x, w)) in gl(a, b).into_iter().enumerate() {
            let i = 4 * p + q;
            node_x[i] = x;
            node_w[i] = w;
            node_f[i] = sub.target().eval(x);
            basis.eval_k_deriv(sub.eval(x), &mut kbuf);
            for r in 0..dim {
                node_k[r * 4 * npan + i] = kbuf[r];
                mass[r * npan + p] += w * kbuf[r];
            }
            // Remainder ∫_x^b P_r(F₀) on the same smooth piece.
            for (y, wy) in gl(x, b) {
                basis.eval_k_deriv(sub.eval(y), &mut kbuf);
                for r in 0..dim {
                    node_rem[r * 4 * npan + i] += wy * kbuf[r];
                }
            }
        }
    }
    let mut suffix = vec![0.0; dim * npan];
    for r in 0..dim {
        let mut acc = 0.0;
        for p in (0..npan).rev() {
            suffix[r * npan + p] = acc;
            acc += mass[r * npan + p];
        }
    }

    let nn = 4 * npan;
    let mut a_vec = vec![0.0; dim];
    let mut inner = vec![0.0; dim * nn]; // I_r at each node
    for r in 0..dim {
        for p in 0..npan {
            for q in 0..4 {
                let i = 4 * p + q;
                inner[r * nn + i] = node_rem[r * nn + i] + suffix[r * npan + p];
            }
        }
        a_vec[r] = (0..nn).map(|i| node_w[i] * node_f[i] * node_k[r * nn + i]).sum();
    }
    let mut sigma = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for s in r..dim {
            let (pr, ps) = (&node_k[r * nn..(r + 1) * nn], &node_k[s * nn..(s + 1) * nn]);
            let (ir, is) = (&inner[r * nn..(r + 1) * nn], &inner[s * nn..(s + 1) * nn]);
            let mut min_part = 0.0;
            for i in 0..nn {
                min_part += node_w[i] * node_f[i] * (pr[i] * is[i] + ps[i] * ir[i]);
            }
            let v = min_part - a_vec[r] * a_vec[s];
            sigma[(r, s)] = v;
            sigma[(s, r)] = v;
        }
    }
    let bridge_lo = node_f[0] * (1.0 - node_f[0]);
    let bridge_hi = node_f[nn - 1] * (1.0 - node_f[nn - 1]);
    let width = node_x[nn - 1] - node_x[0];
    let kmax = node_k.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tail = bridge_lo.max(bridge_hi).abs() * (width * kmax).powi(2);
    (sigma, tail)
}

/// Σ at the plug-in (target CDF, φ̂), with a half-resolution accuracy check.
/// The matrix is symmetric by construction; PSD is asserted to quadrature
/// tolerance.
pub fn constraint_covariance(
    basis: &LMomentBasis,
    sub: &SignedSubCdf<'_>,
    plan: &IntegrationPlan,
    panels: usize,
) -> Result<CovarianceIntegral> {
    if panels < 2 {
        return Err(Error::InvalidParameter(
            "covariance grid needs at least 2 panels per axis".into(),
        ));
    }
    let (coarse, _) = covariance_pass(basis, sub, plan, panels / 2);
    let (sigma, tail_estimate) = covariance_pass(basis, sub, plan, panels);
    let abs_error = (&sigma - &coarse).amax();
    let scale = sigma.amax().max(1e-12);
    if abs_error > COVARIANCE_REL_TOL * scale {
        return Err(Error::QuadratureNonConvergent {
            achieved: abs_error / scale,
            requested: COVARIANCE_REL_TOL,
        });
    }
    assert_psd(&sigma, 1e-8, "constraint covariance")?;
    Ok(CovarianceIntegral {
        sigma,
        abs_error,
        converged: true,
        tail_estimate,
    })
}

/// The Jacobian blocks of the stationarity system at a proposal.
#[derive(Debug, Clone)]
pub struct JacobianBlocks {
    /// ∂c/∂φ, shape (ℓ−1) × (1 + dim θ + dim α), columns ordered (λ, θ, α).
    pub j_phi_xi: DMatrix<f64>,
    /// Ω at the proposal, (ℓ−1) × (ℓ−1).
    pub j_xi_xi: DMatrix<f64>,
    pub quadrature_converged: bool,
}

/// Differentiates c(φ) = m(α) − ∫K(F₀)dy. Under F₀ = (F_T − λF₁)/(1−λ):
/// ∂F₀/∂λ = (F_T − F₁)/(1−λ)² and ∂F₀/∂θ = −(λ/(1−λ)) ∂F₁/∂θ, so the λ-column
/// is −∫(F_T−F₁)/(1−λ)² K′(F₀)dy, the θ-columns are
/// +(λ/(1−λ))∫∂F₁/∂θ K′(F₀)dy, and the α-columns are ∇m. `sub` must be built
/// at the same (λ, θ) passed here; θ-derivatives of F₁ come from the
/// parametric family's closed-form CDF gradient.
pub fn jacobian_blocks(
    basis: &LMomentBasis,
    sub: &SignedSubCdf<'_>,
    plan: &IntegrationPlan,
    parametric: &ParametricModel,
    theta: &[f64],
    constraints: &ConstraintModel,
    alpha: &[f64],
) -> Result<JacobianBlocks> {
    let dim = basis.dim();
    let theta_dim = parametric.dim();
    let alpha_dim = constraints.alpha_dim();
    let lambda = sub.lambda();
    let component = parametric.at(theta)?;
    let own = sub.parametric().params();
    if component.params() != own {
        return Err(Error::InvalidParameter(
            "jacobian_blocks: sub-CDF and θ describe different parametric components".into(),
        ));
    }

    // Fused pass: [K′_r·(F_T−F₁)] then [K′_r·∂F₁/∂θ_j], r fastest.
    let total = dim * (1 + theta_dim);
    let mut kd = vec![0.0; dim];
    let res = quad::try_integrate_vec(total, plan, |y, out| {
        basis.eval_k_deriv(sub.eval(y), &mut kd);
        let f1 = component.cdf(y);
        let diff = sub.target().eval(y) - f1;
        for r in 0..dim {
            out[r] = kd[r] * diff;
        }
        let grad = parametric.cdf_grad(theta, y)?;
        for (j, g) in grad.iter().enumerate() {
            for r in 0..dim {
                out[dim * (1 + j) + r] = kd[r] * g;
            }
        }
        Ok(())
    })?;

    let mut j = DMatrix::zeros(dim, 1 + theta_dim + alpha_dim);
    let lam_fac = -1.0 / ((1.0 - lambda) * (1.0 - lambda));
    for r in 0..dim {
        j[(r, 0)] = lam_fac * res.values[r];
    }
    let theta_fac = lambda / (1.0 - lambda);
    for jj in 0..theta_dim {
        for r in 0..dim {
            j[(r, 1 + jj)] = theta_fac * res.values[dim * (1 + jj) + r];
        }
    }
    let grad_m = constraints.moment_gradient(alpha)?;
    for (r, row) in grad_m.iter().enumerate() {
        for (jj, g) in row.iter().enumerate() {
            j[(r, 1 + theta_dim + jj)] = *g;
        }
    }

    let ints = dual::moment_integrals(basis, sub, plan)?;
    Ok(JacobianBlocks {
        j_phi_xi: j,
        j_xi_xi: ints.omega,
        quadrature_converged: res.converged && ints.converged,
    })
}

/// Full plug-in report: block matrices, joint covariance, and standard errors.
#[derive(Debug, Clone)]
pub struct AsymptoticReport {
    pub sigma: DMatrix<f64>,
    pub j_phi_xi: DMatrix<f64>,
    pub j_xi_xi: DMatrix<f64>,
    pub sigma_tilde: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Joint covariance of (φ̂, ξ̂): (H; P) Σ (Hᵗ Pᵗ), before the 1/n scaling.
    pub s: DMatrix<f64>,
    /// sqrt(diag(HΣHᵗ)/n), one per φ component.
    pub standard_errors: Vec<f64>,
    pub n: usize,
    pub cond_omega: f64,
    pub cond_profile: f64,
    pub sigma_abs_error: f64,
    pub quadrature_converged: bool,
}

impl AsymptoticReport {
    /// Covariance of φ̂ alone: HΣHᵗ/n.
    pub fn phi_covariance(&self) -> DMatrix<f64> {
        let dim = self.h.nrows();
        self.s.view((0, 0), (dim, dim)).into_owned() / self.n as f64
    }

    fn rows(m: &DMatrix<f64>) -> serde_json::Value {
        serde_json::json!(m
            .row_iter()
            .map(|r| r.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma": Self::rows(&self.sigma),
            "j_phi_xi": Self::rows(&self.j_phi_xi),
            "j_xi_xi": Self::rows(&self.j_xi_xi),
            "sigma_tilde": Self::rows(&self.sigma_tilde),
            "h": Self::rows(&self.h),
            "p": Self::rows(&self.p),
            "joint_covariance": Self::rows(&self.s),
            "standard_errors": self.standard_errors,
            "n": self.n,
            "cond_omega": self.cond_omega,
            "cond_profile": self.cond_profile,
            "sigma_abs_error": self.sigma_abs_error,
            "quadrature_converged": self.quadrature_converged,
            "plug_in": true,
        })
    }
}

/// Assembles Σ̃, H, P, the joint covariance, and standard errors from the
/// blocks. Fails with diagnostics when Ω or the profile information JᵗΩ⁻¹J is
/// ill-conditioned past the shared 1e12 limit.
pub fn assemble_covariance(
    blocks: &JacobianBlocks,
    cov: &CovarianceIntegral,
    n: usize,
) -> Result<AsymptoticReport> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample size for standard errors must be positive".into(),
        ));
    }
    let j = &blocks.j_phi_xi;
    let dim_phi = j.ncols();
    let dim_con = j.nrows();
    if cov.sigma.nrows() != dim_con {
        return Err(Error::InvalidParameter(format!(
            "covariance is {}x{} but the system has {dim_con} constraints",
            cov.sigma.nrows(),
            cov.sigma.ncols()
        )));
    }
    let omega_solver = SpdSolver::new(&blocks.j_xi_xi, "constraint Gram matrix")?;
    let a = omega_solver.solve_matrix(j); // Ω⁻¹ J
    let info = symmetrize(&(j.transpose() * &a));
    let info_solver = SpdSolver::new(&info, "profile information")?;
    let sigma_tilde = symmetrize(&info_solver.inverse());
    let h = &sigma_tilde * a.transpose();
    let p = symmetrize(&(omega_solver.inverse() - &a * &sigma_tilde * a.transpose()));

    let mut hp = DMatrix::zeros(dim_phi + dim_con, dim_con);
    hp.view_mut((0, 0), (dim_phi, dim_con)).copy_from(&h);
    hp.view_mut((dim_phi, 0), (dim_con, dim_con)).copy_from(&p);
    let s = symmetrize(&(&hp * &cov.sigma * hp.transpose()));
    assert_psd(&s, 1e-8, "joint covariance")?;

    let phi_cov = &h * &cov.sigma * h.transpose();
    let standard_errors = (0..dim_phi)
        .map(|i| (phi_cov[(i, i)].max(0.0) / n as f64).sqrt())
        .collect();

    Ok(AsymptoticReport {
        sigma: cov.sigma.clone(),
        j_phi_xi: j.clone(),
        j_xi_xi: blocks.j_xi_xi.clone(),
        sigma_tilde,
        h,
        p,
        s,
        standard_errors,
        n,
        cond_omega: omega_solver.condition(),
        cond_profile: info_solver.condition(),
        sigma_abs_error: cov.abs_error,
        quadrature_converged: cov.converged && blocks.quadrature_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ComponentDistribution::{self, *};
    use crate::dist::MixtureModel;
    use crate::dual::{dual_plan, moment_integrals};
    use crate::signed::TargetCdf;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ELL: usize = 4;

    fn fixture() -> (TargetCdf, ParametricModel, ConstraintModel) {
        let target = TargetCdf::Model(
            MixtureModel::new(
                0.3,
                Weibull { scale: 0.5, shape: 2.0 },
                Weibull { scale: 1.0, shape: 1.0 },
            )
            .unwrap(),
        );
        let parametric =
            ParametricModel::new(Weibull { scale: 0.5, shape: 2.0 }, &["shape"]).unwrap();
        let constraints =
            ConstraintModel::new(Weibull { scale: 1.0, shape: 1.0 }, &["shape"], ELL).unwrap();
        (target, parametric, constraints)
    }

    #[test]
    fn jacobian_has_block_shape_and_matches_gram_matrix() {
        let (target, parametric, constraints) = fixture();
        let basis = LMomentBasis::new(ELL).unwrap();
        let component = parametric.at(&[2.0]).unwrap();
        let plan = dual_plan(&target, &component).unwrap();
        let sub = SignedSubCdf::new(&target, 0.3, component).unwrap();
        let blocks =
            jacobian_blocks(&basis, &sub, &plan, &parametric, &[2.0], &constraints, &[1.0])
                .unwrap();
        assert_eq!(blocks.j_phi_xi.shape(), (3, 3));
        assert_eq!(blocks.j_xi_xi.shape(), (3, 3));
        let ints = moment_integrals(&basis, &sub, &plan).unwrap();
        assert_abs_diff_eq!(
            (&blocks.j_xi_xi - &ints.omega).amax(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn lambda_and_theta_columns_match_finite_differences() {
        // The first two columns are −∂/∂(λ, θ) of b(φ) = ∫K(F₀)dy; compare
        // against central differences of the moment integrals.
        let (target, parametric, constraints) = fixture();
        let basis = LMomentBasis::new(ELL).unwrap();
        let lambda = 0.3;
        let theta = 2.0;
        let component = parametric.at(&[theta]).unwrap();
        let plan = dual_plan(&target, &component).unwrap();
        let sub = SignedSubCdf::new(&target, lambda, component).unwrap();
        let blocks =
            jacobian_blocks(&basis, &sub, &plan, &parametric, &[theta], &constraints, &[1.0])
                .unwrap();

        let h = 1e-5;
        let b_at = |lam: f64, th: f64| {
            let comp = parametric.at(&[th]).unwrap();
            let sub = SignedSubCdf::new(&target, lam, comp).unwrap();
            moment_integrals(&basis, &sub, &plan).unwrap().b
        };
        let db_dlam = (b_at(lambda + h, theta) - b_at(lambda - h, theta)) / (2.0 * h);
        let db_dth = (b_at(lambda, theta + h) - b_at(lambda, theta - h)) / (2.0 * h);
        for r in 0..3 {
            assert_abs_diff_eq!(blocks.j_phi_xi[(r, 0)], -db_dlam[r], epsilon = 1e-4);
            assert_abs_diff_eq!(blocks.j_phi_xi[(r, 1)], -db_dth[r], epsilon = 1e-4);
        }
    }

    #[test]
    fn covariance_is_symmetric_and_psd() {
        let (target, parametric, _) = fixture();
        let basis = LMomentBasis::new(ELL).unwrap();
        let component = parametric.at(&[2.0]).unwrap();
        let plan = dual_plan(&target, &component).unwrap();
        let sub = SignedSubCdf::new(&target, 0.3, component).unwrap();
        let cov = constraint_covariance(&basis, &sub, &plan, COVARIANCE_PANELS).unwrap();
        assert!(cov.converged);
        for r in 0..3 {
            for s in 0..3 {
                assert_eq!(cov.sigma[(r, s)].to_bits(), cov.sigma[(s, r)].to_bits());
            }
        }
        assert_psd(&cov.sigma, 1e-8, "sigma").unwrap();
        assert!(cov.tail_estimate < 1e-4, "tail {}", cov.tail_estimate);
    }

    #[test]
    fn degenerate_target_has_zero_covariance() {
        // A point mass makes F(x∧y) − F(x)F(y) vanish identically.
        let data = vec![1.0; 50];
        let target = TargetCdf::from_sample(&data).unwrap();
        let basis = LMomentBasis::new(ELL).unwrap();
        let component = Weibull { scale: 1.0, shape: 1.0 };
        let plan = dual_plan(&target, &component).unwrap();
        let sub = SignedSubCdf::new(&target, 0.0, component).unwrap();
        let (sigma, _) = covariance_pass(&basis, &sub, &plan, COVARIANCE_PANELS);
        assert!(sigma.amax() <= 1e-12, "max {}", sigma.amax());
    }

    #[test]
    fn exponential_covariance_matches_monte_carlo_oracle() {
        // λ = 0, F = Exponential(1): the r = 2 influence is
        // g(X) = ∫(1{X≤y} − F(y))(2F(y) − 1)dy = 2 − X − 2e^{−X},
        // with E g = 0 and Var g = 1/3 in closed form.
        let component = ComponentDistribution::Exponential { rate: 1.0 };
        let target = TargetCdf::Model(MixtureModel::new(0.0, component, component).unwrap());
        let basis = LMomentBasis::new(ELL).unwrap();
        let plan = dual_plan(&target, &component).unwrap();
        let sub = SignedSubCdf::new(&target, 0.0, component).unwrap();
        let cov = constraint_covariance(&basis, &sub, &plan, COVARIANCE_PANELS).unwrap();
        assert_abs_diff_eq!(cov.sigma[(0, 0)], 1.0 / 3.0, epsilon = 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(080);
        let draws = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut sum_quad = 0.0;
        for _ in 0..draws {
            let x = component.draw(&mut rng);
            let g = 2.0 - x - 2.0 * (-x).exp();
            sum += g;
            sum_sq += g * g;
            sum_quad += g * g * g * g;
        }
        let nf = draws as f64;
        let mean = sum / nf;
        let var = sum_sq / nf - mean * mean;
        // Standard error of a sample variance: sqrt((m₄ − m₂²)/n).
        let se = ((sum_quad / nf - var * var) / nf).sqrt();
        assert!(
            (cov.sigma[(0, 0)] - var).abs() <= 3.0 * se,
            "sigma22 {} vs MC {} (3se {})",
            cov.sigma[(0, 0)],
            var,
            3.0 * se
        );
    }

    #[test]
    fn assembly_satisfies_block_inverse_identities() {
        // Off-truth proposal keeps every block generic.
        let (target, parametric, constraints) = fixture();
        let basis = LMomentBasis::new(ELL).unwrap();
        let component = parametric.at(&[1.8]).unwrap();
        let plan = dual_plan(&target, &component).unwrap();
        let sub = SignedSubCdf::new(&target, 0.35, component).unwrap();
        let blocks =
            jacobian_blocks(&basis, &sub, &plan, &parametric, &[1.8], &constraints, &[1.1])
                .unwrap();
        let cov = constraint_covariance(&basis, &sub, &plan, COVARIANCE_PANELS).unwrap();
        let report = assemble_covariance(&blocks, &cov, 1000).unwrap();

        let pj = &report.p * &report.j_phi_xi;
        assert!(pj.amax() <= 1e-8, "P·J max {}", pj.amax());
        assert!((&report.s - report.s.transpose()).amax() <= 1e-10);
        // H = Σ̃JᵗΩ⁻¹ rearranged: ΩHᵗ = JΣ̃.
        let omega_h = &report.j_xi_xi * report.h.transpose();
        let j_st = &report.j_phi_xi * &report.sigma_tilde;
        assert_abs_diff_eq!((omega_h - j_st).amax(), 0.0, epsilon = 1e-9);
        assert_eq!(report.standard_errors.len(), 3);
        assert!(report.standard_errors.iter().all(|s| s.is_finite() && *s >= 0.0));
        assert!(report.cond_omega < 1e12 && report.cond_profile < 1e12);
    }

    #[test]
    fn variance_scales_inversely_with_n() {
        let (target, parametric, constraints) = fixture();
        let basis = LMomentBasis::new(ELL).unwrap();
        let component = parametric.at(&[2.0]).unwrap();
        let plan = dual_plan(&target, &component).unwrap();
        let sub = SignedSubCdf::new(&target, 0.3, component).unwrap();
        let blocks =
            jacobian_blocks(&basis, &sub, &plan, &parametric, &[2.0], &constraints, &[1.0])
                .unwrap();
        let cov = constraint_covariance(&basis, &sub, &plan, COVARIANCE_PANELS).unwrap();
        let small = assemble_covariance(&blocks, &cov, 500).unwrap();
        let big = assemble_covariance(&blocks, &cov, 1000).unwrap();
        for (a, b) in small.standard_errors.iter().zip(&big.standard_errors) {
            let ratio = (a / b).powi(2);
            assert_abs_diff_eq!(ratio, 2.0, epsilon = 1e-12);
        }
    }
}
