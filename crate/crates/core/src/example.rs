//! Built-in planar example family with closed-form solutions, used as
//! ground truth by tests and the `verify-example` command.
//!
//! The family is `ẋ₁ = −sgn(t)·x₁`, `ẋ₂ = γ(λ)·x₁ + sgn(t)·x₂ + β·x₁ⁿ`
//! with a single switching time at `t = 0` and the zero function as the
//! prescribed branch. All of its bifurcation behavior reduces to the real
//! root structure of `ξ₁·(γ + 2β/(n+1)·ξ₁ⁿ⁻¹) = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::system::SystemSpec;
use crate::Result;

/// Coefficient function γ(λ) selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaKind {
    Linear,
    Abs,
    Sin,
    Tan,
}

/// Margin kept from the poles of the tangent.
const TAN_CLAMP: f64 = 1e-6;

impl GammaKind {
    /// Natural parameter interval of the kind.
    pub fn lambda_interval(self) -> (f64, f64) {
        match self {
            GammaKind::Tan => (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn gamma(self, lambda: f64) -> f64 {
        match self {
            GammaKind::Linear => lambda,
            GammaKind::Abs => lambda.abs(),
            GammaKind::Sin => lambda.sin(),
            GammaKind::Tan => {
                let half = std::f64::consts::FRAC_PI_2;
                lambda.clamp(-half + TAN_CLAMP, half - TAN_CLAMP).tan()
            }
        }
    }
}

/// Configuration of the example family: `β ≠ 0`, `n ≥ 2`, γ kind.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExampleConfig {
    pub beta: f64,
    pub n: u32,
    pub gamma_kind: GammaKind,
}

impl ExampleConfig {
    pub fn new(beta: f64, n: u32, gamma_kind: GammaKind) -> Result<Self> {
        if beta == 0.0 {
            return Err(Error::invalid("beta must be nonzero"));
        }
        if n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        Ok(ExampleConfig {
            beta,
            n,
            gamma_kind,
        })
    }

    pub fn gamma(&self, lambda: f64) -> f64 {
        self.gamma_kind.gamma(lambda)
    }
}

fn sgn(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Builds the [`SystemSpec`] of the family.
pub fn example_system(cfg: &ExampleConfig) -> SystemSpec {
    let beta = cfg.beta;
    let n = cfg.n as i32;
    let kind = cfg.gamma_kind;
    let (lo, hi) = kind.lambda_interval();
    SystemSpec::builder(
        2,
        move |t, x, lambda| {
            let g = kind.gamma(lambda);
            let s = sgn(t);
            DVector::from_vec(vec![
                -s * x[0],
                g * x[0] + s * x[1] + beta * x[0].powi(n),
            ])
        },
        move |t, x, lambda| {
            let g = kind.gamma(lambda);
            let s = sgn(t);
            DMatrix::from_row_slice(
                2,
                2,
                &[-s, 0.0, g + n as f64 * beta * x[0].powi(n - 1), s],
            )
        },
    )
    .switching_times(vec![0.0])
    .param_interval(lo, hi)
    .admissible(true)
    .build()
    .expect("example system is well-formed")
}

/// Closed-form solution `φ(t; ξ)` of the family.
///
/// The first component is `e^{−|t|}·ξ₁`; the second follows from variation
/// of constants on each half-line:
///
/// `φ₂ = [ξ₂ + sgn(t)(γ/2·ξ₁ + β/(n+1)·ξ₁ⁿ)]·e^{|t|}
///        − sgn(t)(γ/2·ξ₁·e^{−|t|} + β/(n+1)·ξ₁ⁿ·e^{−n|t|})`.
pub fn closed_form_solution(
    cfg: &ExampleConfig,
    lambda: f64,
    xi: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let g = cfg.gamma(lambda);
    let beta = cfg.beta;
    let n = cfg.n;
    let s = sgn(t);
    let at = t.abs();
    let xi1 = xi[0];
    let xi2 = xi[1];
    let half_g = 0.5 * g * xi1;
    let poly = beta / (n as f64 + 1.0) * xi1.powi(n as i32);
    // Coefficient of the growing mode. For bounded initial values it cancels
    // exactly; suppress its rounding residue so the oracle returns the
    // bounded solution instead of amplifying eps by e^{|t|}.
    let mut c = xi2 + s * (half_g + poly);
    let scale = xi2.abs() + half_g.abs() + poly.abs();
    if c.abs() <= 1e-13 * scale {
        c = 0.0;
    }
    let grow = c * at.exp();
    let decay = s * (half_g * (-at).exp() + poly * (-(n as f64) * at).exp());
    DVector::from_vec(vec![(-at).exp() * xi1, grow - decay])
}

/// All real initial values `ξ₁` (with `ξ₂ = 0`) of solutions bounded on the
/// whole line: always `0`, plus the real roots of
/// `ξ₁ⁿ⁻¹ = −(n+1)·γ(λ)/(2β)`.
pub fn homoclinic_initial_conditions(cfg: &ExampleConfig, lambda: f64) -> Vec<f64> {
    let s = -(cfg.n as f64 + 1.0) * cfg.gamma(lambda) / (2.0 * cfg.beta);
    let m = cfg.n - 1; // root exponent
    let mut roots = vec![0.0];
    if s != 0.0 {
        let mag = s.abs().powf(1.0 / m as f64);
        if m % 2 == 1 {
            roots.push(s.signum() * mag);
        } else if s > 0.0 {
            roots.push(mag);
            roots.push(-mag);
        }
    }
    roots
}

/// The reference Evans function of the family, `E(λ) = −4·γ(λ)`.
pub fn oracle_evans(cfg: &ExampleConfig, lambda: f64) -> f64 {
    -4.0 * cfg.gamma(lambda)
}

/// Reference dichotomy subspaces: `R(P⁺(0)) = span{(−2, γ)}` and
/// `N(P⁻(0)) = span{(2, γ)}`.
pub fn oracle_subspaces(cfg: &ExampleConfig, lambda: f64) -> (DVector<f64>, DVector<f64>) {
    let g = cfg.gamma(lambda);
    (
        DVector::from_vec(vec![-2.0, g]).normalize(),
        DVector::from_vec(vec![2.0, g]).normalize(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rhs_and_jacobian_match_displayed_system() {
        let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        let sys = example_system(&cfg);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        // gamma = lambda = 2
        let f = sys.rhs(1.0, &x, 2.0);
        assert_relative_eq!(f[0], -1.0);
        assert_relative_eq!(f[1], 3.0);
        let j = sys.jacobian(1.0, &x, 2.0);
        assert_relative_eq!(j[(0, 0)], -1.0);
        assert_relative_eq!(j[(0, 1)], 0.0);
        assert_relative_eq!(j[(1, 0)], 4.0);
        assert_relative_eq!(j[(1, 1)], 1.0);
        // trivial branch
        let zero = DVector::zeros(2);
        assert_eq!(sys.rhs(0.7, &zero, 2.0).norm(), 0.0);
    }

    #[test]
    fn closed_form_satisfies_initial_condition() {
        let cfg = ExampleConfig::new(1.0, 3, GammaKind::Sin).unwrap();
        let xi = DVector::from_vec(vec![0.4, -0.7]);
        let phi = closed_form_solution(&cfg, 1.2, &xi, 0.0);
        assert_relative_eq!(phi[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(phi[1], -0.7, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_first_component_is_decaying_exponential() {
        let cfg = ExampleConfig::new(-2.0, 4, GammaKind::Abs).unwrap();
        let xi = DVector::from_vec(vec![1.3, 0.2]);
        for &t in &[-3.0, -0.5, 0.25, 2.0] {
            let phi = closed_form_solution(&cfg, 0.8, &xi, t);
            assert_relative_eq!(phi[0], (-t.abs()).exp() * 1.3, epsilon = 1e-14);
        }
    }

    /// Differentiation gate for the closed form: an independent
    /// high-order finite-difference derivative must match the vector field
    /// along the formula to 1e-10.
    #[test]
    fn closed_form_differentiation_residual_below_gate() {
        let configs = [
            ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap(),
            ExampleConfig::new(1.0, 3, GammaKind::Sin).unwrap(),
            ExampleConfig::new(-1.5, 4, GammaKind::Abs).unwrap(),
            ExampleConfig::new(0.5, 5, GammaKind::Tan).unwrap(),
        ];
        let h = 1e-3;
        let mut worst = 0.0f64;
        for cfg in &configs {
            let sys = example_system(cfg);
            let lambda = match cfg.gamma_kind {
                GammaKind::Tan => 0.7,
                _ => 1.1,
            };
            let xi = DVector::from_vec(vec![0.9, -0.3]);
            for &t in &[-2.0, -0.5, 0.5, 1.0, 2.5] {
                // five-point stencil, O(h^4)
                let p = |tt: f64| closed_form_solution(cfg, lambda, &xi, tt);
                let dphi = (p(t - 2.0 * h) - p(t - h) * 8.0 + p(t + h) * 8.0 - p(t + 2.0 * h))
                    / (12.0 * h);
                let f = sys.rhs(t, &p(t), lambda);
                worst = worst.max((dphi - f).norm());
            }
        }
        assert!(worst <= 1e-10, "differentiation residual {worst:e}");
    }

    #[test]
    fn closed_form_fd_derivative_matches_rhs_at_half() {
        let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        let sys = example_system(&cfg);
        let xi = DVector::from_vec(vec![0.75, 0.0]);
        let h = 1e-6;
        for &t in &[0.5, -0.5] {
            let p = |tt: f64| closed_form_solution(&cfg, -0.5, &xi, tt);
            let dphi = (p(t + h) - p(t - h)) / (2.0 * h);
            let f = sys.rhs(t, &p(t), -0.5);
            assert!((dphi - f).norm() < 1e-6);
        }
    }

    #[test]
    fn homoclinic_roots_match_hand_computation() {
        let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        let roots = homoclinic_initial_conditions(&cfg, -1.0);
        assert_eq!(roots.len(), 2);
        assert!(roots.contains(&0.0));
        assert_relative_eq!(roots[1], 1.5, epsilon = 1e-14);

        let cfg = ExampleConfig::new(-1.0, 3, GammaKind::Linear).unwrap();
        let mut roots = homoclinic_initial_conditions(&cfg, 1.0);
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(roots.len(), 3);
        assert_relative_eq!(roots[0], -(2.0f64).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(roots[1], 0.0);
        assert_relative_eq!(roots[2], (2.0f64).sqrt(), epsilon = 1e-14);

        // odd n, wrong sign: only the trivial root
        let cfg = ExampleConfig::new(1.0, 3, GammaKind::Linear).unwrap();
        assert_eq!(homoclinic_initial_conditions(&cfg, 1.0), vec![0.0]);
    }

    #[test]
    fn oracle_evans_values() {
        let lin = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        assert_relative_eq!(oracle_evans(&lin, 1.0), -4.0);
        let sin = ExampleConfig::new(1.0, 3, GammaKind::Sin).unwrap();
        assert_relative_eq!(oracle_evans(&sin, std::f64::consts::PI), 0.0, epsilon = 1e-12);
        let abs = ExampleConfig::new(1.0, 2, GammaKind::Abs).unwrap();
        assert_relative_eq!(oracle_evans(&abs, -2.0), -8.0);
    }

    #[test]
    fn bounded_roots_decay_and_non_roots_blow_up() {
        let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        for &lambda in &[-1.0, -0.3, 0.7] {
            for &xi1 in &homoclinic_initial_conditions(&cfg, lambda) {
                if xi1.abs() > 2.0 {
                    continue;
                }
                let xi = DVector::from_vec(vec![xi1, 0.0]);
                for &t in &[30.0, -30.0] {
                    let phi = closed_form_solution(&cfg, lambda, &xi, t);
                    assert!(phi.norm() <= 1e-8, "root {xi1} at t={t}: |phi|={}", phi.norm());
                }
            }
            // non-root initial value grows beyond 1e6 by |t| = 30
            let xi = DVector::from_vec(vec![0.4, 0.0]);
            let grew = homoclinic_initial_conditions(&cfg, lambda)
                .iter()
                .all(|r| (r - 0.4f64).abs() > 1e-3);
            if grew {
                let phi = closed_form_solution(&cfg, lambda, &xi, 30.0);
                assert!(phi.norm() > 1e6);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExampleConfig::new(0.0, 2, GammaKind::Linear).is_err());
        assert!(ExampleConfig::new(1.0, 1, GammaKind::Linear).is_err());
    }

    #[test]
    fn integration_reproduces_closed_form_across_the_switch() {
        let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        let sys = example_system(&cfg);
        let lambda = 1.0; // gamma = 1
        let xi = DVector::from_vec(vec![0.8, -0.2]);
        let tol = 1e-10;
        for &t1 in &[2.0, -2.0] {
            let traj = crate::system::integrate_ivp(&sys, lambda, 0.0, &xi, t1, tol).unwrap();
            let oracle = closed_form_solution(&cfg, lambda, &xi, t1);
            let err = (traj.end_state() - &oracle).norm();
            let scale = 1.0 + oracle.norm();
            assert!(
                err <= 10.0 * tol * scale,
                "integration vs closed form at t = {t1}: {err:e}"
            );
        }
    }

    #[test]
    fn transition_matrix_matches_triangular_solution() {
        // at gamma = 1 the variational flow from 0 to 1 is
        // [[e^{-1}, 0], [(e - e^{-1})/2, e]]
        let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        let sys = example_system(&cfg);
        let phi = crate::system::transition_matrix(&sys, 1.0, 0.0, 1.0, 1e-12).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(phi[(0, 0)], 1.0 / e, epsilon = 1e-10);
        assert_relative_eq!(phi[(0, 1)], 0.0, epsilon = 1e-10);
        assert_relative_eq!(phi[(1, 0)], (e - 1.0 / e) / 2.0, epsilon = 1e-10);
        assert_relative_eq!(phi[(1, 1)], e, epsilon = 1e-10);
    }

    #[test]
    fn system_spec_is_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>(_t: &T) {}
        let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
        let sys = example_system(&cfg);
        assert_send_sync(&sys);
        // subspace extraction from several threads sharing one spec
        let sys = std::sync::Arc::new(sys);
        let handles: Vec<_> = [0.5, 1.0, 1.5]
            .into_iter()
            .map(|lambda| {
                let sys = sys.clone();
                std::thread::spawn(move || {
                    crate::dichotomy::subspace_pair(
                        &sys,
                        lambda,
                        &crate::dichotomy::SubspaceOptions::default(),
                    )
                    .map(|(p, m)| (p.rank, m.rank))
                })
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap().unwrap(), (1, 1));
        }
    }

    #[test]
    fn tan_kind_clamps_near_poles() {
        let k = GammaKind::Tan;
        let g = k.gamma(std::f64::consts::FRAC_PI_2);
        assert!(g.is_finite() && g > 1e5);
    }
}
