//! Exact conjugate Bayesian filtering for a scalar ARX likelihood.
//!
//! The likelihood N(y | theta' x, 1/tau) paired with a multivariate
//! Gaussian - univariate Gamma prior over (theta, tau) admits a closed-form
//! posterior after every observation:
//!
//!   Lambda_k = x x' + Lambda_{k-1}
//!   mu_k     = Lambda_k^{-1} (x y + Lambda_{k-1} mu_{k-1})
//!   alpha_k  = alpha_{k-1} + 1/2
//!   beta_k   = beta_{k-1} + (y^2 - mu_k' Lambda_k mu_k + mu_{k-1}' Lambda_{k-1} mu_{k-1}) / 2
//!
//! and a Student-t posterior predictive over the next output. Linear solves
//! go through a Cholesky factorization recomputed per solve; no inverse is
//! cached, so the stored precision matrix is always the single source of
//! truth.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Joint Normal-Gamma posterior over ARX coefficients and noise precision.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalGammaBelief {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    shape: f64,
    rate: f64,
}

/// Location-scale Student-t predictive; `scale` is the squared scale, so the
/// variance (when dof > 2) is `scale * dof / (dof - 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentTPredictive {
    pub location: f64,
    pub scale: f64,
    pub dof: f64,
}

/// Gamma marginal over the noise precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMarginal {
    pub shape: f64,
    pub rate: f64,
}

/// Multivariate location-scale T marginal over the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMarginal {
    pub location: DVector<f64>,
    pub scale: DMatrix<f64>,
    pub dof: f64,
}

impl NormalGammaBelief {
    /// Builds a belief, checking symmetry and positive definiteness of the
    /// precision matrix and positivity of the Gamma parameters.
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>, shape: f64, rate: f64) -> Result<Self> {
        let dim = mean.len();
        if precision.nrows() != dim || precision.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: precision.nrows().max(precision.ncols()),
            });
        }
        if !mean.iter().all(|v| v.is_finite()) || !precision.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "belief parameters".into(),
            });
        }
        check_positive("shape", shape)?;
        check_positive("rate", rate)?;

        let scale = precision.amax().max(1.0);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (precision[(i, j)] - precision[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        if Cholesky::new(precision.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }

        Ok(Self {
            mean,
            precision,
            shape,
            rate,
        })
    }

    /// Prior with constant mean entries and an isotropic precision
    /// `lambda0 * I`.
    pub fn isotropic_prior(
        dim: usize,
        mu0: f64,
        lambda0: f64,
        alpha0: f64,
        beta0: f64,
    ) -> Result<Self> {
        check_positive("lambda0", lambda0)?;
        Self::new(
            DVector::from_element(dim, mu0),
            DMatrix::identity(dim, dim) * lambda0,
            alpha0,
            beta0,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Conjugate update with a single regressor/output pair. Returns the new
    /// belief; the input is untouched.
    pub fn update(&self, x: &DVector<f64>, y: f64) -> Result<Self> {
        self.check_regressor(x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite {
                context: "observation y".into(),
            });
        }

        let mut precision = &self.precision + x * x.transpose();
        // x x' accumulation is symmetric in exact arithmetic; enforce it in
        // floating point.
        symmetrize(&mut precision);

        let rhs = x * y + &self.precision * &self.mean;
        let chol = Cholesky::new(precision.clone()).ok_or(Error::SingularPrecision)?;
        let mean = chol.solve(&rhs);

        let shape = self.shape + 0.5;
        let new_quad = mean.dot(&(&precision * &mean));
        let old_quad = self.mean.dot(&(&self.precision * &self.mean));
        let rate = self.rate + 0.5 * (y * y - new_quad + old_quad);
        if rate.is_nan() || rate <= 0.0 {
            return Err(Error::RateCollapse { rate });
        }

        Ok(Self {
            mean,
            precision,
            shape,
            rate,
        })
    }

    /// Closed-form Student-t predictive for the output generated by
    /// regressor `x`.
    pub fn posterior_predictive(&self, x: &DVector<f64>) -> Result<StudentTPredictive> {
        self.check_regressor(x)?;
        Ok(StudentTPredictive {
            location: self.mean.dot(x),
            scale: (self.rate / self.shape) * (self.quadratic_form(x)? + 1.0),
            dof: 2.0 * self.shape,
        })
    }

    /// x' Lambda^{-1} x via a Cholesky solve.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_regressor(x)?;
        let chol = Cholesky::new(self.precision.clone()).ok_or(Error::SingularPrecision)?;
        Ok(x.dot(&chol.solve(x)))
    }

    /// Gamma marginal over the noise precision tau.
    pub fn marginal_tau(&self) -> GammaMarginal {
        GammaMarginal {
            shape: self.shape,
            rate: self.rate,
        }
    }

    /// Multivariate T marginal over theta: location mu, scale matrix
    /// (beta/alpha) Lambda^{-1}, dof 2 alpha.
    pub fn marginal_theta(&self) -> Result<ThetaMarginal> {
        let chol = Cholesky::new(self.precision.clone()).ok_or(Error::SingularPrecision)?;
        let mut scale = chol.inverse() * (self.rate / self.shape);
        symmetrize(&mut scale);
        Ok(ThetaMarginal {
            location: self.mean.clone(),
            scale,
            dof: 2.0 * self.shape,
        })
    }

    fn check_regressor(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "regressor x".into(),
            });
        }
        Ok(())
    }
}

impl StudentTPredictive {
    pub fn new(location: f64, scale: f64, dof: f64) -> Result<Self> {
        check_positive("scale", scale)?;
        check_positive("dof", dof)?;
        if !location.is_finite() {
            return Err(Error::NonFinite {
                context: "predictive location".into(),
            });
        }
        Ok(Self {
            location,
            scale,
            dof,
        })
    }

    /// Variance of the predictive; defined only for dof > 2.
    pub fn variance(&self) -> Result<f64> {
        if self.dof <= 2.0 {
            return Err(Error::UndefinedVariance { dof: self.dof });
        }
        Ok(self.scale * self.dof / (self.dof - 2.0))
    }
}

/// Log-density of the location-scale Student-t with squared scale `p.scale`.
pub fn log_pdf_student_t(y: f64, p: &StudentTPredictive) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite {
            context: "evaluation point y".into(),
        });
    }
    let nu = p.dof;
    // r = (y - m) / sqrt(scale * nu); ln(1 + r^2) evaluated so that neither
    // tiny nor huge residuals lose the tail.
    let r = (y - p.location) / (p.scale * nu).sqrt();
    let tail = if r.abs() < 1e150 {
        (r * r).ln_1p()
    } else {
        2.0 * r.abs().ln()
    };
    Ok(ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * p.scale.ln()
        - 0.5 * (nu + 1.0) * tail)
}

/// Log-density of N(y | m, v) with variance v.
pub fn log_pdf_gaussian(y: f64, m: f64, v: f64) -> Result<f64> {
    check_positive("variance", v)?;
    Ok(-0.5 * (2.0 * std::f64::consts::PI * v).ln() - (y - m).powi(2) / (2.0 * v))
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value <= 0.0 || !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            reason: "must be positive and finite",
            value,
        });
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(dim: usize) -> NormalGammaBelief {
        NormalGammaBelief::isotropic_prior(dim, 0.0, 1.0, 2.0, 3.0).unwrap()
    }

    #[test]
    fn zero_regressor_update_keeps_location() {
        let b = fresh(4);
        let updated = b.update(&DVector::zeros(4), 0.0).unwrap();
        assert_eq!(updated.mean(), &DVector::zeros(4));
        assert_eq!(updated.precision(), &DMatrix::identity(4, 4));
        assert_eq!(updated.shape(), 2.5);
        assert_eq!(updated.rate(), 3.0);
    }

    #[test]
    fn scalar_update_hand_values() {
        // D=1, prior (0, 1, 2, 3), data (x=1, y=2):
        // Lambda' = 2, mu' = 1, alpha' = 2.5, beta' = 3 + (4 - 2 + 0)/2 = 4.
        let b = fresh(1);
        let updated = b.update(&DVector::from_element(1, 1.0), 2.0).unwrap();
        assert!((updated.mean()[0] - 1.0).abs() < 1e-15);
        assert!((updated.precision()[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(updated.shape(), 2.5);
        assert!((updated.rate() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn update_rejects_bad_inputs() {
        let b = fresh(3);
        assert!(matches!(
            b.update(&DVector::zeros(2), 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            b.update(&DVector::from_element(3, f64::NAN), 0.0),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            b.update(&DVector::zeros(3), f64::INFINITY),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn construction_rejects_invalid_parameters() {
        assert!(NormalGammaBelief::isotropic_prior(2, 0.0, 1.0, 0.0, 3.0).is_err());
        assert!(NormalGammaBelief::isotropic_prior(2, 0.0, 1.0, 2.0, -1.0).is_err());
        // Asymmetric precision.
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(NormalGammaBelief::new(DVector::zeros(2), m, 2.0, 3.0).is_err());
        // Indefinite precision.
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            NormalGammaBelief::new(DVector::zeros(2), m, 2.0, 3.0),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn predictive_zero_regressor() {
        let b = fresh(4);
        let p = b.posterior_predictive(&DVector::zeros(4)).unwrap();
        assert_eq!(p.location, 0.0);
        assert!((p.scale - 1.5).abs() < 1e-15);
        assert_eq!(p.dof, 4.0);
        assert!((p.variance().unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn predictive_hand_values_d1() {
        // Belief (mu=1, Lambda=2, alpha=2.5, beta=4), x=3:
        // location 3, scale (4/2.5)(9/2 + 1) = 8.8, dof 5.
        let b = NormalGammaBelief::new(
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
            2.5,
            4.0,
        )
        .unwrap();
        let p = b
            .posterior_predictive(&DVector::from_element(1, 3.0))
            .unwrap();
        assert!((p.location - 3.0).abs() < 1e-15);
        assert!((p.scale - 8.8).abs() < 1e-12);
        assert_eq!(p.dof, 5.0);
    }

    #[test]
    fn student_t_gaussian_limit() {
        let p = StudentTPredictive::new(0.0, 1.0, 1e8).unwrap();
        let lp = log_pdf_student_t(0.0, &p).unwrap();
        assert!((lp - (-0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-4);
    }

    #[test]
    fn student_t_cauchy_at_zero() {
        let p = StudentTPredictive::new(0.0, 1.0, 1.0).unwrap();
        let lp = log_pdf_student_t(0.0, &p).unwrap();
        assert!((lp - (1.0 / std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn student_t_rejects_non_finite_point() {
        let p = StudentTPredictive::new(0.0, 1.5, 4.0).unwrap();
        assert!(log_pdf_student_t(f64::NAN, &p).is_err());
        assert!(log_pdf_student_t(1e300, &p).unwrap().is_finite());
    }

    #[test]
    fn gaussian_log_density_values() {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((log_pdf_gaussian(1.0, 1.0, 1.0).unwrap() + half_ln_2pi).abs() < 1e-12);
        assert!((log_pdf_gaussian(2.0, 1.0, 1.0).unwrap() + half_ln_2pi + 0.5).abs() < 1e-12);
        let expected = -0.5 * (8.0 * std::f64::consts::PI).ln() - 0.5;
        assert!((log_pdf_gaussian(0.0, 2.0, 4.0).unwrap() - expected).abs() < 1e-12);
        assert!(log_pdf_gaussian(0.0, 0.0, 0.0).is_err());
        assert!(log_pdf_gaussian(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn marginals_copy_parameters() {
        let b = fresh(4);
        let tau = b.marginal_tau();
        assert_eq!(tau.shape, 2.0);
        assert_eq!(tau.rate, 3.0);

        let theta = b.marginal_theta().unwrap();
        assert_eq!(theta.location, DVector::zeros(4));
        assert_eq!(theta.dof, 4.0);
        let expected = DMatrix::identity(4, 4) * 1.5;
        assert!((&theta.scale - expected).amax() < 1e-12);
    }

    #[test]
    fn theta_marginal_scale_is_spd() {
        use rand::prelude::*;
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let mut b = fresh(3);
            for _ in 0..10 {
                let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
                let y = rng.gen_range(-2.0..2.0);
                b = b.update(&x, y).unwrap();
            }
            let theta = b.marginal_theta().unwrap();
            assert!(Cholesky::new(theta.scale.clone()).is_some());
        }
    }

    #[test]
    fn alpha_grows_half_per_update_and_precision_monotone() {
        use rand::prelude::*;
        let mut rng = StdRng::seed_from_u64(3);
        let mut b = fresh(4);
        let mut prev = b.clone();
        let mut prev_det = b.precision().determinant();
        for k in 1..=40 {
            let x = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            b = b.update(&x, rng.gen_range(-1.0..1.0)).unwrap();
            assert_eq!(b.shape(), 2.0 + 0.5 * k as f64);
            let det = b.precision().determinant();
            assert!(det >= prev_det * (1.0 - 1e-12));
            // The precision increment x x' is positive semidefinite.
            let increment = b.precision() - prev.precision();
            let min_eig = increment
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-12 * increment.amax().max(1.0));
            prev_det = det;
            prev = b.clone();
        }
    }
}
