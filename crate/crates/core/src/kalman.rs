//! Scalar linear-Gaussian state space model with an exact Kalman likelihood.
//!
//! Used as a correctness oracle for the particle filters and the score
//! estimators:
//!
//! ```text
//! x_0 ~ N(0, p0)
//! x_t = phi x_{t-1} + sigma e_t
//! y_t = alpha + x_t + tau d_t
//! ```

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::smc::StateSpaceModel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarLgssm {
    pub alpha: f64,
    pub phi: f64,
    pub sigma: f64,
    pub tau: f64,
    /// Variance of `x_0`.
    pub p0: f64,
}

impl ScalarLgssm {
    pub fn new(alpha: f64, phi: f64, sigma: f64, tau: f64, p0: f64) -> Result<Self> {
        let all_finite = [alpha, phi, sigma, tau, p0].iter().all(|x| x.is_finite());
        if !all_finite || sigma < 0.0 || tau < 0.0 || p0 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "invalid linear-Gaussian model: alpha={alpha}, phi={phi}, sigma={sigma}, tau={tau}, p0={p0}"
            )));
        }
        Ok(Self {
            alpha,
            phi,
            sigma,
            tau,
            p0,
        })
    }

    /// Draws `y_1..y_T`.
    pub fn simulate<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let mut x = self.p0.sqrt() * rng.sample::<f64, _>(StandardNormal);
        (0..len)
            .map(|_| {
                x = self.phi * x + self.sigma * rng.sample::<f64, _>(StandardNormal);
                self.alpha + x + self.tau * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }
}

/// Exact `log p(y_1..y_T)` by the predict/update recursions.
pub fn kalman_log_likelihood(model: &ScalarLgssm, ys: &[f64]) -> Result<f64> {
    let (mut m, mut p) = (0.0, model.p0);
    let mut total = 0.0;
    for (t, &y) in ys.iter().enumerate() {
        m *= model.phi;
        p = model.phi * model.phi * p + model.sigma * model.sigma;
        let s = p + model.tau * model.tau;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Numerical(format!(
                "innovation variance {s} is not positive at t={}",
                t + 1
            )));
        }
        let innovation = y - model.alpha - m;
        total += -0.5 * ((2.0 * PI * s).ln() + innovation * innovation / s);
        let gain = p / s;
        m += gain * innovation;
        p *= 1.0 - gain;
    }
    Ok(total)
}

impl StateSpaceModel for ScalarLgssm {
    type State = f64;
    type Obs = f64;

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.p0.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn sample_transition(&self, prev: &f64, rng: &mut ChaCha8Rng) -> f64 {
        self.phi * prev + self.sigma * rng.sample::<f64, _>(StandardNormal)
    }

    fn log_observation(&self, state: &f64, obs: &f64) -> f64 {
        let r = obs - self.alpha - state;
        let var = self.tau * self.tau;
        -0.5 * ((2.0 * PI * var).ln() + r * r / var)
    }
}
