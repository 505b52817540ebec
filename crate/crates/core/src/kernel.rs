//! Evaluators for <q, chi(x,r)> and <q, alpha>: the scalar Olsen kernel, the
//! two-parameter product kernel on E = {q1 + q2 >= 0}, and a perturbed
//! product kernel for robustness tests.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeMeasure;
use crate::error::{Error, Result};
use crate::space::{ball_of, Cylinder, DyadicRadius, Point};

/// A parameter vector q; dimension 1 for the Olsen kernel, 2 for the product
/// kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn scalar(q: f64) -> Self {
        ParamVector(vec![q])
    }

    pub fn pair(q1: f64, q2: f64) -> Self {
        ParamVector(vec![q1, q2])
    }

    /// q1 + q2 (or q itself in the scalar case) — the only combination the
    /// product kernels see.
    pub fn theta(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Admissibility for the two-parameter example: q1 + q2 >= 0.
    pub fn in_region_e(&self) -> bool {
        self.theta() >= 0.0
    }

    /// Membership in the slice F = { q : q1 + q2 = 1 }.
    pub fn in_slice_f(&self) -> bool {
        (self.theta() - 1.0).abs() < 1e-12
    }
}

/// The linear form alpha with <q, alpha> = a * (q1 + q2) (product setting)
/// or a * q (scalar setting).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaForm {
    pub a: f64,
}

impl AlphaForm {
    pub fn new(a: f64) -> Self {
        AlphaForm { a }
    }

    pub fn pair(&self, q: &ParamVector) -> f64 {
        self.a * q.theta()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelVariant {
    /// <q, chi(x,r)> = q log mu(B(x,r)).
    Olsen,
    /// <q, chi(x,r)> = (q1 + q2) log mu(B(x,r)), the lambda = 0 member of
    /// the example's sandwich.
    Product,
    /// A sandwich member with profile lambda(r) = c / log(1/r):
    /// r^lambda mu^(q1+q2) <= e^<q,chi> <= r^-lambda mu^(q1+q2), realized by
    /// a deterministic +-c perturbation of the log-mass.
    PerturbedProduct { lambda_c: f64 },
}

/// Kernel over a fixed cascade measure. Immutable and pure; cheap to clone.
#[derive(Clone)]
pub struct Kernel {
    pub variant: KernelVariant,
    pub measure: Arc<CascadeMeasure>,
}

impl Kernel {
    pub fn new(variant: KernelVariant, measure: Arc<CascadeMeasure>) -> Self {
        Kernel { variant, measure }
    }

    pub fn olsen(measure: Arc<CascadeMeasure>) -> Self {
        Kernel::new(KernelVariant::Olsen, measure)
    }

    pub fn product(measure: Arc<CascadeMeasure>) -> Self {
        Kernel::new(KernelVariant::Product, measure)
    }

    fn check_dim(&self, q: &ParamVector) -> Result<()> {
        let want = match self.variant {
            KernelVariant::Olsen => 1,
            _ => 2,
        };
        if q.0.len() != want {
            return Err(Error::InvalidConfig(format!(
                "kernel {:?} expects a {want}-dimensional q, got {}",
                self.variant,
                q.0.len()
            )));
        }
        Ok(())
    }

    /// Deterministic sign in {-1, +1} for the perturbed kernel, a function
    /// of the ball only.
    fn perturb_sign(ball: &Cylinder) -> f64 {
        let w = ball.word();
        let parity = (w.zero_count() + w.len()) % 2;
        if parity == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// <q, chi> evaluated on a ball given as a cylinder at its canonical
    /// dyadic radius 2^-depth. Natural-log based.
    pub fn chi_cylinder(&self, q: &ParamVector, ball: &Cylinder) -> Result<f64> {
        self.check_dim(q)?;
        let ln_mu = self.measure.log2_mass(ball) * LN_2;
        Ok(match &self.variant {
            KernelVariant::Olsen => q.0[0] * ln_mu,
            KernelVariant::Product => q.theta() * ln_mu,
            KernelVariant::PerturbedProduct { lambda_c } => {
                q.theta() * ln_mu + lambda_c * Self::perturb_sign(ball)
            }
        })
    }

    /// <q, chi(x, r)> for a dyadic radius r.
    pub fn chi_pair(&self, q: &ParamVector, x: &Point, r: DyadicRadius) -> Result<f64> {
        let ball = ball_of(x, r)?;
        self.chi_cylinder(q, &ball)
    }

    /// The normalized quantity <q, chi(center, 2^-ball_depth)> / log(2^-denom_depth).
    /// Replacement families divide by the log of the *original* radius, so
    /// the two depths may differ.
    pub fn ratio(&self, q: &ParamVector, ball: &Cylinder, denom_depth: usize) -> Result<f64> {
        debug_assert!(denom_depth >= 1);
        let chi = self.chi_cylinder(q, ball)?;
        Ok(chi / (-(denom_depth as f64) * LN_2))
    }

    /// e^<q,chi> for the ball, as log2 — the summand of packing sums.
    pub fn weight_log2(&self, q: &ParamVector, ball: &Cylinder) -> Result<f64> {
        Ok(self.chi_cylinder(q, ball)? / LN_2)
    }

    /// The effective exponent theta when the kernel reduces to a power of
    /// the mass (always the case in this crate).
    pub fn effective_theta(&self, q: &ParamVector) -> f64 {
        match self.variant {
            KernelVariant::Olsen => q.0[0],
            _ => q.theta(),
        }
    }
}
