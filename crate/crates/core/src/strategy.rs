//! Dual value, primal value and feedback controls recovered from `Λ̂`.
//!
//! With CRRA utility `c^κ/κ` and `β = −κ/(1−κ)`:
//!
//! * dual value `L̂(t, x, y) = −(y^β/β)·Λ̂(t, x)`,
//! * multiplier `y* = (v/Λ̂)^{1/(β−1)}`,
//! * primal value `J = (1/κ)·v^κ·Λ̂^{1−κ} = L̂(y*) + v·y*`,
//! * investment `ϖ = (v/σ)[(1−β)θ̂(x) + ∂ₓΛ̂/Λ̂]` and consumption `c = v/Λ̂`.

use crate::error::{invalid, Result};
use crate::market::UtilityParams;
use crate::pide::{locate, ValueSurface};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// `−(y^β/β)·Λ` for a given surface value.
pub fn dual_value_of(lambda: f64, y: f64, utility: &UtilityParams) -> Result<f64> {
    positive("y", y)?;
    let beta = utility.beta();
    Ok(-(y.powf(beta) / beta) * lambda)
}

pub fn dual_value(surface: &ValueSurface, t: f64, x: f64, y: f64, utility: &UtilityParams) -> Result<f64> {
    dual_value_of(surface.value(t, x), y, utility)
}

pub fn y_star_of(v: f64, lambda: f64, utility: &UtilityParams) -> Result<f64> {
    positive("v", v)?;
    Ok((v / lambda).powf(1.0 / (utility.beta() - 1.0)))
}

/// Multiplier solving `y^{β−1}·Λ̂ = v`.
pub fn y_star(v: f64, surface: &ValueSurface, t: f64, x: f64, utility: &UtilityParams) -> Result<f64> {
    y_star_of(v, surface.value(t, x), utility)
}

pub fn primal_value_of(v: f64, lambda: f64, utility: &UtilityParams) -> Result<f64> {
    positive("v", v)?;
    let k = utility.kappa;
    Ok(v.powf(k) * lambda.powf(1.0 - k) / k)
}

pub fn primal_value(v: f64, surface: &ValueSurface, t: f64, x: f64, utility: &UtilityParams) -> Result<f64> {
    primal_value_of(v, surface.value(t, x), utility)
}

/// Wealth multiple `z^{β−1}·Λ̂(s, π_s)/Λ̂(t, x)` along the optimum, where
/// `z = e^{−r(s−t)}Z_s`.
pub fn optimal_wealth_factor(
    surface: &ValueSurface,
    t: f64,
    x: f64,
    s: f64,
    pi_s: f64,
    z_factor: f64,
) -> Result<f64> {
    positive("z_factor", z_factor)?;
    let beta = surface.model.beta();
    Ok(z_factor.powf(beta - 1.0) * surface.value(s, pi_s) / surface.value(t, x))
}

/// Feedback map built on a solved surface, with `∂ₓΛ̂/Λ̂` tabulated on the
/// grid.
#[derive(Debug, Clone)]
pub struct StrategyField<'a> {
    pub surface: &'a ValueSurface,
    log_dx: Vec<f64>,
}

impl<'a> StrategyField<'a> {
    pub fn new(surface: &'a ValueSurface) -> Self {
        let (nt, nx) = (surface.n_t(), surface.n_x());
        let mut log_dx = Vec::with_capacity((nt + 1) * (nx + 1));
        for i in 0..=nt {
            for j in 0..=nx {
                log_dx.push(surface.dx_at_node(i, j) / surface.at_node(i, j));
            }
        }
        Self { surface, log_dx }
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.surface.n_x() + 1;
        &self.log_dx[i * n..(i + 1) * n]
    }

    fn row_interp(&self, i: usize, x: f64) -> f64 {
        let (k, th) = locate(x, self.surface.n_x());
        let r = self.row(i);
        r[k] + th * (r[k + 1] - r[k])
    }

    /// `∂ₓΛ̂/Λ̂` at `(t, x)`, bilinear between grid nodes.
    pub fn log_derivative(&self, t: f64, x: f64) -> f64 {
        let (i, w) = self.surface.locate_t(t);
        let a = self.row_interp(i, x);
        if w == 0.0 {
            a
        } else {
            a + w * (self.row_interp(i + 1, x) - a)
        }
    }

    /// Investment fraction `ϖ/v` and consumption fraction `c/v`.
    pub fn fractions(&self, t: f64, x: f64) -> (f64, f64) {
        let model = &self.surface.model;
        let beta = model.beta();
        let invest = ((1.0 - beta) * model.market.theta_hat_at(x) + self.log_derivative(t, x)) / model.market.sigma;
        (invest, 1.0 / self.surface.value(t, x))
    }
}

/// `(ϖ, c)` for current wealth `v`; both are linear in `v`.
pub fn feedback_controls(field: &StrategyField<'_>, t: f64, x: f64, v: f64) -> (f64, f64) {
    let (a, b) = field.fractions(t, x);
    (a * v, b * v)
}
