//! Kushner–Stratonovich filter for `π_t = P[α_t = 1 | prices, signals]`.
//!
//! Between signals the filter diffuses with the innovation
//! `dW̃ = (dS/S − r dt)/σ − θ̂(π) dt`; at a signal with mark `z` it jumps to
//! the Bayes posterior `ξ(π₋, z)`.

use serde::Serialize;

use crate::config::ModelConfig;
use crate::density::SignalDensityPair;
use crate::error::{invalid, Error, Result};
use crate::market::{RegimeParams, WorldPath};

/// Distance kept from `{0, 1}` after each Euler step.
pub const EPS_CLAMP: f64 = 1e-9;

/// Bayes update from pre-evaluated densities `f₁(z)`, `f₂(z)`.
#[inline]
pub fn xi_from_values(x: f64, f1: f64, f2: f64) -> Option<f64> {
    if f1 == f2 && f1 > 0.0 {
        // Uninformative mark; avoid rounding in num/den.
        return Some(x);
    }
    let num = f1 * x;
    let den = num + f2 * (1.0 - x);
    if den > 0.0 {
        Some((num / den).clamp(0.0, 1.0))
    } else {
        None
    }
}

/// Posterior bull probability after observing mark `z`.
pub fn xi(x: f64, z: f64, densities: &SignalDensityPair) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("filter value {x} outside [0, 1]")));
    }
    xi_from_values(x, densities.f1.pdf(z), densities.f2.pdf(z)).ok_or(Error::DegenerateMark { z })
}

/// Unclamped Euler increment; exposed for callers that count clamps.
#[inline]
pub(crate) fn euler_raw(x: f64, dw: f64, dt: f64, a1: f64, a2: f64, dtheta: f64) -> f64 {
    x + (a2 - (a1 + a2) * x) * dt + x * (1.0 - x) * dtheta * dw
}

/// Returns the clamped value and whether the clamp was active.
#[inline]
pub(crate) fn clamp_filter(x: f64) -> (f64, bool) {
    if x < EPS_CLAMP {
        (EPS_CLAMP, true)
    } else if x > 1.0 - EPS_CLAMP {
        (1.0 - EPS_CLAMP, true)
    } else {
        (x, false)
    }
}

/// One Euler–Maruyama step of the diffusive part, clamped to
/// `[ε, 1−ε]`.
pub fn filter_step(x: f64, innovation: f64, dt: f64, model: &ModelConfig) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("filter value {x} must lie in (0, 1)")));
    }
    let dtheta = model.market.theta1() - model.market.theta2();
    let raw = euler_raw(x, innovation, dt, model.regime.a1, model.regime.a2, dtheta);
    Ok(clamp_filter(raw).0)
}

/// Expected filter value: the jump and innovation terms are martingales, so
/// `E[π_t]` solves `x' = a₂ − (a₁+a₂)x`.
pub fn mean_filter_ode(t: f64, x0: f64, regime: &RegimeParams) -> f64 {
    let s = regime.a1 + regime.a2;
    let e = (-s * t).exp();
    x0 * e + regime.stationary_bull() * (1.0 - e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterJump {
    pub time: f64,
    /// Grid node at which the jump was applied.
    pub node: usize,
    pub mark: f64,
    pub pre: f64,
    /// Exactly `ξ(pre, mark)`; the path value is this after clamping.
    pub post: f64,
}

#[derive(Debug, Clone)]
pub struct FilterPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `dW̃` over each step; one shorter than `values`.
    pub innovations: Vec<f64>,
    pub jumps: Vec<FilterJump>,
    pub clamp_count: usize,
}

/// Runs the filter over a simulated world starting from the guess `x0`.
pub fn run_filter(world: &WorldPath, model: &ModelConfig, x0: f64) -> Result<FilterPath> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(invalid(format!("initial filter value must lie in (0, 1), got {x0}")));
    }
    let m = &model.market;
    let (a1, a2) = (model.regime.a1, model.regime.a2);
    let dtheta = m.theta1() - m.theta2();
    let dt = world.dt;
    let n = world.steps();

    let mut values = Vec::with_capacity(n + 1);
    let mut innovations = Vec::with_capacity(n);
    let mut jumps = Vec::new();
    let mut clamp_count = 0usize;
    let mut next_event = 0usize;

    let mut apply_events = |x: &mut f64, node: usize, jumps: &mut Vec<FilterJump>, clamps: &mut usize| -> Result<()> {
        let t = world.times[node];
        while next_event < world.events.len() && world.events[next_event].time <= t {
            let ev = world.events[next_event];
            let post = xi(*x, ev.mark, &model.signal)?;
            jumps.push(FilterJump {
                time: ev.time,
                node,
                mark: ev.mark,
                pre: *x,
                post,
            });
            let (c, hit) = clamp_filter(post);
            *clamps += hit as usize;
            *x = c;
            next_event += 1;
        }
        Ok(())
    };

    let mut x = x0;
    apply_events(&mut x, 0, &mut jumps, &mut clamp_count)?;
    values.push(x);
    for k in 0..n {
        let ret = world.asset[k + 1] / world.asset[k] - 1.0;
        let dw = (ret - m.r * dt) / m.sigma - m.theta_hat_at(x) * dt;
        innovations.push(dw);
        let (c, hit) = clamp_filter(euler_raw(x, dw, dt, a1, a2, dtheta));
        clamp_count += hit as usize;
        x = c;
        apply_events(&mut x, k + 1, &mut jumps, &mut clamp_count)?;
        values.push(x);
    }
    Ok(FilterPath {
        times: world.times.clone(),
        values,
        innovations,
        jumps,
        clamp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::presets;
    use crate::density::SignalFamily;
    use crate::market::simulate_world;
    use crate::rng::PathStreams;

    fn flat_pair() -> SignalDensityPair {
        SignalDensityPair::new(1.0, SignalFamily::Gaussian { mean1: 0.0, var1: 1.0, mean2: 0.0, var2: 1.0 })
            .unwrap()
    }

    #[test]
    fn xi_identity_and_absorbing_cases() {
        let p = flat_pair();
        for x in [0.0, 0.2, 0.7, 1.0] {
            for z in [-3.0, 0.0, 2.5] {
                assert_eq!(xi(x, z, &p).unwrap(), x);
            }
        }
        let q = presets::gaussian_signals().signal;
        for z in [-2.0, 0.0, 4.0] {
            assert_eq!(xi(0.0, z, &q).unwrap(), 0.0);
            assert_eq!(xi(1.0, z, &q).unwrap(), 1.0);
        }
    }

    #[test]
    fn xi_bayes_arithmetic() {
        assert!((xi_from_values(0.5, 3.0, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(xi_from_values(0.5, 0.0, 0.0).is_none());
    }

    #[test]
    fn xi_rejects_vanishing_mixture() {
        let p = SignalDensityPair::new(
            1.0,
            SignalFamily::Tabulated { grid: vec![0.0, 1.0, 2.0], f1: vec![1.0, 1.0, 1.0], f2: vec![1.0, 1.0, 1.0] },
        )
        .unwrap();
        assert!(matches!(xi(0.5, 5.0, &p), Err(Error::DegenerateMark { .. })));
    }

    #[test]
    fn xi_is_monotone_in_likelihood_ratio() {
        let mut ratios: Vec<f64> = (0..50).map(|k| 0.01 * 1.2f64.powi(k)).collect();
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for x in [0.1, 0.5, 0.9] {
            let v: Vec<f64> = ratios.iter().map(|r| xi_from_values(x, *r, 1.0).unwrap()).collect();
            assert!(v.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn filter_step_cases() {
        let mut m = presets::merton();
        let x = m.regime.stationary_bull();
        assert_eq!(filter_step(x, 0.0, 0.01, &m).unwrap(), x);
        assert!(filter_step(1e-6, 0.0, 0.01, &m).unwrap() > 1e-6);
        // θ₁ − θ₂ = 1.5 with σ = 0.2 means μ₁ − μ₂ = 0.3.
        m.market.mu1 = 0.35;
        let got = filter_step(0.3, 0.1, 0.01, &m).unwrap();
        assert!((got - 0.3355).abs() < 1e-12, "{got}");
        assert!(filter_step(0.0, 0.0, 0.01, &m).is_err());
    }

    #[test]
    fn mean_ode_cases() {
        let r = RegimeParams::new(1.0, 1.0).unwrap();
        assert_eq!(mean_filter_ode(0.0, 0.3, &r), 0.3);
        assert!((mean_filter_ode(2f64.ln() / 2.0, 0.9, &r) - 0.7).abs() < 1e-14);
        assert!((mean_filter_ode(100.0, 0.9, &r) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn uninformative_filter_follows_ode() {
        let mut m = presets::merton();
        m.regime = RegimeParams::new(1.0, 0.5).unwrap();
        let w = simulate_world(&m, 1.0, 1e-3, &PathStreams::new(4, 0)).unwrap();
        let f = run_filter(&w, &m, 0.9).unwrap();
        for (t, v) in f.times.iter().zip(&f.values) {
            assert!((v - mean_filter_ode(*t, 0.9, &m.regime)).abs() < 1e-3);
        }
    }

    #[test]
    fn jumps_are_exact_bayes_updates() {
        let m = presets::gaussian_signals();
        for p in 0..20 {
            let w = simulate_world(&m, 1.0, 1e-2, &PathStreams::new(12, p)).unwrap();
            let f = run_filter(&w, &m, m.x0).unwrap();
            assert_eq!(f.jumps.len(), w.events.len());
            for j in &f.jumps {
                assert_eq!(j.post, xi(j.pre, j.mark, &m.signal).unwrap());
                assert!(w.times[j.node] >= j.time);
                assert!(j.node == 0 || w.times[j.node - 1] < j.time);
            }
            assert!(f.values.iter().all(|v| *v >= EPS_CLAMP && *v <= 1.0 - EPS_CLAMP));
        }
    }

    #[test]
    fn revealing_mark_pushes_filter_to_one() {
        let sig = SignalDensityPair::new(
            1.0,
            SignalFamily::Gaussian { mean1: 5.0, var1: 0.1, mean2: -5.0, var2: 0.1 },
        )
        .unwrap();
        assert!(xi(0.5, 5.0, &sig).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn rejects_boundary_start() {
        let m = presets::merton();
        let w = simulate_world(&m, 1.0, 0.1, &PathStreams::new(1, 0)).unwrap();
        assert!(run_filter(&w, &m, 0.0).is_err());
        assert!(run_filter(&w, &m, 1.0).is_err());
    }
}
