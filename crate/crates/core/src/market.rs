//! Problem instance primitives and the full-information world simulator.
//!
//! The hidden chain `α ∈ {1, 2}` (1 = bull, 2 = bear) switches with rates
//! `a₁` (bull→bear) and `a₂` (bear→bull). The risky asset follows a GBM whose
//! drift is `μ(α_t)`. Expert signals arrive as a Poisson(λ) stream; a mark
//! arriving in regime `i` has density `fᵢ`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{InitialRegime, ModelConfig};
use crate::density::SignalDensityPair;
use crate::error::{invalid, Result};
use crate::rng::{PathStreams, Substream};

/// Generator rates of the two-state chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    /// bull → bear
    pub a1: f64,
    /// bear → bull
    pub a2: f64,
}

impl RegimeParams {
    pub fn new(a1: f64, a2: f64) -> Result<Self> {
        let p = Self { a1, a2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > 0.0 && self.a2 > 0.0 && self.a1.is_finite() && self.a2.is_finite()) {
            return Err(invalid(format!(
                "regime rates must be positive, got a1 = {}, a2 = {}",
                self.a1, self.a2
            )));
        }
        Ok(())
    }

    /// Long-run probability of the bull state.
    pub fn stationary_bull(&self) -> f64 {
        self.a2 / (self.a1 + self.a2)
    }

    fn rate_out(&self, regime: u8) -> f64 {
        if regime == 1 {
            self.a1
        } else {
            self.a2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub r: f64,
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.r > 0.0) {
            return Err(invalid(format!("r must be positive, got {}", self.r)));
        }
        // Equal drifts are the uninformative-price (Merton) limit and are allowed.
        if self.mu1 < self.mu2 {
            return Err(invalid(format!(
                "bull drift mu1 = {} must not be below bear drift mu2 = {}",
                self.mu1, self.mu2
            )));
        }
        Ok(())
    }

    pub fn mu(&self, regime: u8) -> f64 {
        if regime == 1 {
            self.mu1
        } else {
            self.mu2
        }
    }

    pub fn theta1(&self) -> f64 {
        (self.mu1 - self.r) / self.sigma
    }

    pub fn theta2(&self) -> f64 {
        (self.mu2 - self.r) / self.sigma
    }

    /// `x·θ₁ + (1−x)·θ₂` without range checks.
    #[inline]
    pub fn theta_hat_at(&self, x: f64) -> f64 {
        x * self.theta1() + (1.0 - x) * self.theta2()
    }

    pub fn theta_max_sq(&self) -> f64 {
        self.theta1().powi(2).max(self.theta2().powi(2))
    }
}

/// CRRA utility `c^κ/κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub kappa: f64,
}

impl UtilityParams {
    pub fn new(kappa: f64) -> Result<Self> {
        let u = Self { kappa };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa < 1.0 && self.kappa != 0.0 && self.kappa.is_finite()) {
            return Err(invalid(format!(
                "kappa must satisfy kappa < 1 and kappa != 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Conjugate exponent `β = −κ/(1−κ)`.
    pub fn beta(&self) -> f64 {
        -self.kappa / (1.0 - self.kappa)
    }

    pub fn utility(&self, c: f64) -> f64 {
        c.powf(self.kappa) / self.kappa
    }
}

/// Market price of risk seen through the filter: `x·θ₁ + (1−x)·θ₂`.
pub fn theta_hat(x: f64, market: &MarketParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("filter value {x} outside [0, 1]")));
    }
    Ok(market.theta_hat_at(x))
}

/// Mixture density `f₁(z)x + f₂(z)(1−x)`; zero for marks outside the support.
pub fn f_hat(x: f64, z: f64, densities: &SignalDensityPair) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("filter value {x} outside [0, 1]")));
    }
    if !densities.support.contains(z) {
        return Ok(0.0);
    }
    Ok(densities.f_hat(x, z))
}

/// Piecewise-constant regime trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    pub initial: u8,
    /// Strictly increasing switch times in `(0, horizon)`.
    pub switches: Vec<f64>,
    pub horizon: f64,
}

impl RegimePath {
    pub fn state_at(&self, t: f64) -> u8 {
        let n = self.switches.partition_point(|&s| s <= t);
        flip(self.initial, n)
    }

    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    /// Time spent in the bull state over `[0, horizon]`.
    pub fn time_in_bull(&self) -> f64 {
        let mut state = self.initial;
        let mut last = 0.0;
        let mut acc = 0.0;
        for &s in &self.switches {
            if state == 1 {
                acc += s - last;
            }
            last = s;
            state = flip(state, 1);
        }
        if state == 1 {
            acc += self.horizon - last;
        }
        acc
    }
}

#[inline]
fn flip(state: u8, n: usize) -> u8 {
    if n % 2 == 0 {
        state
    } else {
        3 - state
    }
}

/// Event-exact simulation of the chain: exponential holding times with rate
/// `a₁` in the bull state and `a₂` in the bear state.
pub fn simulate_regime<R: Rng + ?Sized>(
    regime: &RegimeParams,
    horizon: f64,
    initial: u8,
    rng: &mut R,
) -> Result<RegimePath> {
    regime.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    if initial != 1 && initial != 2 {
        return Err(invalid(format!("regime must be 1 or 2, got {initial}")));
    }
    let mut switches = Vec::new();
    let mut state = initial;
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / regime.rate_out(state);
        if t >= horizon {
            break;
        }
        switches.push(t);
        state = flip(state, 1);
    }
    Ok(RegimePath {
        initial,
        switches,
        horizon,
    })
}

/// One signal arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalEvent {
    pub time: f64,
    pub mark: f64,
}

/// A simulated trajectory bundle on a uniform grid `t_k = k·dt`.
#[derive(Debug, Clone)]
pub struct WorldPath {
    pub dt: f64,
    pub times: Vec<f64>,
    /// Regime at each grid time.
    pub alpha: Vec<u8>,
    pub asset: Vec<f64>,
    /// Brownian increment over `[t_k, t_{k+1}]`; one shorter than `times`.
    pub dw: Vec<f64>,
    /// Time average of `μ(α)` over each step; one shorter than `times`.
    pub step_drift: Vec<f64>,
    pub events: Vec<SignalEvent>,
    pub regime: RegimePath,
    /// Filled by [`crate::filter::run_filter`] via [`WorldPath::attach_filter`].
    pub innovations: Option<Vec<f64>>,
    pub filter: Option<Vec<f64>>,
}

impl WorldPath {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn attach_filter(&mut self, path: &crate::filter::FilterPath) {
        self.filter = Some(path.values.clone());
        self.innovations = Some(path.innovations.clone());
    }
}

/// Number of uniform steps of size `dt` covering `horizon`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(horizon > 0.0) || dt > horizon * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}"
        )));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(invalid(format!(
            "horizon {horizon} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// Draws the initial regime according to the model's initial-regime rule.
pub fn initial_regime(model: &ModelConfig, streams: &PathStreams) -> u8 {
    match model.initial_regime {
        InitialRegime::Bull => 1,
        InitialRegime::Bear => 2,
        InitialRegime::Prior => {
            let u: f64 = streams.rng(Substream::InitialRegime).gen();
            if u < model.x0 {
                1
            } else {
                2
            }
        }
    }
}

/// Simulates regime, asset and signal marks on `[0, horizon]`.
///
/// The asset is advanced with the exact log-step
/// `S_{k+1} = S_k·exp(∫μ(α_u)du − σ²dt/2 + σΔW)`, integrating the
/// piecewise-constant drift over the step exactly. Signal times are kept
/// at their continuous values.
pub fn simulate_world(
    model: &ModelConfig,
    horizon: f64,
    dt: f64,
    streams: &PathStreams,
) -> Result<WorldPath> {
    let n = step_count(horizon, dt)?;
    let init = initial_regime(model, streams);
    let regime = simulate_regime(
        &model.regime,
        horizon,
        init,
        &mut streams.rng(Substream::Regime),
    )?;
    let m = &model.market;

    let mut times = Vec::with_capacity(n + 1);
    let mut alpha = Vec::with_capacity(n + 1);
    let mut asset = Vec::with_capacity(n + 1);
    let mut dw = Vec::with_capacity(n);
    let mut step_drift = Vec::with_capacity(n);

    let mut brownian = streams.rng(Substream::Brownian);
    let sqrt_dt = dt.sqrt();
    let mut s = 1.0_f64;
    let mut state = regime.initial;
    let mut next_switch = 0usize;
    times.push(0.0);
    alpha.push(state);
    asset.push(s);
    for k in 0..n {
        let t0 = k as f64 * dt;
        let t1 = if k + 1 == n { horizon } else { (k + 1) as f64 * dt };
        // ∫ μ(α_u) du over [t0, t1] across any switches inside the step.
        let mut drift_int = 0.0;
        let mut a = t0;
        while next_switch < regime.switches.len() && regime.switches[next_switch] <= t1 {
            let sw = regime.switches[next_switch];
            drift_int += m.mu(state) * (sw - a);
            a = sw;
            state = flip(state, 1);
            next_switch += 1;
        }
        drift_int += m.mu(state) * (t1 - a);
        let z: f64 = StandardNormal.sample(&mut brownian);
        let inc = sqrt_dt * z;
        s *= (drift_int - 0.5 * m.sigma * m.sigma * dt + m.sigma * inc).exp();
        times.push(t1);
        alpha.push(state);
        asset.push(s);
        dw.push(inc);
        step_drift.push(drift_int / dt);
    }

    let events = simulate_signals(&model.signal, &regime, horizon, streams)?;
    Ok(WorldPath {
        dt,
        times,
        alpha,
        asset,
        dw,
        step_drift,
        events,
        regime,
        innovations: None,
        filter: None,
    })
}

fn simulate_signals(
    signal: &SignalDensityPair,
    regime: &RegimePath,
    horizon: f64,
    streams: &PathStreams,
) -> Result<Vec<SignalEvent>> {
    let mean = signal.lambda * horizon;
    if mean <= 0.0 {
        return Ok(Vec::new());
    }
    let mut arrivals = streams.rng(Substream::Arrivals);
    let count = Poisson::new(mean)
        .map_err(|e| invalid(format!("poisson mean {mean}: {e}")))?
        .sample(&mut arrivals) as usize;
    let mut times: Vec<f64> = (0..count)
        .map(|_| arrivals.gen::<f64>() * horizon)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut marks = streams.rng(Substream::Marks);
    Ok(times
        .into_iter()
        .map(|time| SignalEvent {
            time,
            mark: signal.sample_mark(regime.state_at(time) == 1, &mut marks),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests::{example_model, merton_model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rates_are_rejected() {
        assert!(RegimeParams::new(0.0, 0.0).is_err());
        assert!(RegimeParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn theta_hat_cases() {
        let m = MarketParams {
            mu1: 0.08,
            mu2: 0.02,
            sigma: 0.2,
            r: 0.02,
        };
        assert!((theta_hat(1.0, &m).unwrap() - m.theta1()).abs() < 1e-15);
        assert!((theta_hat(0.0, &m).unwrap() - m.theta2()).abs() < 1e-15);
        assert!((theta_hat(0.5, &m).unwrap() - 0.15).abs() < 1e-15);
        assert!(theta_hat(1.2, &m).is_err());
    }

    #[test]
    fn f_hat_cases() {
        let model = example_model();
        let p = &model.signal;
        for z in [-2.0, 0.0, 1.5] {
            assert_eq!(f_hat(0.0, z, p).unwrap(), p.f2.pdf(z));
        }
        let same = merton_model();
        let q = &same.signal;
        for x in [0.0, 0.3, 1.0] {
            assert!((f_hat(x, 0.7, q).unwrap() - q.f1.pdf(0.7)).abs() < 1e-16);
        }
        let rule = p.mark_rule(128);
        for x in [0.0, 0.25, 0.9] {
            let mass = rule.integrate_against_f_hat(x, |_, _| 1.0);
            assert!((mass - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn near_zero_rates_rarely_switch() {
        let r = RegimeParams::new(1e-9, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let no_switch = (0..1000)
            .filter(|_| simulate_regime(&r, 1.0, 1, &mut rng).unwrap().switch_count() == 0)
            .count();
        assert!(no_switch >= 999);
    }

    #[test]
    fn occupation_matches_stationary_law() {
        let r = RegimeParams::new(1.0, 0.5).unwrap();
        let target = r.stationary_bull();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let horizon = 50.0;
        let fr: Vec<f64> = (0..2000)
            .map(|_| {
                let init = if rng.gen::<f64>() < target { 1 } else { 2 };
                simulate_regime(&r, horizon, init, &mut rng).unwrap().time_in_bull() / horizon
            })
            .collect();
        let n = fr.len() as f64;
        let mean = fr.iter().sum::<f64>() / n;
        let var = fr.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - target).abs() < 3.0 * (var / n).sqrt(), "{mean} vs {target}");
    }

    #[test]
    fn holding_times_are_exponential() {
        // Mean holding time in state 1 is 1/a1.
        let r = RegimeParams::new(2.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let firsts: Vec<f64> = (0..5000)
            .map(|_| {
                let p = simulate_regime(&r, 100.0, 1, &mut rng).unwrap();
                p.switches[0]
            })
            .collect();
        let mean = firsts.iter().sum::<f64>() / firsts.len() as f64;
        let se = 0.5 / (firsts.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn world_is_bit_reproducible() {
        let model = example_model();
        let s = PathStreams::new(42, 7);
        let a = simulate_world(&model, 1.0, 0.01, &s).unwrap();
        let b = simulate_world(&model, 1.0, 0.01, &s).unwrap();
        assert_eq!(a.asset, b.asset);
        assert_eq!(a.events, b.events);
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn world_respects_invariants() {
        let model = example_model();
        for path in 0..20 {
            let w = simulate_world(&model, 2.0, 0.01, &PathStreams::new(3, path)).unwrap();
            assert!(w.asset.iter().all(|s| *s > 0.0));
            assert!(w.alpha.iter().all(|a| *a == 1 || *a == 2));
            assert!(w.events.windows(2).all(|e| e[0].time < e[1].time));
            assert!(w.events.iter().all(|e| e.time <= 2.0));
            assert_eq!(w.times.len(), 201);
        }
    }

    #[test]
    fn bad_step_sizes_are_rejected() {
        let model = example_model();
        let s = PathStreams::new(1, 0);
        assert!(simulate_world(&model, 1.0, 0.0, &s).is_err());
        assert!(simulate_world(&model, 1.0, 2.0, &s).is_err());
        assert!(simulate_world(&model, 1.0, 0.3, &s).is_err());
    }

    #[test]
    fn zero_intensity_has_no_events() {
        let mut model = example_model();
        model.signal = model.signal.with_lambda(0.0).unwrap();
        let w = simulate_world(&model, 1.0, 0.01, &PathStreams::new(2, 0)).unwrap();
        assert!(w.events.is_empty());
    }

    #[test]
    fn intensity_does_not_perturb_brownian_path() {
        let model = example_model();
        let mut quiet = example_model();
        quiet.signal = quiet.signal.with_lambda(0.0).unwrap();
        let s = PathStreams::new(8, 1);
        let a = simulate_world(&model, 1.0, 0.01, &s).unwrap();
        let b = simulate_world(&quiet, 1.0, 0.01, &s).unwrap();
        assert_eq!(a.dw, b.dw);
        assert_eq!(a.asset, b.asset);
    }
}
