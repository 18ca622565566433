//! Dual HJB PIDE for the auxiliary value `Λ̂(t, x)`.
//!
//! ```text
//! ∂ₜΛ + μ̄(x)∂ₓΛ + ½σ̄(x)²∂ₓₓΛ − d₀(x)Λ + I_β[Λ] + 1 = 0,   Λ(T, ·) = 1
//! ```
//!
//! on `[0, T] × [0, 1]`. The local operator is stepped implicitly (upwind
//! drift, central diffusion, one tridiagonal solve per step); the nonlocal
//! signal term `I_β` and the source are explicit. No boundary condition is
//! imposed at `x ∈ {0, 1}`: the diffusion vanishes there and the drift
//! points inward, so one-sided upwind differences close the system.

use serde::Serialize;

use crate::config::{D0Form, ModelConfig};
use crate::density::MarkRule;
use crate::error::{invalid, Error, Result};
use crate::filter::xi_from_values;
use crate::tridiag;

/// Solver resolution and safeguards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PideConfig {
    /// Number of x-intervals; the grid has `n_x + 1` nodes on `[0, 1]`.
    pub n_x: usize,
    /// Number of time steps; the grid has `n_t + 1` nodes on `[0, T]`.
    pub n_t: usize,
    /// Target Gauss–Legendre nodes for the mark integral.
    pub n_q: usize,
    /// Optional bound `|ν| ≤ M` on the dual control.
    pub m_clamp: Option<f64>,
    /// Values below this before a fractional power abort the solve.
    pub eps_pos: f64,
    /// Slack allowed around the bound envelope.
    pub bound_tol: f64,
}

impl Default for PideConfig {
    fn default() -> Self {
        Self {
            n_x: 100,
            n_t: 1000,
            n_q: 128,
            m_clamp: None,
            eps_pos: 1e-12,
            bound_tol: 1e-6,
        }
    }
}

impl PideConfig {
    pub fn with_grid(n_x: usize, n_t: usize) -> Self {
        Self {
            n_x,
            n_t,
            ..Self::default()
        }
    }

    /// `dt·λ·(1−β)·max_gain`; must not exceed ½.
    pub fn stability_ratio(&self, model: &ModelConfig) -> f64 {
        let beta = model.beta();
        let bounds = LambdaBounds::new(model);
        let (lo, hi) = bounds.continuous(model.horizon);
        let rho = (hi / lo).powf(1.0 / (1.0 - beta));
        let max_gain = (beta.abs() + 1.0) / (1.0 - beta) * rho + 1.0;
        let dt = model.horizon / self.n_t as f64;
        dt * model.signal.lambda * (1.0 - beta) * max_gain
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.n_x < 50 {
            return Err(invalid(format!("n_x must be at least 50, got {}", self.n_x)));
        }
        if self.n_t == 0 {
            return Err(invalid("n_t must be positive"));
        }
        if self.n_q < 16 {
            return Err(invalid(format!("n_q must be at least 16, got {}", self.n_q)));
        }
        if let Some(m) = self.m_clamp {
            if !(m > 0.0) {
                return Err(invalid(format!("m_clamp must be positive, got {m}")));
            }
        }
        if !(self.eps_pos > 0.0) || !(self.bound_tol >= 0.0) {
            return Err(invalid("eps_pos must be positive and bound_tol non-negative"));
        }
        let ratio = self.stability_ratio(model);
        if ratio > 0.5 {
            return Err(Error::Stability(format!(
                "dt·λ·(1−β)·max_gain = {ratio:.4} > 0.5; increase n_t"
            )));
        }
        Ok(())
    }
}

/// Local PIDE coefficients at one filter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub mu_bar: f64,
    pub sigma_bar: f64,
    pub d0: f64,
}

pub fn coefficients(x: f64, model: &ModelConfig) -> Coefficients {
    let m = &model.market;
    let beta = model.beta();
    let th = m.theta_hat_at(x);
    let sigma_bar = x * (1.0 - x) * (m.theta1() - m.theta2());
    let mu_bar = model.regime.a2 - (model.regime.a1 + model.regime.a2) * x - beta * sigma_bar * th;
    let d0 = match model.d0_form {
        D0Form::Squared => beta * m.r + 0.5 * beta * (1.0 - beta) * th * th,
        D0Form::Literal => beta * m.r + 0.5 * beta * (1.0 - beta) * th,
    };
    Coefficients {
        mu_bar,
        sigma_bar,
        d0,
    }
}

/// `Λ` for the constant discount `d` after time-to-go `τ`:
/// `e^{−dτ} + (1 − e^{−dτ})/d`, or `1 + τ` when `d = 0`.
pub fn constant_discount_value(d: f64, tau: f64) -> f64 {
    if d.abs() * tau < 1e-12 {
        return 1.0 + tau - 0.5 * d * tau * tau;
    }
    let e = (-d * tau).exp();
    e + (1.0 - e) / d
}

/// Closed-form `Λ̂(t)` when prices and signals are both uninformative.
pub fn merton_oracle(t: f64, model: &ModelConfig) -> Result<f64> {
    if !model.is_degenerate() {
        return Err(invalid(
            "the closed form needs mu1 = mu2 and identical signal densities",
        ));
    }
    if !(0.0..=model.horizon).contains(&t) {
        return Err(invalid(format!("t = {t} outside [0, {}]", model.horizon)));
    }
    Ok(constant_discount_value(coefficients(0.5, model).d0, model.horizon - t))
}

/// A priori bounds on `Λ̂`.
///
/// The constant pair (`literal_lower`, `literal_upper`) is the classical
/// statement for the whole surface. The time-dependent envelope
/// `[g(τ; d_max), g(τ; d_min)]`, where `d_min`/`d_max` are the extremes of
/// `d₀` and `g` is [`constant_discount_value`], follows from comparison with
/// x-constant solutions and is what the solver enforces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaBounds {
    pub literal_lower: f64,
    pub literal_upper: f64,
    /// `β(r + ½(1−β)θ_max²)`
    pub c: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub horizon: f64,
    pub beta: f64,
}

impl LambdaBounds {
    pub fn new(model: &ModelConfig) -> Self {
        let beta = model.beta();
        let m = &model.market;
        let c = beta * (m.r + 0.5 * (1.0 - beta) * m.theta_max_sq());
        let horizon = model.horizon;
        let grow = (-c * horizon).exp() * (1.0 + horizon);
        let (literal_lower, literal_upper) = if model.utility.kappa < 0.0 {
            (grow, 1.0 + horizon)
        } else {
            (1.0, grow)
        };
        // d₀ is a quadratic (or linear) function of θ̂ ∈ [θ₂, θ₁].
        let (t2, t1) = (m.theta2(), m.theta1());
        let mut cands = vec![t1, t2];
        if t2 < 0.0 && t1 > 0.0 {
            cands.push(0.0);
        }
        let d = |th: f64| match model.d0_form {
            D0Form::Squared => beta * m.r + 0.5 * beta * (1.0 - beta) * th * th,
            D0Form::Literal => beta * m.r + 0.5 * beta * (1.0 - beta) * th,
        };
        let ds: Vec<f64> = cands.into_iter().map(d).collect();
        Self {
            literal_lower,
            literal_upper,
            c,
            d_min: ds.iter().copied().fold(f64::INFINITY, f64::min),
            d_max: ds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            horizon,
            beta,
        }
    }

    /// Envelope at time-to-go `τ`.
    pub fn continuous(&self, tau: f64) -> (f64, f64) {
        (
            constant_discount_value(self.d_max, tau),
            constant_discount_value(self.d_min, tau),
        )
    }

    /// The envelope as produced by the implicit scheme with step `dt`,
    /// indexed by time node (`n_t + 1` entries).
    pub fn discrete(&self, n_t: usize) -> Vec<(f64, f64)> {
        let dt = self.horizon / n_t as f64;
        let mut out = vec![(1.0, 1.0); n_t + 1];
        for i in (0..n_t).rev() {
            let (l, u) = out[i + 1];
            out[i] = ((l + dt) / (1.0 + dt * self.d_max), (u + dt) / (1.0 + dt * self.d_min));
        }
        out
    }

    /// `ln(C_u/C_ℓ)/(1−β)` with the constant bounds; any clamp strictly
    /// above this never binds.
    pub fn nu_threshold(&self) -> f64 {
        (self.literal_upper / self.literal_lower).ln().abs() / (1.0 - self.beta)
    }

    /// A clamp level safely above [`Self::nu_threshold`].
    pub fn suggested_m_clamp(&self) -> f64 {
        (self.nu_threshold() * 1.01).max(1e-8)
    }
}

/// Precomputed nonlocal stencil: for every x-node and mark node, where the
/// Bayes update lands on the grid and the quadrature weight `w_q f̂(x_j, z_q)`.
#[derive(Debug, Clone)]
pub struct NonlocalStencil {
    offsets: Vec<usize>,
    pub(crate) mark: Vec<u32>,
    pub(crate) cell: Vec<u32>,
    pub(crate) frac: Vec<f64>,
    pub(crate) weight: Vec<f64>,
    pub rule: MarkRule,
}

impl NonlocalStencil {
    pub fn new(model: &ModelConfig, n_x: usize, n_q: usize) -> Self {
        let rule = model.signal.mark_rule(n_q);
        let mut offsets = Vec::with_capacity(n_x + 2);
        let (mut mark, mut cell, mut frac, mut weight) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        offsets.push(0);
        for j in 0..=n_x {
            let x = j as f64 / n_x as f64;
            for q in 0..rule.len() {
                let fh = rule.f1[q] * x + rule.f2[q] * (1.0 - x);
                let w = rule.weights[q] * fh;
                if !(w > 0.0) {
                    continue;
                }
                let post = xi_from_values(x, rule.f1[q], rule.f2[q]).expect("f̂ > 0 checked");
                let (k, th) = locate(post, n_x);
                mark.push(q as u32);
                cell.push(k as u32);
                frac.push(th);
                weight.push(w);
            }
            offsets.push(mark.len());
        }
        Self {
            offsets,
            mark,
            cell,
            frac,
            weight,
            rule,
        }
    }

    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// Slice value at the post-signal point of entry `e`.
    #[inline]
    pub fn post_value(&self, slice: &[f64], e: usize) -> f64 {
        let k = self.cell[e] as usize;
        let (a, b) = (slice[k], slice[k + 1]);
        a + self.frac[e] * (b - a)
    }
}

/// Cell index and fraction of `x ∈ [0, 1]` on a grid of `n_x` intervals.
#[inline]
pub(crate) fn locate(x: f64, n_x: usize) -> (usize, f64) {
    let s = (x * n_x as f64).clamp(0.0, n_x as f64);
    let k = (s.floor() as usize).min(n_x - 1);
    (k, s - k as f64)
}

/// `x^p` with fast paths for the common exponents.
#[inline]
pub(crate) fn pow_ratio(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        r * r
    } else if p == 1.0 {
        r
    } else if p == 0.5 {
        r.sqrt()
    } else {
        r.powf(p)
    }
}

/// Evaluates `I_β` over a whole slice.
pub(crate) struct NonlocalOperator<'a> {
    pub stencil: &'a NonlocalStencil,
    pub beta: f64,
    pub lambda: f64,
    pub m_clamp: Option<f64>,
    pub eps_pos: f64,
}

impl NonlocalOperator<'_> {
    /// Writes `I_β[slice]` into `out`; returns clamp activations and the
    /// largest `|ν̂|` seen.
    pub fn apply(&self, slice: &[f64], t: f64, out: &mut [f64]) -> Result<(usize, f64)> {
        let n_x = slice.len() - 1;
        for (j, v) in slice.iter().enumerate() {
            if !(*v >= self.eps_pos) {
                return Err(Error::Positivity {
                    t,
                    x: j as f64 / n_x as f64,
                    value: *v,
                });
            }
        }
        let s = self.stencil;
        let one_m_beta = 1.0 - self.beta;
        let p = 1.0 / one_m_beta;
        let mut clamps = 0usize;
        let mut max_nu = 0.0f64;
        for j in 0..=n_x {
            let lj = slice[j];
            let mut acc = 0.0;
            for e in s.range(j) {
                let ratio = s.post_value(slice, e) / lj;
                let nu = ratio.ln() * p;
                max_nu = max_nu.max(nu.abs());
                let term = match self.m_clamp {
                    Some(m) if nu.abs() > m => {
                        clamps += 1;
                        let nc = nu.clamp(-m, m);
                        // Hamiltonian at the clamped control, divided by (1−β)Λ_j.
                        ((self.beta * nc).exp() * ratio - 1.0 + self.beta * (1.0 - nc.exp())) / one_m_beta
                    }
                    _ => pow_ratio(ratio, p) - 1.0,
                };
                acc += s.weight[e] * term;
            }
            out[j] = one_m_beta * self.lambda * lj * acc;
        }
        Ok((clamps, max_nu))
    }
}

/// `I_β` of an arbitrary positive slice (`n_x + 1` values on a uniform grid).
pub fn i_beta(slice: &[f64], model: &ModelConfig, config: &PideConfig) -> Result<Vec<f64>> {
    if slice.len() < 3 {
        return Err(invalid("slice needs at least three nodes"));
    }
    let stencil = NonlocalStencil::new(model, slice.len() - 1, config.n_q);
    let op = NonlocalOperator {
        stencil: &stencil,
        beta: model.beta(),
        lambda: model.signal.lambda,
        m_clamp: config.m_clamp,
        eps_pos: config.eps_pos,
    };
    let mut out = vec![0.0; slice.len()];
    op.apply(slice, f64::NAN, &mut out)?;
    Ok(out)
}

/// Implicit local operator `I − dt·L` as a tridiagonal matrix.
struct LocalMatrix {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl LocalMatrix {
    fn new(model: &ModelConfig, n_x: usize, dt: f64) -> Self {
        let h = 1.0 / n_x as f64;
        let n = n_x + 1;
        let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let c = coefficients(j as f64 * h, model);
            let diff = 0.5 * c.sigma_bar * c.sigma_bar / (h * h);
            // Forward difference when the drift points up (and always at x = 0).
            let forward = j == 0 || (j < n_x && c.mu_bar > 0.0);
            // Row (lo, mid, up) of L; the matrix is I − dt·L.
            let (mut lo, mut mid, mut up) = (0.0, -c.d0, 0.0);
            if forward {
                up += c.mu_bar / h;
                mid -= c.mu_bar / h;
            } else {
                lo -= c.mu_bar / h;
                mid += c.mu_bar / h;
            }
            if j > 0 && j < n_x {
                lo += diff;
                up += diff;
                mid -= 2.0 * diff;
            }
            lower[j] = -dt * lo;
            upper[j] = -dt * up;
            diag[j] = 1.0 - dt * mid;
        }
        Self { lower, diag, upper }
    }
}

/// Everything a backward step needs, built once per solve.
pub(crate) struct StepContext {
    matrix: LocalMatrix,
    stencil: NonlocalStencil,
    beta: f64,
    lambda: f64,
    dt: f64,
    m_clamp: Option<f64>,
    eps_pos: f64,
    rhs: Vec<f64>,
    nonlocal: Vec<f64>,
    scratch: Vec<f64>,
}

impl StepContext {
    pub(crate) fn new(model: &ModelConfig, config: &PideConfig) -> Self {
        let n = config.n_x + 1;
        let dt = model.horizon / config.n_t as f64;
        Self {
            matrix: LocalMatrix::new(model, config.n_x, dt),
            stencil: NonlocalStencil::new(model, config.n_x, config.n_q),
            beta: model.beta(),
            lambda: model.signal.lambda,
            dt,
            m_clamp: config.m_clamp,
            eps_pos: config.eps_pos,
            rhs: vec![0.0; n],
            nonlocal: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    fn step(&mut self, next: &[f64], t_next: f64, out: &mut [f64]) -> Result<(usize, f64)> {
        let op = NonlocalOperator {
            stencil: &self.stencil,
            beta: self.beta,
            lambda: self.lambda,
            m_clamp: self.m_clamp,
            eps_pos: self.eps_pos,
        };
        let stats = op.apply(next, t_next, &mut self.nonlocal)?;
        for j in 0..next.len() {
            self.rhs[j] = next[j] + self.dt * (self.nonlocal[j] + 1.0);
        }
        tridiag::solve(
            &self.matrix.lower,
            &self.matrix.diag,
            &self.matrix.upper,
            &self.rhs,
            out,
            &mut self.scratch,
        )?;
        Ok(stats)
    }
}

/// One backward step from the slice at `t + dt` to the slice at `t`.
pub fn hjb_step(next: &[f64], model: &ModelConfig, config: &PideConfig) -> Result<Vec<f64>> {
    if next.len() != config.n_x + 1 {
        return Err(invalid(format!(
            "slice has {} nodes, config expects {}",
            next.len(),
            config.n_x + 1
        )));
    }
    let mut ctx = StepContext::new(model, config);
    let mut out = vec![0.0; next.len()];
    ctx.step(next, f64::NAN, &mut out)?;
    Ok(out)
}

/// Post-solve checks and statistics.
#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub dt: f64,
    pub dx: f64,
    pub mark_nodes: usize,
    pub stability_ratio: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub nu_clamp_activations: usize,
    pub max_abs_nu: f64,
    pub nu_threshold: f64,
    /// Largest shortfall below / excess above the scheme's envelope.
    pub envelope_shortfall: f64,
    pub envelope_excess: f64,
    /// Same against the continuous envelope.
    pub continuous_shortfall: f64,
    pub continuous_excess: f64,
    /// Same against the constant bounds.
    pub literal_shortfall: f64,
    pub literal_excess: f64,
}

/// `Λ̂` on the `(t, x)` grid, row-major by time node.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    pub model: ModelConfig,
    pub config: PideConfig,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    values: Vec<f64>,
    pub bounds: LambdaBounds,
    pub diagnostics: SolveDiagnostics,
}

/// Backward sweep from `Λ̂(T, ·) = 1`.
pub fn solve_lambda(model: &ModelConfig, config: &PideConfig) -> Result<ValueSurface> {
    config.validate(model)?;
    let (n_x, n_t) = (config.n_x, config.n_t);
    let n = n_x + 1;
    let horizon = model.horizon;
    let dt = horizon / n_t as f64;
    let bounds = LambdaBounds::new(model);
    let envelope = bounds.discrete(n_t);

    let mut ctx = StepContext::new(model, config);
    let mut values = vec![0.0; n * (n_t + 1)];
    values[n_t * n..].fill(1.0);
    let mut clamps = 0usize;
    let mut max_nu = 0.0f64;
    let mut cur = vec![0.0; n];
    for i in (0..n_t).rev() {
        let (head, tail) = values.split_at_mut((i + 1) * n);
        let next = &tail[..n];
        let t_next = (i + 1) as f64 * dt;
        let (c, m) = ctx.step(next, t_next, &mut cur)?;
        clamps += c;
        max_nu = max_nu.max(m);
        let (lo, hi) = envelope[i];
        let t = i as f64 * dt;
        for (j, v) in cur.iter().enumerate() {
            if !(*v >= lo - config.bound_tol && *v <= hi + config.bound_tol) {
                return Err(Error::BoundBreach {
                    t,
                    x: j as f64 / n_x as f64,
                    value: *v,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        head[i * n..].copy_from_slice(&cur);
    }
    // ν̂ at t = 0 is used by the verifiers too.
    let (c0, m0) = NonlocalOperator {
        stencil: &ctx.stencil,
        beta: ctx.beta,
        lambda: ctx.lambda,
        m_clamp: ctx.m_clamp,
        eps_pos: ctx.eps_pos,
    }
    .apply(&values[..n], 0.0, &mut cur)?;
    clamps += c0;
    max_nu = max_nu.max(m0);

    let t: Vec<f64> = (0..=n_t).map(|i| i as f64 * dt).collect();
    let x: Vec<f64> = (0..=n_x).map(|j| j as f64 / n_x as f64).collect();
    let mut d = SolveDiagnostics {
        dt,
        dx: 1.0 / n_x as f64,
        mark_nodes: ctx.stencil.rule.len(),
        stability_ratio: config.stability_ratio(model),
        min_value: f64::INFINITY,
        max_value: f64::NEG_INFINITY,
        nu_clamp_activations: clamps,
        max_abs_nu: max_nu,
        nu_threshold: bounds.nu_threshold(),
        envelope_shortfall: 0.0,
        envelope_excess: 0.0,
        continuous_shortfall: 0.0,
        continuous_excess: 0.0,
        literal_shortfall: 0.0,
        literal_excess: 0.0,
    };
    for i in 0..=n_t {
        let (el, eu) = envelope[i];
        let (cl, cu) = bounds.continuous(horizon - t[i]);
        for v in &values[i * n..(i + 1) * n] {
            d.min_value = d.min_value.min(*v);
            d.max_value = d.max_value.max(*v);
            d.envelope_shortfall = d.envelope_shortfall.max(el - v);
            d.envelope_excess = d.envelope_excess.max(v - eu);
            d.continuous_shortfall = d.continuous_shortfall.max(cl - v);
            d.continuous_excess = d.continuous_excess.max(v - cu);
            d.literal_shortfall = d.literal_shortfall.max(bounds.literal_lower - v);
            d.literal_excess = d.literal_excess.max(v - bounds.literal_upper);
        }
    }
    Ok(ValueSurface {
        model: model.clone(),
        config: *config,
        t,
        x,
        values,
        bounds,
        diagnostics: d,
    })
}

impl ValueSurface {
    pub fn n_x(&self) -> usize {
        self.x.len() - 1
    }

    pub fn n_t(&self) -> usize {
        self.t.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.diagnostics.dt
    }

    pub fn horizon(&self) -> f64 {
        self.model.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n = self.x.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn at_node(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.x.len() + j]
    }

    /// Time node below `t` and the interpolation fraction.
    #[inline]
    pub(crate) fn locate_t(&self, t: f64) -> (usize, f64) {
        let s = (t / self.dt()).clamp(0.0, self.n_t() as f64);
        let i = (s.floor() as usize).min(self.n_t().saturating_sub(1));
        (i, s - i as f64)
    }

    #[inline]
    fn slice_interp(&self, i: usize, x: f64) -> f64 {
        let (k, th) = locate(x, self.n_x());
        let s = self.slice(i);
        s[k] + th * (s[k + 1] - s[k])
    }

    /// `Λ̂(t, x)`, linear in each variable.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        let (i, w) = self.locate_t(t);
        let a = self.slice_interp(i, x);
        if w == 0.0 {
            return a;
        }
        a + w * (self.slice_interp(i + 1, x) - a)
    }

    /// `∂ₓΛ̂` at a grid node: central inside, one-sided at the ends.
    pub fn dx_at_node(&self, i: usize, j: usize) -> f64 {
        let s = self.slice(i);
        let n = self.n_x();
        let h = 1.0 / n as f64;
        if j == 0 {
            (s[1] - s[0]) / h
        } else if j == n {
            (s[n] - s[n - 1]) / h
        } else {
            (s[j + 1] - s[j - 1]) / (2.0 * h)
        }
    }

    /// `ν̂(t, x, z) = ln(Λ̂(t, ξ(x, z))/Λ̂(t, x))/(1−β)`, unclamped.
    pub fn nu_hat(&self, t: f64, x: f64, z: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(invalid(format!("filter value {x} outside [0, 1]")));
        }
        let post = crate::filter::xi(x, z, &self.model.signal)?;
        Ok((self.value(t, post) / self.value(t, x)).ln() / (1.0 - self.model.beta()))
    }

    /// [`Self::nu_hat`] clipped to `[−M, M]`; also reports whether the
    /// clip was active.
    pub fn nu_hat_clamped(&self, t: f64, x: f64, z: f64, m: f64) -> Result<(f64, bool)> {
        let nu = self.nu_hat(t, x, z)?;
        Ok((nu.clamp(-m, m), nu.abs() > m))
    }
}
