//! Bounded-likelihood-ratio diagnostics for a signal pair.
//!
//! A pair is useful for the dual machinery when `b_min < f₂/f₁ < b_max`
//! on the common support with `b_min < 1 < b_max < ∞`, and the 3-divergence
//! `D₃ = (1/6)(∫ f₁³/f₂² dz − 1)` is finite.

use serde::{Serialize, Serializer};
use statrs::function::gamma::gamma;

use crate::density::{Density, SignalDensityPair, TAIL_MASS};
use crate::error::{Error, Result};
use crate::quadrature::{graded_breaks, CompositeRule};

/// Dense-scan settings for the likelihood-ratio sup/inf.
#[derive(Debug, Clone, Copy)]
pub struct ScanConfig {
    /// Uniform points on the first level; doubled on each refinement.
    pub points: usize,
    pub max_levels: usize,
    /// Successive maxima must agree to this ratio.
    pub stabilization: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            points: 2001,
            max_levels: 8,
            stabilization: 1.01,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    /// Target number of Gauss–Legendre nodes on the regular part.
    pub nodes: usize,
    pub tail_mass: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            nodes: 2048,
            tail_mass: TAIL_MASS,
        }
    }
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("Infinity")
    } else if *v < 0.0 {
        s.serialize_str("-Infinity")
    } else {
        s.serialize_str("NaN")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct D3Result {
    #[serde(serialize_with = "ser_extended")]
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub tail_mass: f64,
    /// Where divergence or overflow was detected.
    pub diagnostic_location: Option<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlrReport {
    #[serde(serialize_with = "ser_extended")]
    pub b_min_est: f64,
    #[serde(serialize_with = "ser_extended")]
    pub b_max_est: f64,
    /// `analytic` for Gaussian pairs, `scan` otherwise.
    pub ratio_method: String,
    #[serde(serialize_with = "ser_extended")]
    pub d3: f64,
    pub passes: bool,
    pub uninformative: bool,
    pub flags: Vec<String>,
    pub budget: Option<f64>,
    pub quadrature: D3Result,
}

/// Coefficients of `ln f₂(z) − ln f₁(z) = A z² + B z + C` for two Gaussians.
fn gaussian_log_ratio(m1: f64, v1: f64, m2: f64, v2: f64) -> (f64, f64, f64) {
    let a = -0.5 / v2 + 0.5 / v1;
    let b = m2 / v2 - m1 / v1;
    let c = -0.5 * m2 * m2 / v2 + 0.5 * m1 * m1 / v1 + 0.5 * (v1 / v2).ln();
    (a, b, c)
}

/// Extremes of `exp(A z² + B z + C)` over the real line.
fn quadratic_exp_range(a: f64, b: f64, c: f64) -> (f64, f64) {
    if a == 0.0 {
        return if b == 0.0 { (c.exp(), c.exp()) } else { (0.0, f64::INFINITY) };
    }
    let vertex = c - b * b / (4.0 * a);
    if a < 0.0 {
        (0.0, vertex.exp())
    } else {
        (vertex.exp(), f64::INFINITY)
    }
}

/// `ln f₂ − ln f₁`, or `None` where both densities vanish.
fn log_ratio(pair: &SignalDensityPair, z: f64) -> Option<f64> {
    let l1 = pair.f1.ln_pdf(z);
    let l2 = pair.f2.ln_pdf(z);
    match (l1.is_finite(), l2.is_finite()) {
        (true, true) => Some(l2 - l1),
        (false, true) => Some(f64::INFINITY),
        (true, false) => Some(f64::NEG_INFINITY),
        (false, false) => None,
    }
}

/// Points clustering at `p` from the side `dir` (±1), down to 1e-14 relative.
fn approach(p: f64, dir: f64, out: &mut Vec<f64>) {
    let scale = p.abs().max(1.0);
    for j in 1..=28 {
        out.push(p + dir * scale * 10f64.powf(-0.5 * j as f64));
    }
}

fn scan_points(pair: &SignalDensityPair, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect();
    let s = pair.support;
    if s.lo.is_finite() {
        approach(s.lo, 1.0, &mut pts);
    }
    if s.hi.is_finite() {
        approach(s.hi, -1.0, &mut pts);
    }
    for d in [&pair.f1, &pair.f2] {
        let kinks: Vec<f64> = match d {
            Density::PowerExpMixture { .. } => vec![1.0],
            Density::Tabulated(t) => t.grid().to_vec(),
            _ => Vec::new(),
        };
        for k in kinks {
            approach(k, 1.0, &mut pts);
            approach(k, -1.0, &mut pts);
            pts.push(k);
        }
    }
    pts.retain(|z| *z >= s.lo && *z <= s.hi && z.is_finite());
    pts
}

/// Scan-only estimate of `(inf, sup)` of `f₂/f₁`, widening the window and
/// doubling the resolution until successive maxima stabilize.
pub fn scan_ratio_bounds(pair: &SignalDensityPair, scan: &ScanConfig) -> Result<(f64, f64)> {
    let (lo0, hi0) = pair.truncation();
    let centre = 0.5 * (lo0 + hi0);
    let half = 0.5 * (hi0 - lo0);
    let mut prev: Option<(f64, f64)> = None;
    let mut stable_max = false;
    let mut stable_min = false;
    let mut last = (f64::NAN, f64::NAN);
    for level in 0..scan.max_levels {
        let grow = 1.5f64.powi(level as i32);
        let lo = (centre - half * grow).max(pair.support.lo);
        let hi = (centre + half * grow).min(pair.support.hi);
        let n = scan.points * (1 << level.min(6));
        let mut lmin = f64::INFINITY;
        let mut lmax = f64::NEG_INFINITY;
        let mut any = false;
        for z in scan_points(pair, lo, hi, n) {
            if let Some(l) = log_ratio(pair, z) {
                any = true;
                lmin = lmin.min(l);
                lmax = lmax.max(l);
            }
        }
        if !any {
            return Err(Error::SupportMismatch(
                "no mark carries positive density under both regimes".into(),
            ));
        }
        let cur = (lmin, lmax);
        if let Some((pmin, pmax)) = prev {
            let tol = scan.stabilization.ln();
            stable_max = cur.1 == f64::NEG_INFINITY || (cur.1 - pmax).abs() < tol;
            stable_min = cur.0 == f64::INFINITY || (cur.0 - pmin).abs() < tol;
            if stable_max && stable_min && level >= 2 {
                last = cur;
                break;
            }
        }
        prev = Some(cur);
        last = cur;
    }
    let b_min = if stable_min { last.0.exp() } else { 0.0 };
    let b_max = if stable_max { last.1.exp() } else { f64::INFINITY };
    Ok((b_min, b_max))
}

/// Estimates `(inf, sup)` of `f₂/f₁` over the support. Gaussian pairs are
/// handled in closed form, everything else by [`scan_ratio_bounds`].
pub fn likelihood_ratio_bounds(pair: &SignalDensityPair, scan: &ScanConfig) -> Result<(f64, f64)> {
    Ok(ratio_bounds_with_method(pair, scan)?.0)
}

fn ratio_bounds_with_method(pair: &SignalDensityPair, scan: &ScanConfig) -> Result<((f64, f64), &'static str)> {
    if pair.is_uninformative() {
        return Ok(((1.0, 1.0), "identical"));
    }
    if let (Density::Gaussian { mean: m1, var: v1 }, Density::Gaussian { mean: m2, var: v2 }) =
        (&pair.f1, &pair.f2)
    {
        let (a, b, c) = gaussian_log_ratio(*m1, *v1, *m2, *v2);
        return Ok((quadratic_exp_range(a, b, c), "analytic"));
    }
    Ok((scan_ratio_bounds(pair, scan)?, "scan"))
}

#[inline]
fn log_integrand(pair: &SignalDensityPair, z: f64) -> f64 {
    let l1 = pair.f1.ln_pdf(z);
    if l1 == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    3.0 * l1 - 2.0 * pair.f2.ln_pdf(z)
}

/// Largest variance among the components of a Gaussian-type density.
fn max_gaussian_var(d: &Density) -> Option<f64> {
    match d {
        Density::Gaussian { var, .. } => Some(*var),
        Density::GaussianMixture { vars, .. } => vars.iter().copied().reduce(f64::max),
        _ => None,
    }
}

/// `D₃(f₁‖f₂) = (1/6)(∫ f₁³/f₂² dz − 1)`.
///
/// The integration window starts from the densities' tail-mass truncation
/// and is pushed outward until the integrand has decayed 16 orders below
/// its peak and is still decreasing. A window that never closes, or a
/// finite endpoint where the integrand behaves like `d^p` with `p ≤ −1`,
/// yields an infinite value.
pub fn d3_divergence(pair: &SignalDensityPair, quad: &QuadConfig) -> Result<D3Result> {
    let (mut lo, mut hi) = pair.truncation();
    let mut result = D3Result {
        value: 0.0,
        lo,
        hi,
        nodes: 0,
        tail_mass: quad.tail_mass,
        diagnostic_location: None,
        diagnostic: None,
    };
    if pair.is_uninformative() {
        return Ok(result);
    }
    let infinite = |mut r: D3Result, at: f64, why: &str| {
        r.value = f64::INFINITY;
        r.diagnostic_location = Some(at);
        r.diagnostic = Some(why.to_string());
        Ok(r)
    };
    // Gaussian tails: ln integrand ~ z²(−3/(2v₁) + 1/v₂).
    if let (Some(v1), Density::Gaussian { var: v2, .. }) = (max_gaussian_var(&pair.f1), &pair.f2) {
        if -1.5 / v1 + 1.0 / v2 >= 0.0 {
            return infinite(result, f64::INFINITY, "integrand does not decay in the tails");
        }
    }

    let mut peak = f64::NEG_INFINITY;
    for k in 0..=400 {
        let z = lo + (hi - lo) * k as f64 / 400.0;
        peak = peak.max(log_integrand(pair, z));
    }
    const DECAY: f64 = 37.0;
    let width0 = hi - lo;
    for (side, support_end) in [(-1.0, pair.support.lo), (1.0, pair.support.hi)] {
        if support_end.is_finite() {
            continue;
        }
        let mut end = if side < 0.0 { lo } else { hi };
        let mut step = 0.25 * width0;
        let mut closed = false;
        for _ in 0..200 {
            let here = log_integrand(pair, end);
            let further = log_integrand(pair, end + side * step);
            peak = peak.max(here);
            if here == f64::INFINITY {
                return infinite(result, end, "f2 vanishes where f1 does not");
            }
            if here < peak - DECAY && further < here {
                closed = true;
                break;
            }
            // Sample the stretch being annexed so interior peaks are seen.
            for j in 1..=16 {
                peak = peak.max(log_integrand(pair, end + side * step * j as f64 / 16.0));
            }
            end += side * step;
            if (end - 0.5 * (lo + hi)).abs() > 1e12 {
                break;
            }
            step *= 1.25;
        }
        if !closed {
            return infinite(result, end, "integrand does not decay in the tails");
        }
        if side < 0.0 {
            lo = end;
        } else {
            hi = end;
        }
    }
    // Finite endpoints: local power of the integrand.
    for (side, p) in [(1.0, pair.support.lo), (-1.0, pair.support.hi)] {
        if !p.is_finite() {
            continue;
        }
        let scale = p.abs().max(1.0);
        let (d1, d2) = (1e-8 * scale, 1e-10 * scale);
        let g1 = log_integrand(pair, p + side * d1);
        let g2 = log_integrand(pair, p + side * d2);
        if g1 == f64::INFINITY || g2 == f64::INFINITY {
            return infinite(result, p, "f2 vanishes where f1 does not");
        }
        if g1.is_finite() && g2.is_finite() {
            let power = (g1 - g2) / (d1.ln() - d2.ln());
            if power <= -1.0 + 1e-6 {
                return infinite(result, p, "integrand is not integrable at the support endpoint");
            }
        }
    }
    if peak > 700.0 {
        return infinite(result, f64::NAN, "f1^3/f2^2 overflows double precision");
    }

    let rule = pair.composite_rule(lo, hi, quad.nodes);
    let shift = peak;
    let mut s = 0.0;
    for (z, w) in rule.nodes.iter().zip(&rule.weights) {
        let l = log_integrand(pair, *z);
        if l == f64::INFINITY {
            return infinite(result, *z, "f2 vanishes where f1 does not");
        }
        if l.is_finite() {
            s += w * (l - shift).exp();
        }
    }
    let integral = s * shift.exp();
    result.lo = lo;
    result.hi = hi;
    result.nodes = rule.len();
    if !integral.is_finite() {
        return infinite(result, f64::NAN, "f1^3/f2^2 overflows double precision");
    }
    result.value = ((integral - 1.0) / 6.0).max(0.0);
    Ok(result)
}

/// Runs both checks and aggregates the verdict.
pub fn check_blr(pair: &SignalDensityPair, l_f_budget: Option<f64>) -> Result<BlrReport> {
    if let Some(b) = l_f_budget {
        if !(b > 0.0) {
            return Err(crate::error::invalid(format!("L_F budget must be positive, got {b}")));
        }
    }
    let ((b_min, b_max), method) = ratio_bounds_with_method(pair, &ScanConfig::default())?;
    let d3 = d3_divergence(pair, &QuadConfig::default())?;
    let uninformative = pair.is_uninformative();
    let mut flags = Vec::new();
    if uninformative {
        flags.push("uninformative: f1 and f2 coincide".to_string());
    }
    if !b_max.is_finite() {
        flags.push("likelihood ratio f2/f1 is unbounded".to_string());
    }
    if !(b_min < 1.0 && 1.0 < b_max) {
        flags.push("need b_min < 1 < b_max".to_string());
    }
    if !d3.value.is_finite() {
        flags.push("3-divergence is infinite".to_string());
    }
    if let Some(b) = l_f_budget {
        if !(d3.value < b) {
            flags.push(format!("3-divergence exceeds budget {b}"));
        }
    }
    let passes = flags.is_empty();
    Ok(BlrReport {
        b_min_est: b_min,
        b_max_est: b_max,
        ratio_method: method.to_string(),
        d3: d3.value,
        passes,
        uninformative,
        flags,
        budget: l_f_budget,
        quadrature: d3,
    })
}

/// Closed-form constants for the power/exponential mixture against a
/// Gamma(`a₁`) law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureGammaConstants {
    pub b_max: f64,
    pub b_min: f64,
    pub l_f: f64,
}

pub fn mixture_gamma_constants(a1: f64, a2: f64) -> MixtureGammaConstants {
    let e = std::f64::consts::E;
    let g = gamma(a1);
    MixtureGammaConstants {
        b_max: (1.0 / (a2 * a1)).max(1.0 / ((1.0 - a2) * e)) / g,
        b_min: 0.0,
        l_f: e.powi(3) * g * g * gamma(2.0 - 2.0 * a1) + 2.0 * e * e * g * g * a1 * a1,
    }
}

/// `Γ(s) = ∫₀^∞ t^{s−1}e^{−t} dt` by graded composite Gauss–Legendre.
pub fn gamma_by_quadrature(s: f64) -> f64 {
    let split = 1.0;
    let near = if s < 1.0 {
        CompositeRule::from_breaks(&graded_breaks(0.0, split, 1e-14f64.powf(1.0 / s), 4.0), 16)
    } else {
        CompositeRule::uniform(0.0, split, 4, 16)
    };
    let far = CompositeRule::uniform(split, 80.0 + 4.0 * s, 64, 16);
    let f = |t: f64| ((s - 1.0) * t.ln() - t).exp();
    near.integrate(f) + far.integrate(f)
}

/// The `L_F` constant assembled from quadrature values of the Gamma
/// function instead of library calls.
pub fn mixture_gamma_l_f_by_quadrature(a1: f64) -> f64 {
    let e = std::f64::consts::E;
    let g = gamma_by_quadrature(a1);
    e.powi(3) * g * g * gamma_by_quadrature(2.0 - 2.0 * a1) + 2.0 * e * e * g * g * a1 * a1
}
