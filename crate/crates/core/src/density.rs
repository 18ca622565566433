//! Signal mark densities `f₁` (bull) and `f₂` (bear).
//!
//! A [`SignalDensityPair`] carries the arrival intensity, the two densities
//! and their common support. Besides evaluation and sampling it builds the
//! truncated quadrature rule ([`MarkRule`]) used by the PIDE's nonlocal term
//! and by the Monte Carlo compensators.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{graded_breaks, CompositeRule};

/// Tail mass left outside the quadrature interval, per density and side.
pub const TAIL_MASS: f64 = 5e-13;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub const REAL_LINE: Support = Support {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, z: f64) -> bool {
        z >= self.lo && z <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Piecewise-linear density on a grid, renormalized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    grid: Vec<f64>,
    values: Vec<f64>,
    /// CDF at the grid nodes.
    cdf: Vec<f64>,
}

impl Tabulated {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(invalid(
                "tabulated density needs at least two nodes and one value per node",
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("tabulated grid must be strictly increasing"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("tabulated values must be finite and nonnegative"));
        }
        let mut cdf = vec![0.0; grid.len()];
        for k in 1..grid.len() {
            cdf[k] = cdf[k - 1] + 0.5 * (values[k] + values[k - 1]) * (grid[k] - grid[k - 1]);
        }
        let total = cdf[grid.len() - 1];
        if !(total > 0.0) {
            return Err(invalid("tabulated density has zero mass"));
        }
        let values = values.into_iter().map(|v| v / total).collect();
        let cdf = cdf.into_iter().map(|c| c / total).collect();
        Ok(Self { grid, values, cdf })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn cell(&self, z: f64) -> usize {
        let k = self.grid.partition_point(|&g| g <= z);
        k.saturating_sub(1).min(self.grid.len() - 2)
    }

    fn pdf(&self, z: f64) -> f64 {
        let n = self.grid.len();
        if z < self.grid[0] || z > self.grid[n - 1] {
            return 0.0;
        }
        let k = self.cell(z);
        let h = self.grid[k + 1] - self.grid[k];
        let w = (z - self.grid[k]) / h;
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    fn cdf(&self, z: f64) -> f64 {
        let n = self.grid.len();
        if z <= self.grid[0] {
            return 0.0;
        }
        if z >= self.grid[n - 1] {
            return 1.0;
        }
        let k = self.cell(z);
        let h = self.grid[k + 1] - self.grid[k];
        let s = z - self.grid[k];
        let slope = (self.values[k + 1] - self.values[k]) / h;
        self.cdf[k] + self.values[k] * s + 0.5 * slope * s * s
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.grid.len();
        let k = self.cdf.partition_point(|&c| c <= p).saturating_sub(1).min(n - 2);
        let h = self.grid[k + 1] - self.grid[k];
        let v0 = self.values[k];
        let slope = (self.values[k + 1] - v0) / h;
        let target = p - self.cdf[k];
        // Solve v0·s + ½·slope·s² = target on [0, h].
        let s = if slope.abs() < 1e-300 {
            if v0 > 0.0 {
                target / v0
            } else {
                0.0
            }
        } else {
            let disc = (v0 * v0 + 2.0 * slope * target).max(0.0);
            // Numerically stable root of the quadratic.
            2.0 * target / (v0 + disc.sqrt()).max(1e-300)
        };
        self.grid[k] + s.clamp(0.0, h)
    }

    /// Grid cells carrying positive mass.
    fn positive_cells(&self) -> Vec<bool> {
        self.values.windows(2).map(|v| v[0] > 0.0 || v[1] > 0.0).collect()
    }
}

/// One mark density.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Gaussian {
        mean: f64,
        var: f64,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        vars: Vec<f64>,
    },
    /// `a₂a₁z^{a₁−1}` on `(0, 1)` and `(1−a₂)e^{1−z}` on `(1, ∞)`.
    PowerExpMixture {
        a1: f64,
        a2: f64,
    },
    /// Gamma law with unit scale.
    Gamma {
        shape: f64,
    },
    Tabulated(Tabulated),
}

fn gaussian_cdf(z: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc(-(z - mean) / (2.0 * var).sqrt())
}

fn gaussian_sf(z: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc((z - mean) / (2.0 * var).sqrt())
}

fn gaussian_ln_pdf(z: f64, mean: f64, var: f64) -> f64 {
    let d = z - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

impl Density {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
            return Err(invalid("gaussian density needs finite mean and positive variance"));
        }
        Ok(Density::Gaussian { mean, var })
    }

    pub fn mixture(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != vars.len() {
            return Err(invalid("mixture needs matching, non-empty weights/means/vars"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || vars.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("mixture weights and variances must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(Density::GaussianMixture {
            weights,
            means,
            vars,
        })
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            Density::Gaussian { mean, var } => gaussian_ln_pdf(z, *mean, *var).exp(),
            Density::GaussianMixture {
                weights,
                means,
                vars,
            } => weights
                .iter()
                .zip(means)
                .zip(vars)
                .map(|((w, m), v)| w * gaussian_ln_pdf(z, *m, *v).exp())
                .sum(),
            Density::PowerExpMixture { a1, a2 } => {
                if z <= 0.0 {
                    0.0
                } else if z < 1.0 {
                    a2 * a1 * z.powf(a1 - 1.0)
                } else {
                    (1.0 - a2) * (1.0 - z).exp()
                }
            }
            Density::Gamma { shape } => {
                if z <= 0.0 {
                    0.0
                } else {
                    ((shape - 1.0) * z.ln() - z - ln_gamma(*shape)).exp()
                }
            }
            Density::Tabulated(t) => t.pdf(z),
        }
    }

    /// Natural log of the density; `-inf` where it vanishes.
    pub fn ln_pdf(&self, z: f64) -> f64 {
        match self {
            Density::Gaussian { mean, var } => gaussian_ln_pdf(z, *mean, *var),
            Density::GaussianMixture {
                weights,
                means,
                vars,
            } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(means)
                    .zip(vars)
                    .map(|((w, m), v)| w.ln() + gaussian_ln_pdf(z, *m, *v))
                    .collect();
                let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if top == f64::NEG_INFINITY {
                    return top;
                }
                top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
            }
            Density::PowerExpMixture { a1, a2 } => {
                if z <= 0.0 {
                    f64::NEG_INFINITY
                } else if z < 1.0 {
                    (a2 * a1).ln() + (a1 - 1.0) * z.ln()
                } else {
                    (1.0 - a2).ln() + 1.0 - z
                }
            }
            Density::Gamma { shape } => {
                if z <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (shape - 1.0) * z.ln() - z - ln_gamma(*shape)
                }
            }
            Density::Tabulated(t) => t.pdf(z).ln(),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            Density::Gaussian { mean, var } => gaussian_cdf(z, *mean, *var),
            Density::GaussianMixture {
                weights,
                means,
                vars,
            } => weights
                .iter()
                .zip(means)
                .zip(vars)
                .map(|((w, m), v)| w * gaussian_cdf(z, *m, *v))
                .sum(),
            Density::PowerExpMixture { a1, a2 } => {
                if z <= 0.0 {
                    0.0
                } else if z < 1.0 {
                    a2 * z.powf(*a1)
                } else {
                    a2 + (1.0 - a2) * (1.0 - (1.0 - z).exp())
                }
            }
            Density::Gamma { shape } => {
                if z <= 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, z)
                }
            }
            Density::Tabulated(t) => t.cdf(z),
        }
    }

    /// Upper tail `P[Z > z]`, accurate far into the tail.
    pub fn sf(&self, z: f64) -> f64 {
        match self {
            Density::Gaussian { mean, var } => gaussian_sf(z, *mean, *var),
            Density::GaussianMixture {
                weights,
                means,
                vars,
            } => weights
                .iter()
                .zip(means)
                .zip(vars)
                .map(|((w, m), v)| w * gaussian_sf(z, *m, *v))
                .sum(),
            Density::PowerExpMixture { a2, .. } => {
                if z < 1.0 {
                    1.0 - self.cdf(z)
                } else {
                    (1.0 - a2) * (1.0 - z).exp()
                }
            }
            Density::Gamma { shape } => {
                if z <= 0.0 {
                    1.0
                } else {
                    gamma_ur(*shape, z)
                }
            }
            Density::Tabulated(t) => 1.0 - t.cdf(z),
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Density::Gaussian { .. } | Density::GaussianMixture { .. } => Support::REAL_LINE,
            Density::PowerExpMixture { .. } | Density::Gamma { .. } => Support {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            Density::Tabulated(t) => Support {
                lo: t.grid[0],
                hi: t.grid[t.grid.len() - 1],
            },
        }
    }

    /// Interval outside which each tail carries less than `tail` mass.
    pub fn truncation(&self, tail: f64) -> (f64, f64) {
        match self {
            Density::Gaussian { mean, var } => {
                let k = standard_normal_quantile(1.0 - tail);
                (mean - k * var.sqrt(), mean + k * var.sqrt())
            }
            Density::GaussianMixture { means, vars, .. } => {
                let k = standard_normal_quantile(1.0 - tail / means.len() as f64);
                let lo = means
                    .iter()
                    .zip(vars)
                    .map(|(m, v)| m - k * v.sqrt())
                    .fold(f64::INFINITY, f64::min);
                let hi = means
                    .iter()
                    .zip(vars)
                    .map(|(m, v)| m + k * v.sqrt())
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Density::PowerExpMixture { a2, .. } => (0.0, 1.0 + ((1.0 - a2) / tail).ln().max(0.0)),
            Density::Gamma { .. } => (0.0, self.upper_quantile_by_bisection(tail)),
            Density::Tabulated(t) => (t.grid[0], t.grid[t.grid.len() - 1]),
        }
    }

    fn upper_quantile_by_bisection(&self, tail: f64) -> f64 {
        let mut hi = 1.0;
        while self.sf(hi) > tail {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.sf(mid) > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Points where the density is not smooth.
    fn kinks(&self) -> Vec<f64> {
        match self {
            Density::PowerExpMixture { .. } => vec![1.0],
            Density::Tabulated(t) => t.grid.clone(),
            _ => Vec::new(),
        }
    }

    /// Finite endpoint `p` with density behaving like `(z − p)^{a−1}`, `a < 1`.
    fn singular_endpoint(&self) -> Option<(f64, f64)> {
        match self {
            Density::PowerExpMixture { a1, .. } if *a1 < 1.0 => Some((0.0, *a1)),
            Density::Gamma { shape } if *shape < 1.0 => Some((0.0, *shape)),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Gaussian { mean, var } => {
                let n: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * n
            }
            Density::GaussianMixture {
                weights,
                means,
                vars,
            } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let n: f64 = StandardNormal.sample(rng);
                means[k] + vars[k].sqrt() * n
            }
            Density::PowerExpMixture { a1, a2 } => {
                let u: f64 = rng.gen();
                if u < *a2 {
                    let v: f64 = rng.gen();
                    v.powf(1.0 / a1)
                } else {
                    let e: f64 = Exp1.sample(rng);
                    1.0 + e
                }
            }
            Density::Gamma { shape } => rand_distr::Gamma::new(*shape, 1.0)
                .expect("validated gamma shape")
                .sample(rng),
            Density::Tabulated(t) => t.quantile(rng.gen()),
        }
    }
}

fn standard_normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p)
}

/// Configuration-level description of the signal pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum SignalFamily {
    /// `f₁ = N(mean1, var1)`, `f₂ = N(mean2, var2)`.
    Gaussian {
        mean1: f64,
        var1: f64,
        mean2: f64,
        var2: f64,
    },
    /// `f₁` a Gaussian mixture, `f₂ = N(mean2, var2)`.
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        vars: Vec<f64>,
        mean2: f64,
        var2: f64,
    },
    /// Power/exponential mixture against a Gamma(a1) law.
    MixtureGamma { a1: f64, a2: f64 },
    /// Shared grid with one column of values per regime.
    Tabulated {
        grid: Vec<f64>,
        f1: Vec<f64>,
        f2: Vec<f64>,
    },
}

impl SignalFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SignalFamily::Gaussian { .. } => "gaussian",
            SignalFamily::GaussianMixture { .. } => "gaussian_mixture",
            SignalFamily::MixtureGamma { .. } => "mixture_gamma",
            SignalFamily::Tabulated { .. } => "tabulated",
        }
    }
}

/// Arrival intensity plus the two regime-conditional mark densities.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDensityPair {
    pub lambda: f64,
    pub family: SignalFamily,
    pub f1: Density,
    pub f2: Density,
    pub support: Support,
}

impl SignalDensityPair {
    pub fn new(lambda: f64, family: SignalFamily) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("signal intensity must be >= 0, got {lambda}")));
        }
        let (f1, f2) = match &family {
            SignalFamily::Gaussian {
                mean1,
                var1,
                mean2,
                var2,
            } => (
                Density::gaussian(*mean1, *var1)?,
                Density::gaussian(*mean2, *var2)?,
            ),
            SignalFamily::GaussianMixture {
                weights,
                means,
                vars,
                mean2,
                var2,
            } => (
                Density::mixture(weights.clone(), means.clone(), vars.clone())?,
                Density::gaussian(*mean2, *var2)?,
            ),
            SignalFamily::MixtureGamma { a1, a2 } => {
                if !(*a1 > 0.0 && *a1 < 1.0 && *a2 > 0.0 && *a2 < 1.0) {
                    return Err(invalid("mixture_gamma needs a1, a2 in (0, 1)"));
                }
                (
                    Density::PowerExpMixture { a1: *a1, a2: *a2 },
                    Density::Gamma { shape: *a1 },
                )
            }
            SignalFamily::Tabulated { grid, f1, f2 } => {
                let t1 = Tabulated::new(grid.clone(), f1.clone())?;
                let t2 = Tabulated::new(grid.clone(), f2.clone())?;
                let c1 = t1.positive_cells();
                let c2 = t2.positive_cells();
                if let Some(k) = c1.iter().zip(&c2).position(|(a, b)| a != b) {
                    return Err(Error::SupportMismatch(format!(
                        "tabulated densities differ in support on [{}, {}]",
                        grid[k],
                        grid[k + 1]
                    )));
                }
                (Density::Tabulated(t1), Density::Tabulated(t2))
            }
        };
        let support = f1.support();
        if f2.support() != support {
            return Err(Error::SupportMismatch(format!(
                "f1 supported on {:?}, f2 on {:?}",
                support,
                f2.support()
            )));
        }
        Ok(Self {
            lambda,
            family,
            f1,
            f2,
            support,
        })
    }

    /// Same densities, different intensity.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.family.clone())
    }

    /// Mixture density `f₁(z)x + f₂(z)(1−x)`; zero outside the support.
    #[inline]
    pub fn f_hat(&self, x: f64, z: f64) -> f64 {
        self.f1.pdf(z) * x + self.f2.pdf(z) * (1.0 - x)
    }

    /// True when `f₁` and `f₂` are the same law.
    pub fn is_uninformative(&self) -> bool {
        self.f1 == self.f2
    }

    /// Sample a mark from `f₁` (`bull = true`) or `f₂`.
    pub fn sample_mark<R: Rng + ?Sized>(&self, bull: bool, rng: &mut R) -> f64 {
        if bull {
            self.f1.sample(rng)
        } else {
            self.f2.sample(rng)
        }
    }

    /// Quadrature interval: union of both densities' truncation intervals.
    pub fn truncation(&self) -> (f64, f64) {
        let (a1, b1) = self.f1.truncation(TAIL_MASS);
        let (a2, b2) = self.f2.truncation(TAIL_MASS);
        (
            a1.min(a2).max(self.support.lo),
            b1.max(b2).min(self.support.hi),
        )
    }

    /// Builds the composite Gauss–Legendre rule over the truncated mark
    /// domain with roughly `n_q` nodes on the regular part.
    pub fn mark_rule(&self, n_q: usize) -> MarkRule {
        let (lo, hi) = self.truncation();
        let rule = self.composite_rule(lo, hi, n_q);
        MarkRule::new(rule, self, lo, hi)
    }

    pub(crate) fn composite_rule(&self, lo: f64, hi: f64, n_q: usize) -> CompositeRule {
        const ORDER: usize = 16;
        let mut breaks: Vec<f64> = vec![lo, hi];
        for k in self.f1.kinks().into_iter().chain(self.f2.kinks()) {
            if k > lo && k < hi {
                breaks.push(k);
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let singular = self
            .f1
            .singular_endpoint()
            .or_else(|| self.f2.singular_endpoint())
            .filter(|(p, _)| (*p - lo).abs() < 1e-300);

        if matches!(self.f1, Density::Tabulated(_)) {
            // Piecewise-linear densities: a few nodes per grid cell.
            let cells = breaks.len() - 1;
            let order = (n_q / cells.max(1)).clamp(2, ORDER);
            return CompositeRule::from_breaks(&breaks, order);
        }

        let width = hi - lo;
        let panels_total = (n_q / ORDER).max(1);
        let mut refined = Vec::new();
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if let (Some((_, power)), true) = (singular, a == lo) {
                // Innermost panel holds less than the tail budget.
                let smallest = TAIL_MASS.powf(1.0 / power).max(1e-300);
                let g = graded_breaks(a, b, smallest, 8.0);
                refined.extend_from_slice(&g[..g.len() - 1]);
                continue;
            }
            let panels = ((panels_total as f64) * (b - a) / width).ceil().max(1.0) as usize;
            for k in 0..panels {
                refined.push(a + (b - a) * k as f64 / panels as f64);
            }
        }
        refined.push(hi);
        CompositeRule::from_breaks(&refined, ORDER)
    }
}

/// Quadrature nodes on the truncated mark domain with both densities
/// pre-evaluated.
#[derive(Debug, Clone)]
pub struct MarkRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl MarkRule {
    fn new(rule: CompositeRule, pair: &SignalDensityPair, lo: f64, hi: f64) -> Self {
        let f1 = rule.nodes.iter().map(|&z| pair.f1.pdf(z)).collect();
        let f2 = rule.nodes.iter().map(|&z| pair.f2.pdf(z)).collect();
        Self {
            nodes: rule.nodes,
            weights: rule.weights,
            f1,
            f2,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ g(z) f̂(x, z) dz` over the truncated domain.
    pub fn integrate_against_f_hat(&self, x: f64, g: impl Fn(usize, f64) -> f64) -> f64 {
        let mut s = 0.0;
        for q in 0..self.nodes.len() {
            let fh = self.f1[q] * x + self.f2[q] * (1.0 - x);
            s += self.weights[q] * fh * g(q, self.nodes[q]);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn example_gaussians() -> SignalDensityPair {
        SignalDensityPair::new(
            2.0,
            SignalFamily::Gaussian {
                mean1: -1.0,
                var1: 1.0 / 1.6,
                mean2: 1.0,
                var2: 0.5,
            },
        )
        .unwrap()
    }

    #[test]
    fn gaussian_pdf_matches_closed_form() {
        let p = example_gaussians();
        let z = 0.3_f64;
        let f1 = (1.6_f64).sqrt() / (2.0 * std::f64::consts::PI).sqrt() * (-0.8 * (z + 1.0).powi(2)).exp();
        let f2 = 2.0_f64.sqrt() / (2.0 * std::f64::consts::PI).sqrt() * (-(z - 1.0).powi(2)).exp();
        assert!((p.f1.pdf(z) - f1).abs() < 1e-15);
        assert!((p.f2.pdf(z) - f2).abs() < 1e-15);
    }

    #[test]
    fn every_family_integrates_to_one() {
        let fams = vec![
            SignalFamily::Gaussian { mean1: -1.0, var1: 0.625, mean2: 1.0, var2: 0.5 },
            SignalFamily::GaussianMixture {
                weights: vec![0.3, 0.7],
                means: vec![-1.0, 0.5],
                vars: vec![0.5, 1.0],
                mean2: 1.0,
                var2: 0.8,
            },
            SignalFamily::MixtureGamma { a1: 0.5, a2: 0.4 },
            SignalFamily::Tabulated {
                grid: vec![0.0, 1.0, 2.0, 3.0],
                f1: vec![0.0, 2.0, 1.0, 0.5],
                f2: vec![1.0, 1.0, 3.0, 0.0],
            },
        ];
        for fam in fams {
            let p = SignalDensityPair::new(1.0, fam.clone()).unwrap();
            let rule = p.mark_rule(128);
            let m1: f64 = rule.weights.iter().zip(&rule.f1).map(|(w, f)| w * f).sum();
            let m2: f64 = rule.weights.iter().zip(&rule.f2).map(|(w, f)| w * f).sum();
            assert!((m1 - 1.0).abs() < 1e-9, "{} f1 mass {m1}", fam.name());
            assert!((m2 - 1.0).abs() < 1e-9, "{} f2 mass {m2}", fam.name());
        }
    }

    #[test]
    fn tabulated_is_renormalized_and_linear() {
        let t = Tabulated::new(vec![0.0, 1.0, 2.0], vec![2.0, 2.0, 0.0]).unwrap();
        // trapezoid mass = 2 + 1 = 3
        assert!((t.pdf(0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.pdf(1.5) - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.cdf(2.0) - 1.0).abs() < 1e-15);
        for p in [0.1, 0.5, 0.8, 0.99] {
            assert!((t.cdf(t.quantile(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_tabulated_supports_are_rejected() {
        let err = SignalDensityPair::new(
            1.0,
            SignalFamily::Tabulated {
                grid: vec![0.0, 1.0, 2.0, 3.0],
                f1: vec![1.0, 1.0, 0.0, 0.0],
                f2: vec![0.0, 0.0, 1.0, 1.0],
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::SupportMismatch(_)));
    }

    #[test]
    fn power_exp_mixture_sampler_matches_cdf() {
        let d = Density::PowerExpMixture { a1: 0.5, a2: 0.4 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let below: usize = (0..n).filter(|_| d.sample(&mut rng) < 0.5).count();
        let p = d.cdf(0.5);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((below as f64 / n as f64) - p).abs() < 4.0 * se);
    }

    #[test]
    fn truncation_leaves_small_tails() {
        let p = example_gaussians();
        let (lo, hi) = p.truncation();
        for d in [&p.f1, &p.f2] {
            assert!(d.cdf(lo) < 1e-12);
            assert!(d.sf(hi) < 1e-12);
        }
        let g = Density::Gamma { shape: 0.5 };
        let (_, hi) = g.truncation(TAIL_MASS);
        assert!(g.sf(hi) <= TAIL_MASS * 1.0001);
    }
}
