//! JSON problem configuration.
//!
//! A document looks like
//!
//! ```json
//! {
//!   "regime":  {"a1": 1.0, "a2": 1.0},
//!   "market":  {"mu1": 0.12, "mu2": -0.04, "sigma": 0.2, "r": 0.02},
//!   "signal":  {"lambda": 2.0, "family": "gaussian",
//!               "params": {"mean1": -1.0, "var1": 0.625, "mean2": 1.0, "var2": 0.5},
//!               "support": null},
//!   "utility": {"kappa": -1.0},
//!   "horizon": 1.0, "x0": 0.5, "v0": 1.0,
//!   "options": {"initial_regime": "prior", "d0_form": "squared"}
//! }
//! ```
//!
//! `options` is optional. Missing or mistyped keys are reported by dotted
//! path (`utility.kappa`). [`apply_override`] edits a raw document by dotted
//! path before parsing, which is how CLI `--set` flags work.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::density::{SignalDensityPair, SignalFamily, Support};
use crate::error::{Error, Result};
use crate::market::{MarketParams, RegimeParams, UtilityParams};

/// How the true initial regime is chosen in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialRegime {
    /// Bernoulli(`x0`), so the filter starts correctly initialized.
    #[default]
    Prior,
    Bull,
    Bear,
}

/// Discount coefficient convention in the dual PIDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum D0Form {
    /// `βr + ½β(1−β)θ̂²`
    #[default]
    Squared,
    /// `βr + ½β(1−β)θ̂`
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelOptions {
    #[serde(default)]
    pub initial_regime: InitialRegime,
    #[serde(default)]
    pub d0_form: D0Form,
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub regime: RegimeParams,
    pub market: MarketParams,
    pub signal: SignalDensityPair,
    pub utility: UtilityParams,
    pub horizon: f64,
    pub x0: f64,
    pub v0: f64,
    pub initial_regime: InitialRegime,
    pub d0_form: D0Form,
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn field<'a>(obj: &'a Value, path: &str) -> Result<&'a Value> {
    let mut cur = obj;
    for key in path.split('.') {
        cur = cur
            .get(key)
            .ok_or_else(|| cfg(format!("missing key `{path}`")))?;
    }
    if cur.is_null() {
        return Err(cfg(format!("missing key `{path}`")));
    }
    Ok(cur)
}

fn number(obj: &Value, path: &str) -> Result<f64> {
    field(obj, path)?
        .as_f64()
        .ok_or_else(|| cfg(format!("key `{path}` must be a number")))
}

fn nullable_bound(v: &Value, path: &str, infinite: f64) -> Result<f64> {
    match v {
        Value::Null => Ok(infinite),
        Value::Number(n) => Ok(n.as_f64().unwrap_or(infinite)),
        _ => Err(cfg(format!("`{path}` entries must be numbers or null"))),
    }
}

fn support_from(v: Option<&Value>) -> Result<Option<Support>> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(a)) if a.len() == 2 => Ok(Some(Support {
            lo: nullable_bound(&a[0], "signal.support", f64::NEG_INFINITY)?,
            hi: nullable_bound(&a[1], "signal.support", f64::INFINITY)?,
        })),
        Some(_) => Err(cfg("`signal.support` must be null or [lo, hi]")),
    }
}

fn support_to(s: Support) -> Value {
    let end = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
    json!([end(s.lo), end(s.hi)])
}

impl ModelConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| cfg(format!("malformed JSON: {e}")))?;
        Self::from_value(&doc)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_value(&read_document(path)?)
    }

    pub fn from_value(doc: &Value) -> Result<Self> {
        if !doc.is_object() {
            return Err(cfg("config root must be a JSON object"));
        }
        let regime = RegimeParams {
            a1: number(doc, "regime.a1")?,
            a2: number(doc, "regime.a2")?,
        };
        let market = MarketParams {
            mu1: number(doc, "market.mu1")?,
            mu2: number(doc, "market.mu2")?,
            sigma: number(doc, "market.sigma")?,
            r: number(doc, "market.r")?,
        };
        let lambda = number(doc, "signal.lambda")?;
        let family_name = field(doc, "signal.family")?
            .as_str()
            .ok_or_else(|| cfg("key `signal.family` must be a string"))?;
        let params = field(doc, "signal.params")?.clone();
        let family: SignalFamily = serde_json::from_value(json!({
            "family": family_name,
            "params": params,
        }))
        .map_err(|e| cfg(format!("signal.params for family `{family_name}`: {e}")))?;
        let utility = UtilityParams {
            kappa: number(doc, "utility.kappa")?,
        };
        let horizon = number(doc, "horizon")?;
        let x0 = number(doc, "x0")?;
        let v0 = number(doc, "v0")?;
        let options: ModelOptions = match doc.get("options") {
            None | Some(Value::Null) => ModelOptions::default(),
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| cfg(format!("options: {e}")))?,
        };

        let to_cfg = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        regime.validate().map_err(to_cfg)?;
        market.validate().map_err(to_cfg)?;
        utility.validate().map_err(to_cfg)?;
        let signal = SignalDensityPair::new(lambda, family).map_err(to_cfg)?;
        if let Some(s) = support_from(doc.get("signal").and_then(|s| s.get("support")))? {
            if s != signal.support {
                return Err(cfg(format!(
                    "signal.support {:?} does not match the support {:?} of family `{}`",
                    (s.lo, s.hi),
                    (signal.support.lo, signal.support.hi),
                    family_name
                )));
            }
        }
        let model = ModelConfig {
            regime,
            market,
            signal,
            utility,
            horizon,
            x0,
            v0,
            initial_regime: options.initial_regime,
            d0_form: options.d0_form,
        };
        model.validate_scalars()?;
        Ok(model)
    }

    fn validate_scalars(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(cfg(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.x0 > 0.0 && self.x0 < 1.0) {
            return Err(cfg(format!("x0 must lie in (0, 1), got {}", self.x0)));
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(cfg(format!("v0 must be positive, got {}", self.v0)));
        }
        Ok(())
    }

    /// Canonical JSON document; parsing it back yields an equal model.
    pub fn to_value(&self) -> Value {
        let fam = serde_json::to_value(&self.signal.family).expect("family serializes");
        json!({
            "regime": {"a1": self.regime.a1, "a2": self.regime.a2},
            "market": {
                "mu1": self.market.mu1,
                "mu2": self.market.mu2,
                "sigma": self.market.sigma,
                "r": self.market.r,
            },
            "signal": {
                "lambda": self.signal.lambda,
                "family": fam["family"],
                "params": fam["params"],
                "support": support_to(self.signal.support),
            },
            "utility": {"kappa": self.utility.kappa},
            "horizon": self.horizon,
            "x0": self.x0,
            "v0": self.v0,
            "options": ModelOptions {
                initial_regime: self.initial_regime,
                d0_form: self.d0_form,
            },
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("value serializes")
    }

    /// `θ₁ = θ₂` and `f₁ = f₂`: no information anywhere.
    pub fn is_degenerate(&self) -> bool {
        self.market.mu1 == self.market.mu2 && self.signal.is_uninformative()
    }

    pub fn beta(&self) -> f64 {
        self.utility.beta()
    }
}

pub fn read_document(path: &std::path::Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| cfg(format!("malformed JSON in {}: {e}", path.display())))
}

/// Applies `key.path=value` to a raw document. The value is parsed as JSON
/// when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| cfg(format!("override `{assignment}` must look like key.path=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(cfg("override with empty key path"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| cfg(format!("override `{path}`: `{key}` is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*key).to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split always yields at least one key")
}

/// Ready-made instances used by the test suites and the FFI examples.
pub mod presets {
    use super::*;

    fn build(doc: Value) -> ModelConfig {
        ModelConfig::from_value(&doc).expect("preset is valid")
    }

    /// Uninformative instance where the problem collapses to Merton's.
    pub fn merton() -> ModelConfig {
        build(json!({
            "regime": {"a1": 1.0, "a2": 1.0},
            "market": {"mu1": 0.05, "mu2": 0.05, "sigma": 0.2, "r": 0.02},
            "signal": {"lambda": 2.0, "family": "gaussian",
                       "params": {"mean1": 0.0, "var1": 1.0, "mean2": 0.0, "var2": 1.0}},
            "utility": {"kappa": -1.0},
            "horizon": 1.0, "x0": 0.5, "v0": 1.0
        }))
    }

    /// Informative Gaussian pair `f₁ ∝ e^{−0.8(z+1)²}`, `f₂ ∝ e^{−(z−1)²}`
    /// on a bull/bear market.
    pub fn gaussian_signals() -> ModelConfig {
        build(json!({
            "regime": {"a1": 1.0, "a2": 1.0},
            "market": {"mu1": 0.12, "mu2": -0.04, "sigma": 0.2, "r": 0.02},
            "signal": {"lambda": 2.0, "family": "gaussian",
                       "params": {"mean1": -1.0, "var1": 0.625, "mean2": 1.0, "var2": 0.5}},
            "utility": {"kappa": -1.0},
            "horizon": 1.0, "x0": 0.5, "v0": 1.0
        }))
    }

    /// Power/exponential mixture against a Gamma law.
    pub fn mixture_gamma(a1: f64, a2: f64) -> ModelConfig {
        build(json!({
            "regime": {"a1": 1.0, "a2": 1.0},
            "market": {"mu1": 0.12, "mu2": -0.04, "sigma": 0.2, "r": 0.02},
            "signal": {"lambda": 1.0, "family": "mixture_gamma",
                       "params": {"a1": a1, "a2": a2}},
            "utility": {"kappa": -1.0},
            "horizon": 1.0, "x0": 0.5, "v0": 1.0
        }))
    }
}
