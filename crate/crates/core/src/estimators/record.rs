use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::tree::TreeShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    Conditional,
    Tilted,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Conditional => "conditional",
            EstimatorKind::Tilted => "tilted",
        })
    }
}

/// What a record estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `P(max <= threshold)`
    MaxCdf,
    /// `P(max phi_tilde <= m_n - lambda)`
    LeftTail,
    /// `P(every leaf >= 0)`
    Positivity,
    /// `E(X | max phi_tilde <= X)`
    ConditionalMean,
    /// Orthant probability of a dense covariance.
    Orthant,
}

/// A point estimate with its standard error and the run coordinates needed
/// to reproduce it.
///
/// `wall_clock` is kept out of the serialized form so that result files from
/// identical runs are byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub quantity: Quantity,
    pub estimator: EstimatorKind,
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    /// `None` for oracle runs on a covariance without a tree.
    pub shape: Option<TreeShape>,
    pub seed: u64,
    pub shards: u32,
    pub wall_clock: f64,
    /// Natural log of the estimate, kept when the value itself underflows.
    pub log_value: Option<f64>,
    /// Standard error on the log scale (delta method).
    pub log_stderr: Option<f64>,
    pub threshold: Option<f64>,
    pub lambda: Option<f64>,
    pub tilt: Option<f64>,
    pub model: Option<String>,
    pub ess: Option<f64>,
    pub warning: Option<String>,
}

impl EstimateRecord {
    pub fn new(quantity: Quantity, estimator: EstimatorKind, value: f64, stderr: f64, samples: u64) -> Self {
        Self {
            quantity,
            estimator,
            value,
            stderr,
            samples,
            shape: None,
            seed: 0,
            shards: 1,
            wall_clock: 0.0,
            log_value: None,
            log_stderr: None,
            threshold: None,
            lambda: None,
            tilt: None,
            model: None,
            ess: None,
            warning: None,
        }
    }

    pub(crate) fn run(mut self, shape: Option<TreeShape>, seed: u64, shards: u32) -> Self {
        self.shape = shape;
        self.seed = seed;
        self.shards = shards;
        self
    }

    /// One JSON object, numbers at 17 significant digits.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub const CSV_HEADER: &'static str =
        "quantity,estimator,model,d,n,seed,shards,samples,threshold,lambda,tilt,value,stderr,log_value,log_stderr,ess";

    pub fn to_csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(sig17).unwrap_or_default();
        let (d, n) = self.shape.map(|s| (s.d().to_string(), s.n().to_string())).unwrap_or_default();
        [
            json_name(&self.quantity),
            self.estimator.to_string(),
            self.model.clone().unwrap_or_default(),
            d,
            n,
            self.seed.to_string(),
            self.shards.to_string(),
            self.samples.to_string(),
            opt(self.threshold),
            opt(self.lambda),
            opt(self.tilt),
            sig17(self.value),
            sig17(self.stderr),
            opt(self.log_value),
            opt(self.log_stderr),
            opt(self.ess),
        ]
        .join(",")
    }
}

fn json_name<T: Serialize>(x: &T) -> String {
    serde_json::to_value(x).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

/// Decimal form with 17 significant digits; `null` text for non-finite input.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_owned()
    }
}

/// Serializes as a JSON number with 17 significant digits, `null` when not
/// finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(sig17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(Serialize)]
struct ShapeOut {
    d: u32,
    n: u32,
}

impl Serialize for EstimateRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("quantity", &self.quantity)?;
        m.serialize_entry("estimator", &self.estimator)?;
        if let Some(model) = &self.model {
            m.serialize_entry("model", model)?;
        }
        m.serialize_entry("shape", &self.shape.map(|sh| ShapeOut { d: sh.d(), n: sh.n() }))?;
        m.serialize_entry("seed", &self.seed)?;
        m.serialize_entry("shards", &self.shards)?;
        m.serialize_entry("samples", &self.samples)?;
        for (key, x) in [("threshold", self.threshold), ("lambda", self.lambda), ("tilt", self.tilt)] {
            if let Some(x) = x {
                m.serialize_entry(key, &Sig17(x))?;
            }
        }
        m.serialize_entry("value", &Sig17(self.value))?;
        m.serialize_entry("stderr", &Sig17(self.stderr))?;
        for (key, x) in [("log_value", self.log_value), ("log_stderr", self.log_stderr), ("ess", self.ess)] {
            if let Some(x) = x {
                m.serialize_entry(key, &Sig17(x))?;
            }
        }
        if let Some(w) = &self.warning {
            m.serialize_entry("warning", w)?;
        }
        m.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trips_values_exactly() {
        let mut r = EstimateRecord::new(Quantity::Positivity, EstimatorKind::Conditional, 1.0 / 9.0, 3.1e-4, 1000).run(
            Some(TreeShape::new(2, 2).unwrap()),
            7,
            8,
        );
        r.log_value = Some(-(9f64).ln());
        r.wall_clock = 12.5;
        let text = r.to_json();
        assert!(!text.contains("wall_clock"));
        assert!(text.contains("1.1111111111111110e-1"), "{text}");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["value"].as_f64().unwrap(), 1.0 / 9.0);
        assert_eq!(v["log_value"].as_f64().unwrap(), -(9f64).ln());
        assert_eq!(v["shape"]["d"], 2);
        assert_eq!(v["seed"], 7);
        assert_eq!(v["estimator"], "conditional");
        assert_eq!(v["quantity"], "positivity");
    }

    #[test]
    fn non_finite_becomes_null() {
        let mut r = EstimateRecord::new(Quantity::LeftTail, EstimatorKind::Tilted, 0.0, 0.0, 100);
        r.log_value = Some(f64::NEG_INFINITY);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v["log_value"].is_null());
        assert!(v["shape"].is_null());
    }

    #[test]
    fn csv_row_has_header_width() {
        let r = EstimateRecord::new(Quantity::MaxCdf, EstimatorKind::Naive, 0.25, 0.01, 100).run(
            Some(TreeShape::new(2, 1).unwrap()),
            1,
            1,
        );
        let cols = EstimateRecord::CSV_HEADER.split(',').count();
        assert_eq!(r.to_csv_row().split(',').count(), cols);
        assert!(r.to_csv_row().starts_with("max_cdf,naive,,2,1,"));
    }
}
