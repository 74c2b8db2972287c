use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named scalar diagnostics, ordered by name so serialization is stable.
pub type Diagnostics = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SEES-c")]
    SeesC,
    #[serde(rename = "SEES-d")]
    SeesD,
    #[serde(rename = "BBSE")]
    Bbse,
    #[serde(rename = "KLIEP")]
    Kliep,
    #[serde(rename = "DLU")]
    Dlu,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SeesC,
        Method::SeesD,
        Method::Bbse,
        Method::Kliep,
        Method::Dlu,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::SeesC => "SEES-c",
            Method::SeesD => "SEES-d",
            Method::Bbse => "BBSE",
            Method::Kliep => "KLIEP",
            Method::Dlu => "DLU",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sees-c" => Ok(Method::SeesC),
            "sees-d" => Ok(Method::SeesD),
            "bbse" => Ok(Method::Bbse),
            "kliep" => Ok(Method::Kliep),
            "dlu" => Ok(Method::Dlu),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightMetrics {
    pub mse: f64,
    pub pcc: f64,
}

/// Outcome of one estimator run. Field names are part of the report file
/// format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub method: Method,
    /// Estimated accuracy change, target minus source.
    pub delta_hat: f64,
    /// `-delta_hat`: positive when accuracy is expected to fall.
    pub accuracy_drop: f64,
    pub source_accuracy: f64,
    pub estimated_target_accuracy: f64,
    /// 0-based feature indices.
    pub selected_features: Vec<usize>,
    #[serde(default)]
    pub selected_feature_names: Vec<String>,
    pub diagnostics: Diagnostics,
    pub weight_metrics: Option<WeightMetrics>,
}

impl ShiftReport {
    pub fn new(
        method: Method,
        source_accuracy: f64,
        delta_hat: f64,
        selected_features: Vec<usize>,
        diagnostics: Diagnostics,
    ) -> Self {
        ShiftReport {
            method,
            delta_hat,
            accuracy_drop: -delta_hat,
            source_accuracy,
            estimated_target_accuracy: source_accuracy + delta_hat,
            selected_features,
            selected_feature_names: Vec::new(),
            diagnostics,
            weight_metrics: None,
        }
    }

    /// Checks the report invariants; used when reading reports back.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDataset(format!("report: {msg}")));
        if !(0.0..=1.0).contains(&self.source_accuracy) {
            return bad(format!("source accuracy {} outside [0, 1]", self.source_accuracy));
        }
        if (self.estimated_target_accuracy - (self.source_accuracy + self.delta_hat)).abs() > 1e-12 {
            return bad("estimated target accuracy is not source accuracy plus delta".into());
        }
        if (self.accuracy_drop + self.delta_hat).abs() > 1e-15 {
            return bad("accuracy drop is not the negated delta".into());
        }
        if !self.selected_features.windows(2).all(|w| w[0] < w[1]) {
            return bad("selected features are not sorted".into());
        }
        if !self.selected_feature_names.is_empty()
            && self.selected_feature_names.len() != self.selected_features.len()
        {
            return bad("feature names do not match feature indices".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_accuracy_is_consistent() {
        let r = ShiftReport::new(Method::SeesD, 0.8, -0.15, vec![0], Diagnostics::new());
        assert_eq!(r.estimated_target_accuracy, 0.8 + -0.15);
        assert_eq!(r.accuracy_drop, 0.15);
        r.validate().unwrap();
    }

    #[test]
    fn json_round_trip_validates() {
        let mut d = Diagnostics::new();
        d.insert("objective".into(), 1.5e-3);
        let r = ShiftReport::new(Method::Bbse, 0.7, 0.05, vec![], d);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"method\":\"BBSE\""));
        let back: ShiftReport = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }
}
