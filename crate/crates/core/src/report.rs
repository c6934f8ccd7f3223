//! Mass reports and their JSON form. Floats are written with 17
//! significant digits; non-finite values become `null`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conformal::delta_mass;
use crate::error::Result;

/// Certification flags; `None` when a check does not apply.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub bound_2_4: Option<bool>,
    pub robin_constancy: Option<bool>,
    pub djlw_hypothesis: Option<bool>,
}

impl Flags {
    /// True when no applicable check failed.
    pub fn all_pass(&self) -> bool {
        [self.bound_2_4, self.robin_constancy, self.djlw_hypothesis]
            .iter()
            .all(|f| f.unwrap_or(true))
    }
}

/// Where the numbers came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub discretization: String,
    pub resolution: String,
    /// Modulus, mesh file or similar description of the input geometry.
    pub source: String,
    /// Content hash of the run configuration and input files.
    pub input_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    #[serde(with = "sig17")]
    pub trace: f64,
    #[serde(with = "sig17")]
    pub area: f64,
    #[serde(with = "sig17")]
    pub mass: f64,
    pub flags: Flags,
    pub provenance: Provenance,
    /// Named auxiliary quantities: margins, residuals, error bars.
    #[serde(default, with = "sig17_map")]
    pub diagnostics: BTreeMap<String, f64>,
}

impl MassReport {
    /// Report for a metric with the given trace and area; the mass follows.
    pub fn new(trace: f64, area: f64, provenance: Provenance) -> Result<Self> {
        Ok(Self {
            trace,
            area,
            mass: delta_mass(trace, area)?,
            flags: Flags::default(),
            provenance,
            diagnostics: BTreeMap::new(),
        })
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// `{:.16e}` formatting of an `f64`, the 17-significant-digit form used in
/// every output file.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

pub mod sig17 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(super::format_f64(*x)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub mod sig17_map {
    use std::collections::BTreeMap;

    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            let raw = RawValue::from_string(super::format_f64(*v)).map_err(serde::ser::Error::custom)?;
            map.serialize_entry(k, &raw)?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let m = BTreeMap::<String, Option<f64>>::deserialize(d)?;
        Ok(m.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_every_digit() {
        let prov = Provenance {
            discretization: "torus".into(),
            resolution: "256x256".into(),
            source: "tau=0+1i".into(),
            input_hash: "abc".into(),
        };
        let mut r = MassReport::new(-0.208_577_793_243_501_4, 1.0, prov)
            .unwrap()
            .with_diagnostic("margin", 0.1 + 0.2)
            .with_diagnostic("broken", f64::NAN);
        r.flags.bound_2_4 = Some(true);
        let text = r.to_json();
        assert!(text.contains("\"trace\": -2.0857779324350140e-1"));
        assert!(text.contains("\"broken\": null"));
        let back = MassReport::from_json(&text).unwrap();
        assert_eq!(back.trace, r.trace);
        assert_eq!(back.mass, r.mass);
        assert_eq!(back.diagnostics["margin"], 0.1 + 0.2);
        assert!(back.diagnostics["broken"].is_nan());
        assert!(back.flags.all_pass());
    }

    #[test]
    fn mass_follows_trace_and_area() {
        let r = MassReport::new((-1.0 - std::f64::consts::PI.ln()) / (4.0 * std::f64::consts::PI), 1.0, Provenance::default())
            .unwrap();
        assert!(r.mass.abs() < 1e-16);
    }
}
