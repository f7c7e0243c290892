use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reads a float written by `serde_json`, which encodes non-finite values as `null`.
pub fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One measured value for one instance (and optionally one `lambda` or group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub levels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Secondary index such as `n` or the exponent slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    #[serde(deserialize_with = "nullable_f64")]
    pub ratio: f64,
    /// Instances outside the claim's hypotheses (e.g. `E_0 f` above `lambda`)
    /// are reported but not judged.
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
}

impl InstanceRecord {
    pub fn new(instance: usize, levels: u32, ratio: f64) -> Self {
        Self {
            instance,
            levels,
            lambda: None,
            group: None,
            ratio,
            flagged: false,
            values: BTreeMap::new(),
        }
    }

    pub fn lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn group(mut self, group: u32) -> Self {
        self.group = Some(group);
        self
    }

    pub fn flagged(mut self, flagged: bool) -> Self {
        self.flagged = flagged;
        self
    }

    pub fn value(mut self, name: &str, v: f64) -> Self {
        self.values.insert(name.to_string(), v);
        self
    }
}

/// The outcome of one claim over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub claim: String,
    #[serde(deserialize_with = "nullable_f64")]
    pub ceiling: f64,
    pub records: Vec<InstanceRecord>,
    #[serde(deserialize_with = "nullable_f64")]
    pub max: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub mean: f64,
    pub judged: usize,
    pub flagged: usize,
    pub violations: usize,
    pub pass: bool,
    #[serde(skip)]
    pub runtime: Duration,
}

impl BoundReport {
    pub fn new(claim: &str, ceiling: f64, records: Vec<InstanceRecord>, runtime: Duration) -> Self {
        let judged: Vec<f64> = records.iter().filter(|r| !r.flagged).map(|r| r.ratio).collect();
        let violations = judged
            .iter()
            .filter(|&&r| !(r.is_finite() && r >= 0.0 && r <= ceiling))
            .count();
        let max = judged.iter().copied().fold(0.0, f64::max);
        let mean = if judged.is_empty() {
            0.0
        } else {
            judged.iter().sum::<f64>() / judged.len() as f64
        };
        Self {
            claim: claim.to_string(),
            ceiling,
            max,
            mean,
            judged: judged.len(),
            flagged: records.len() - judged.len(),
            violations,
            pass: violations == 0,
            records,
            runtime,
        }
    }

    /// Largest judged ratio per finest level `K`.
    pub fn max_by_levels(&self) -> BTreeMap<u32, f64> {
        self.max_by(|r| Some(r.levels))
    }

    /// Largest judged ratio per group.
    pub fn max_by_group(&self) -> BTreeMap<u32, f64> {
        self.max_by(|r| r.group)
    }

    fn max_by(&self, key: impl Fn(&InstanceRecord) -> Option<u32>) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for r in self.records.iter().filter(|r| !r.flagged) {
            if let Some(k) = key(r) {
                let e = out.entry(k).or_insert(0.0f64);
                *e = e.max(r.ratio);
            }
        }
        out
    }
}

/// Ratio of the largest to the smallest value; `inf` when a value is zero
/// but not all are.
pub fn spread(values: &BTreeMap<u32, f64>) -> f64 {
    let hi = values.values().copied().fold(0.0, f64::max);
    let lo = values.values().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() || hi == 0.0 {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

const GOLDEN: &str = include_str!("../../golden/ceilings.json");

/// Per-claim ceilings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ceilings {
    pub values: BTreeMap<String, f64>,
    /// Applies to every claim when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenFile {
    /// Multiplier applied to the measured constants.
    pub factor: f64,
    pub measured: BTreeMap<String, f64>,
    pub ceilings: BTreeMap<String, f64>,
}

impl GoldenFile {
    pub fn from_measured(measured: BTreeMap<String, f64>, factor: f64) -> Self {
        let ceilings = measured.iter().map(|(k, v)| (k.clone(), v * factor)).collect();
        Self {
            factor,
            measured,
            ceilings,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("golden file: {e}")))
    }
}

impl Ceilings {
    /// Fixed ceilings for exact claims plus the frozen golden ceilings.
    pub fn defaults() -> Self {
        let mut values: BTreeMap<String, f64> = super::Claim::ALL
            .iter()
            .filter_map(|c| c.fixed_ceiling().map(|v| (c.id().to_string(), v)))
            .collect();
        let golden = GoldenFile::parse(GOLDEN).expect("embedded golden file is valid");
        values.extend(golden.ceilings);
        Self {
            values,
            global: None,
        }
    }

    pub fn get(&self, claim: &str) -> f64 {
        self.global
            .or_else(|| self.values.get(claim).copied())
            .unwrap_or(f64::INFINITY)
    }

    pub fn set(&mut self, claim: &str, v: f64) {
        self.values.insert(claim.to_string(), v);
    }

    /// Applies `ceiling=<v>` or `ceiling.<claim>=<v>`.
    pub fn apply_override(&mut self, name: &str, value: f64) -> Result<()> {
        if name == "ceiling" {
            self.global = Some(value);
            return Ok(());
        }
        match name.strip_prefix("ceiling.") {
            Some(claim) if super::Claim::from_id(claim).is_some() => {
                self.set(claim, value);
                Ok(())
            }
            _ => Err(Error::InvalidConfig(format!("unknown tolerance `{name}`"))),
        }
    }
}
