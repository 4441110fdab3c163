use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

/// 1 when every gold page was retrieved. Empty gold is trivially covered.
pub fn perfect_recall(gold: &BTreeSet<u32>, retrieved: &BTreeSet<u32>) -> u8 {
    u8::from(gold.is_subset(retrieved))
}

/// Share of retrieved pages outside the gold set; 0 for an empty retrieval.
pub fn irrelevant_pages_ratio(gold: &BTreeSet<u32>, retrieved: &BTreeSet<u32>) -> f64 {
    if retrieved.is_empty() {
        return 0.0;
    }
    retrieved.difference(gold).count() as f64 / retrieved.len() as f64
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean PR over mean IPR. Serialized as a number, or `"inf"` when no
/// irrelevant page was retrieved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio(pub f64);

impl Ratio {
    pub fn from_means(mean_pr: f64, mean_ipr: f64) -> Ratio {
        if mean_ipr == 0.0 {
            Ratio(f64::INFINITY)
        } else {
            Ratio(mean_pr / mean_ipr)
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "inf" => Ok(Ratio(f64::INFINITY)),
            serde_json::Value::Number(n) => n.as_f64().map(Ratio).ok_or_else(|| de::Error::custom("bad ratio")),
            other => Err(de::Error::custom(format!("expected a number or \"inf\", got {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u32]) -> BTreeSet<u32> {
        v.iter().copied().collect()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(perfect_recall(&set(&[2, 5]), &set(&[1, 2, 5])), 1);
        assert_eq!(perfect_recall(&set(&[2, 5]), &set(&[2])), 0);
        assert_eq!(perfect_recall(&set(&[]), &set(&[])), 1);
        assert!((irrelevant_pages_ratio(&set(&[2, 5]), &set(&[1, 2, 5])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(irrelevant_pages_ratio(&set(&[2, 5]), &set(&[5])), 0.0);
        assert_eq!(irrelevant_pages_ratio(&set(&[2]), &set(&[])), 0.0);
    }

    #[test]
    fn ratio_arithmetic_and_sentinel() {
        assert!((Ratio::from_means(0.9, 0.3).0 - 3.0).abs() < 1e-12);
        let inf = Ratio::from_means(1.0, 0.0);
        assert_eq!(serde_json::to_string(&inf).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Ratio>("\"inf\"").unwrap(), inf);
        assert_eq!(serde_json::from_str::<Ratio>("2.5").unwrap(), Ratio(2.5));
    }
}
