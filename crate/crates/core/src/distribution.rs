use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-sum invariant of a normalized distribution.
pub const NORMALIZED_SUM_TOLERANCE: f64 = 1e-9;

/// The token whose first-position probability is the value of a coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Exact, case-sensitive text of the first generated token.
    pub target_token: String,
    /// Probability used when the token is missing from the returned candidates.
    #[serde(default)]
    pub floor_probability: f64,
}

impl TargetSpec {
    pub fn new(token: impl Into<String>) -> Self {
        Self {
            target_token: token.into(),
            floor_probability: 0.0,
        }
    }

    pub fn matches(&self, token: &str) -> bool {
        token == self.target_token
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: String,
    pub token: String,
}

/// Ordered answer options, e.g. `A) 50 B) 200 C) 800 D) 1200`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<OptionEntry>", into = "Vec<AnswerOption>")]
pub struct OptionSet {
    options: Vec<AnswerOption>,
}

/// Battery files may list options either as bare tokens or as
/// `{label, token}` objects.
#[derive(Deserialize)]
#[serde(untagged)]
enum OptionEntry {
    Token(String),
    Full { label: String, token: String },
}

impl TryFrom<Vec<OptionEntry>> for OptionSet {
    type Error = Error;

    fn try_from(entries: Vec<OptionEntry>) -> Result<Self> {
        OptionSet::new(entries.into_iter().map(|e| match e {
            OptionEntry::Token(t) => (t.clone(), t),
            OptionEntry::Full { label, token } => (label, token),
        }))
    }
}

impl From<OptionSet> for Vec<AnswerOption> {
    fn from(set: OptionSet) -> Self {
        set.options
    }
}

impl OptionSet {
    pub fn new<L: Into<String>, T: Into<String>>(pairs: impl IntoIterator<Item = (L, T)>) -> Result<Self> {
        let options: Vec<AnswerOption> = pairs
            .into_iter()
            .map(|(l, t)| AnswerOption {
                label: l.into(),
                token: t.into(),
            })
            .collect();
        if options.is_empty() {
            return Err(Error::InvalidOptions("no options".into()));
        }
        for (i, a) in options.iter().enumerate() {
            for b in &options[..i] {
                if a.label == b.label {
                    return Err(Error::InvalidOptions(format!("duplicate label `{}`", a.label)));
                }
                if a.token == b.token {
                    return Err(Error::InvalidOptions(format!("duplicate token `{}`", a.token)));
                }
            }
        }
        Ok(Self { options })
    }

    /// Options whose label is their answer token, e.g. `A,B,C,D`.
    pub fn from_tokens<T: AsRef<str>>(tokens: impl IntoIterator<Item = T>) -> Result<Self> {
        Self::new(tokens.into_iter().map(|t| {
            let t = t.as_ref().to_string();
            (t.clone(), t)
        }))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnswerOption> {
        self.options.iter()
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&AnswerOption> {
        self.options.iter().find(|o| o.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEntry {
    pub label: String,
    pub probability: f64,
}

/// Probabilities over labelled outcomes, in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    entries: Vec<DistributionEntry>,
    normalized: bool,
}

impl Distribution {
    /// Builds an un-normalized distribution. Every probability must lie in `[0, 1]`.
    pub fn new<L: Into<String>>(entries: impl IntoIterator<Item = (L, f64)>) -> Result<Self> {
        let entries: Vec<DistributionEntry> = entries
            .into_iter()
            .map(|(label, probability)| DistributionEntry {
                label: label.into(),
                probability,
            })
            .collect();
        for e in &entries {
            if !(0.0..=1.0).contains(&e.probability) {
                return Err(Error::InvalidDistribution(format!(
                    "{} has probability {}",
                    e.label, e.probability
                )));
            }
        }
        Ok(Self {
            entries,
            normalized: false,
        })
    }

    pub fn entries(&self) -> &[DistributionEntry] {
        &self.entries
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.probability)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }

    /// Label with the highest probability; the earliest entry wins ties.
    pub fn argmax(&self) -> Option<&str> {
        let mut best: Option<&DistributionEntry> = None;
        for e in &self.entries {
            if best.map_or(true, |b| e.probability > b.probability) {
                best = Some(e);
            }
        }
        best.map(|e| e.label.as_str())
    }

    /// Rescales to unit total, keeping order.
    pub fn normalize(&self) -> Result<Distribution> {
        let total = self.total();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::AllZero);
        }
        Ok(Distribution {
            entries: self
                .entries
                .iter()
                .map(|e| DistributionEntry {
                    label: e.label.clone(),
                    probability: (e.probability / total).min(1.0),
                })
                .collect(),
            normalized: true,
        })
    }
}

/// Free-function form of [`Distribution::normalize`].
pub fn normalize(raw: &Distribution) -> Result<Distribution> {
    raw.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn already_normalized_values_are_kept() {
        let d = Distribution::new([("A", 0.0), ("B", 0.998), ("C", 0.002), ("D", 0.0)]).unwrap();
        let n = d.normalize().unwrap();
        assert!(n.is_normalized());
        for (a, b) in d.entries().iter().zip(n.entries()) {
            assert!((a.probability - b.probability).abs() < 1e-12);
        }
        assert_eq!(n.argmax(), Some("B"));
    }

    #[test]
    fn symmetric_pair() {
        let n = normalize(&Distribution::new([("A", 0.2), ("B", 0.2)]).unwrap()).unwrap();
        assert_eq!(n.get("A"), Some(0.5));
        assert_eq!(n.get("B"), Some(0.5));
    }

    #[test]
    fn all_zero_rejected() {
        let d = Distribution::new([("A", 0.0), ("B", 0.0)]).unwrap();
        assert!(matches!(d.normalize(), Err(Error::AllZero)));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(Distribution::new([("A", 1.5)]).is_err());
        assert!(Distribution::new([("A", -0.1)]).is_err());
        assert!(Distribution::new([("A", f64::NAN)]).is_err());
    }

    #[test]
    fn option_sets() {
        let set = OptionSet::from_tokens(["A", "B", "C", "D"]).unwrap();
        assert_eq!(set.len(), 4);
        assert!(OptionSet::from_tokens(["A", "A"]).is_err());
        assert!(OptionSet::new([("A", "x"), ("B", "x")]).is_err());
        assert!(OptionSet::from_tokens(Vec::<String>::new()).is_err());
        let parsed: OptionSet =
            serde_json::from_str(r#"["A", {"label": "Stock B", "token": "B"}]"#).unwrap();
        assert_eq!(parsed.get("Stock B").unwrap().token, "B");
        assert_eq!(parsed.get("A").unwrap().token, "A");
    }

    fn dist() -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.0f64..=1.0, 1..8).prop_filter_map("needs mass", |ps| {
            let d = Distribution::new(ps.iter().enumerate().map(|(i, p)| (format!("o{i}"), *p))).ok()?;
            (d.total() > 1e-6).then_some(d)
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(d in dist()) {
            let once = d.normalize().unwrap();
            let twice = once.normalize().unwrap();
            prop_assert!((once.total() - 1.0).abs() <= NORMALIZED_SUM_TOLERANCE);
            for (a, b) in once.entries().iter().zip(twice.entries()) {
                prop_assert!((a.probability - b.probability).abs() <= 1e-12);
            }
        }

        #[test]
        fn normalize_keeps_argmax(d in dist()) {
            let n = d.normalize().unwrap();
            prop_assert_eq!(d.argmax(), n.argmax());
        }
    }
}
