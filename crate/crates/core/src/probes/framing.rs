use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, OptionSet};
use crate::error::{Error, Result};
use crate::oracle::{Oracle, Provenance};
use crate::template::{Bindings, PromptTemplate};

/// Two framings of the same information, scored over the same options.
#[derive(Debug, Clone, PartialEq)]
pub struct FramingPair {
    pub frame_a: PromptTemplate,
    pub frame_b: PromptTemplate,
    pub bindings: Bindings,
    pub options: OptionSet,
    /// Label whose probability shift is the effect magnitude.
    pub focus_option: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramingResult {
    /// Raw option probabilities under each frame.
    pub dist_a: Distribution,
    pub dist_b: Distribution,
    pub focus_option: String,
    /// The preferred option differs between frames.
    pub flipped: bool,
    /// `|P_a(focus) - P_b(focus)|`
    pub magnitude: f64,
    pub provenance: Provenance,
}

pub fn run_framing(pair: &FramingPair, oracle: &Oracle) -> Result<FramingResult> {
    if pair.options.get(&pair.focus_option).is_none() {
        return Err(Error::InvalidProbe(format!(
            "focus option `{}` is not among the options",
            pair.focus_option
        )));
    }
    let a = oracle.option_distribution(&pair.frame_a.render_full(&pair.bindings)?, &pair.options)?;
    let b = oracle.option_distribution(&pair.frame_b.render_full(&pair.bindings)?, &pair.options)?;
    Ok(compare_frames(
        a.raw,
        b.raw,
        &pair.focus_option,
        oracle.provenance(a.timestamp.max(b.timestamp)),
    ))
}

/// Flip flag and magnitude from two raw distributions.
pub fn compare_frames(
    dist_a: Distribution,
    dist_b: Distribution,
    focus_option: &str,
    provenance: Provenance,
) -> FramingResult {
    let flipped = dist_a.argmax() != dist_b.argmax();
    let magnitude =
        (dist_a.get(focus_option).unwrap_or(0.0) - dist_b.get(focus_option).unwrap_or(0.0)).abs();
    FramingResult {
        dist_a,
        dist_b,
        focus_option: focus_option.to_string(),
        flipped,
        magnitude,
        provenance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provenance() -> Provenance {
        Provenance {
            model_id: "m".into(),
            system_prompt_sha256: String::new(),
            timestamp: 0,
        }
    }

    #[test]
    fn stock_frames_flip() {
        // Preference bars for the positive and negative stock frames.
        let a = Distribution::new([("A", 0.025), ("B", 0.9744)]).unwrap();
        let b = Distribution::new([("A", 0.9131), ("B", 0.0868)]).unwrap();
        let r = compare_frames(a, b, "B", provenance());
        assert!(r.flipped);
        assert!((r.magnitude - 0.8876).abs() < 1e-12);
    }

    #[test]
    fn identical_frames() {
        let a = Distribution::new([("A", 0.6), ("B", 0.4)]).unwrap();
        let r = compare_frames(a.clone(), a, "B", provenance());
        assert!(!r.flipped);
        assert_eq!(r.magnitude, 0.0);
    }
}
