use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::oracle::{Oracle, Provenance};

/// Tokens allowed for a free-text answer.
pub const REPRESENTATIVENESS_MAX_TOKENS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativenessResult {
    /// Kept verbatim for manual review.
    pub response_text: String,
    pub expected_substring: String,
    /// The base-rate-correct answer appears in the response.
    pub matched: bool,
    pub provenance: Provenance,
}

pub fn run_representativeness(
    prompt: &str,
    expected_substring: &str,
    oracle: &Oracle,
) -> Result<RepresentativenessResult> {
    let response = oracle.complete_text(prompt, REPRESENTATIVENESS_MAX_TOKENS)?;
    Ok(RepresentativenessResult {
        matched: contains_ignore_case(&response.text, expected_substring),
        response_text: response.text,
        expected_substring: expected_substring.to_string(),
        provenance: oracle.provenance(response.timestamp),
    })
}

fn contains_ignore_case(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_insensitive_match() {
        assert!(contains_ignore_case("He is most likely a COP.", "cop"));
        assert!(!contains_ignore_case("A Fields medalist", "cop"));
    }
}
