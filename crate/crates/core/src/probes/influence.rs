//! Anchoring and priming: how much Shapley mass lands on one designated span.

use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, OptionSet, TargetSpec};
use crate::error::{Error, Result};
use crate::oracle::{OptionPreference, Oracle, OracleGame, Provenance};
use crate::shapley::{exact_shapley, Attribution};
use crate::template::{Bindings, PromptTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoringResult {
    /// Option preferences for the intact prompt.
    pub preference: OptionPreference,
    /// Token whose probability was attributed.
    pub target_token: String,
    pub attribution: Attribution,
    pub anchor_ordinal: usize,
    /// 1-based rank of `|phi_anchor|`.
    pub anchor_rank: usize,
    /// `|phi_anchor| / sum |phi|`
    pub anchor_share: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimingResult {
    /// Normalized option preferences.
    pub distribution: Distribution,
    pub target_token: String,
    pub attribution: Attribution,
    pub stimulus_ordinal: usize,
    pub stimulus_phi: f64,
    pub stimulus_rank: usize,
    pub provenance: Provenance,
}

struct Attributed {
    preference: OptionPreference,
    target_token: String,
    attribution: Attribution,
    provenance: Provenance,
}

fn attribute_choice(
    template: &PromptTemplate,
    bindings: &Bindings,
    player: usize,
    options: &OptionSet,
    target: Option<&TargetSpec>,
    oracle: &Oracle,
) -> Result<Attributed> {
    if player >= template.player_count() {
        return Err(Error::InvalidProbe(format!(
            "ordinal {player} but the template has {} players",
            template.player_count()
        )));
    }
    let preference = oracle.option_distribution(&template.render_full(bindings)?, options)?;
    let target = match target {
        Some(t) => t.clone(),
        None => {
            let label = preference.raw.argmax().ok_or(Error::AllZero)?;
            let option = options.get(label).expect("distribution labels come from the options");
            TargetSpec::new(option.token.clone())
        }
    };
    let game = OracleGame::new(oracle, template, bindings, target.clone());
    let attribution = exact_shapley(&game)?;
    let provenance = oracle.provenance(game.latest_timestamp().max(preference.timestamp));
    Ok(Attributed {
        preference,
        target_token: target.target_token,
        attribution,
        provenance,
    })
}

/// Exact attribution of the chosen answer (or `target`, when given) and the
/// anchor span's standing within it.
pub fn run_anchoring(
    template: &PromptTemplate,
    bindings: &Bindings,
    anchor_ordinal: usize,
    options: &OptionSet,
    target: Option<&TargetSpec>,
    oracle: &Oracle,
) -> Result<AnchoringResult> {
    let a = attribute_choice(template, bindings, anchor_ordinal, options, target, oracle)?;
    Ok(AnchoringResult {
        anchor_rank: a.attribution.rank(anchor_ordinal),
        anchor_share: a.attribution.share(anchor_ordinal),
        anchor_ordinal,
        preference: a.preference,
        target_token: a.target_token,
        attribution: a.attribution,
        provenance: a.provenance,
    })
}

/// Normalized preferences plus the stimulus span's attribution toward the
/// preferred option.
pub fn run_priming(
    template: &PromptTemplate,
    bindings: &Bindings,
    stimulus_ordinal: usize,
    options: &OptionSet,
    oracle: &Oracle,
) -> Result<PrimingResult> {
    let a = attribute_choice(template, bindings, stimulus_ordinal, options, None, oracle)?;
    Ok(PrimingResult {
        distribution: a.preference.normalized,
        stimulus_phi: a.attribution.values[stimulus_ordinal],
        stimulus_rank: a.attribution.rank(stimulus_ordinal),
        stimulus_ordinal,
        target_token: a.target_token,
        attribution: a.attribution,
        provenance: a.provenance,
    })
}
