//! Declarative probe batteries and the bias-presence summary.

use std::fmt::{self, Write as _};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::framing::{run_framing, FramingPair, FramingResult};
use super::grading::{run_grading, GradingConfig, Histogram};
use super::influence::{run_anchoring, run_priming, AnchoringResult, PrimingResult};
use super::peaks::{round_number_peaks, PeakConfig, PeakReport};
use super::representativeness::{run_representativeness, RepresentativenessResult};
use super::sweep::{
    detect_barrier, parse_range, run_sweep, SweepSeries, SweepSpec, DEFAULT_BARRIER_THRESHOLD,
    DEFAULT_BARRIER_WINDOW,
};
use crate::distribution::{OptionSet, TargetSpec};
use crate::error::{Error, Result};
use crate::oracle::{estimate_cost, CostMode, Oracle, Provenance};
use crate::template::{Bindings, PromptTemplate};

/// Exact attributions above this many calls need explicit confirmation.
pub const COST_GATE_CALLS: u64 = 1024;

/// Anchor and stimulus spans count as influential at or above this rank.
pub const INFLUENCE_RANK_THRESHOLD: usize = 3;

/// Grade histograms count as round-number biased above this share of
/// multiples of 5 (the share a uniform grader would give on 1..=100).
pub const ROUND_GRADE_BASELINE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Framing,
    Anchoring,
    Priming,
    Representativeness,
    Sweep,
    Grade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    Framing,
    Anchoring,
    RoundNumber,
    Representativeness,
    Priming,
}

impl Bias {
    pub fn display_name(self) -> &'static str {
        match self {
            Bias::Framing => "Framing effect",
            Bias::Anchoring => "Anchoring effect",
            Bias::RoundNumber => "Round number bias",
            Bias::Representativeness => "Representativeness heuristic",
            Bias::Priming => "Priming effect",
        }
    }
}

impl ProbeKind {
    pub fn bias(self) -> Bias {
        match self {
            ProbeKind::Framing => Bias::Framing,
            ProbeKind::Anchoring => Bias::Anchoring,
            ProbeKind::Priming => Bias::Priming,
            ProbeKind::Representativeness => Bias::Representativeness,
            ProbeKind::Sweep | ProbeKind::Grade => Bias::RoundNumber,
        }
    }
}

/// One probe as written in a battery file. Paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntryFile {
    pub kind: ProbeKind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub template_file: Option<PathBuf>,
    /// Second frame of a framing pair.
    #[serde(default)]
    pub contrast_template_file: Option<PathBuf>,
    #[serde(default)]
    pub options: Option<OptionSet>,
    /// Framing focus label; defaults to the first option.
    #[serde(default)]
    pub focus: Option<String>,
    #[serde(default)]
    pub anchor_ordinal: Option<usize>,
    #[serde(default)]
    pub stimulus_ordinal: Option<usize>,
    #[serde(default)]
    pub expected_substring: Option<String>,
    /// `start:end[:step]`
    #[serde(default)]
    pub range: Option<String>,
    #[serde(default)]
    pub variable: Option<String>,
    #[serde(default)]
    pub target: Option<String>,
    /// Grading items: a JSONL file of strings or `{"text": ...}` objects.
    #[serde(default)]
    pub items_file: Option<PathBuf>,
    #[serde(default)]
    pub bindings: Bindings,
    /// Models to run against; empty means the oracle's configured model.
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub system_prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryFile {
    pub probes: Vec<ProbeEntryFile>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Framing(FramingPair),
    Anchoring {
        template: PromptTemplate,
        bindings: Bindings,
        anchor_ordinal: usize,
        options: OptionSet,
        target: Option<TargetSpec>,
    },
    Priming {
        template: PromptTemplate,
        bindings: Bindings,
        stimulus_ordinal: usize,
        options: OptionSet,
    },
    Representativeness {
        prompt: String,
        expected_substring: String,
    },
    Sweep(SweepSpec),
    Grade {
        items: Vec<String>,
        config: GradingConfig,
    },
}

impl Probe {
    pub fn kind(&self) -> ProbeKind {
        match self {
            Probe::Framing(_) => ProbeKind::Framing,
            Probe::Anchoring { .. } => ProbeKind::Anchoring,
            Probe::Priming { .. } => ProbeKind::Priming,
            Probe::Representativeness { .. } => ProbeKind::Representativeness,
            Probe::Sweep(_) => ProbeKind::Sweep,
            Probe::Grade { .. } => ProbeKind::Grade,
        }
    }

    /// Fresh-call upper bound for the exact attribution this probe runs, if any.
    pub fn exact_cost(&self) -> Option<u64> {
        match self {
            Probe::Anchoring { template, .. } | Probe::Priming { template, .. } => {
                estimate_cost(template.player_count(), CostMode::Exact).ok()
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryEntry {
    pub name: String,
    pub probe: Probe,
    pub models: Vec<String>,
    pub system_prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeBattery {
    pub entries: Vec<BatteryEntry>,
}

impl ProbeBattery {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let file: BatteryFile = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_file(file, base)
    }

    pub fn from_file(file: BatteryFile, base: &Path) -> Result<Self> {
        let entries = file
            .probes
            .into_iter()
            .enumerate()
            .map(|(i, e)| resolve_entry(i, e, base))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

fn resolve_entry(index: usize, entry: ProbeEntryFile, base: &Path) -> Result<BatteryEntry> {
    let name = entry
        .name
        .clone()
        .unwrap_or_else(|| format!("{index}-{}", serde_json::to_value(entry.kind).unwrap().as_str().unwrap()));
    let invalid = |what: &str| Error::InvalidProbe(format!("probe `{name}`: {what}"));
    let template = |p: &Option<PathBuf>| -> Result<PromptTemplate> {
        let p = p.as_ref().ok_or_else(|| invalid("missing template_file"))?;
        PromptTemplate::load(base.join(p))
    };
    let options = || entry.options.clone().ok_or_else(|| invalid("missing options"));
    let check_ordinal = |t: &PromptTemplate, o: Option<usize>, field: &str| -> Result<usize> {
        let o = o.ok_or_else(|| invalid(&format!("missing {field}")))?;
        if o >= t.player_count() {
            return Err(invalid(&format!(
                "{field} {o} but the template has {} players",
                t.player_count()
            )));
        }
        Ok(o)
    };

    let probe = match entry.kind {
        ProbeKind::Framing => {
            let options = options()?;
            let focus_option = match &entry.focus {
                Some(f) => f.clone(),
                None => options.iter().next().unwrap().label.clone(),
            };
            if options.get(&focus_option).is_none() {
                return Err(invalid("focus is not among the options"));
            }
            Probe::Framing(FramingPair {
                frame_a: template(&entry.template_file)?,
                frame_b: template(&entry.contrast_template_file)?,
                bindings: entry.bindings.clone(),
                options,
                focus_option,
            })
        }
        ProbeKind::Anchoring => {
            let t = template(&entry.template_file)?;
            Probe::Anchoring {
                anchor_ordinal: check_ordinal(&t, entry.anchor_ordinal, "anchor_ordinal")?,
                template: t,
                bindings: entry.bindings.clone(),
                options: options()?,
                target: entry.target.as_ref().map(TargetSpec::new),
            }
        }
        ProbeKind::Priming => {
            let t = template(&entry.template_file)?;
            Probe::Priming {
                stimulus_ordinal: check_ordinal(&t, entry.stimulus_ordinal, "stimulus_ordinal")?,
                template: t,
                bindings: entry.bindings.clone(),
                options: options()?,
            }
        }
        ProbeKind::Representativeness => Probe::Representativeness {
            prompt: template(&entry.template_file)?.render_full(&entry.bindings)?,
            expected_substring: entry
                .expected_substring
                .clone()
                .ok_or_else(|| invalid("missing expected_substring"))?,
        },
        ProbeKind::Sweep => {
            let t = template(&entry.template_file)?;
            let variable = match &entry.variable {
                Some(v) => v.clone(),
                None => {
                    let vars = t.variables();
                    if vars.len() != 1 {
                        return Err(invalid("template needs exactly one variable or an explicit `variable`"));
                    }
                    vars.into_iter().next().unwrap().to_string()
                }
            };
            let (start, end, step) = parse_range(entry.range.as_deref().unwrap_or("0:100"))?;
            let spec = SweepSpec {
                template: t,
                variable,
                start,
                end,
                step,
                target: TargetSpec::new(entry.target.clone().ok_or_else(|| invalid("missing target"))?),
                bindings: entry.bindings.clone(),
            };
            spec.validate()?;
            Probe::Sweep(spec)
        }
        ProbeKind::Grade => {
            let p = entry.items_file.as_ref().ok_or_else(|| invalid("missing items_file"))?;
            Probe::Grade {
                items: load_items(base.join(p))?,
                config: GradingConfig::default(),
            }
        }
    };
    Ok(BatteryEntry {
        name,
        probe,
        models: entry.models,
        system_prompt: entry.system_prompt,
    })
}

/// Reads grading items: one JSON string or `{"text": ...}` object per line.
pub fn load_items(path: impl AsRef<Path>) -> Result<Vec<String>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Item {
        Text(String),
        Object { text: String },
    }
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut items = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(match serde_json::from_str::<Item>(&line)? {
            Item::Text(t) | Item::Object { text: t } => t,
        });
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub series: SweepSeries,
    pub barrier: Option<i64>,
    pub peaks: PeakReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProbeOutcome {
    Framing(FramingResult),
    Anchoring(Box<AnchoringResult>),
    Priming(Box<PrimingResult>),
    Representativeness(RepresentativenessResult),
    Sweep(SweepOutcome),
    Grade(Histogram),
    /// The model gave no usable answer (no option token among its candidates).
    Refused { message: String },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub index: usize,
    pub name: String,
    pub kind: ProbeKind,
    pub bias: Bias,
    pub model_id: String,
    pub system_prompt_sha256: String,
    pub outcome: ProbeOutcome,
}

impl ProbeResult {
    pub fn provenance(&self) -> Option<&Provenance> {
        match &self.outcome {
            ProbeOutcome::Framing(r) => Some(&r.provenance),
            ProbeOutcome::Anchoring(r) => Some(&r.provenance),
            ProbeOutcome::Priming(r) => Some(&r.provenance),
            ProbeOutcome::Representativeness(r) => Some(&r.provenance),
            ProbeOutcome::Grade(r) => Some(&r.provenance),
            ProbeOutcome::Sweep(_) | ProbeOutcome::Refused { .. } | ProbeOutcome::Failed { .. } => None,
        }
    }

    /// Whether this result shows the bias it probes for.
    pub fn status(&self) -> CellStatus {
        match &self.outcome {
            ProbeOutcome::Framing(r) => CellStatus::present_if(r.flipped),
            ProbeOutcome::Anchoring(r) => CellStatus::present_if(r.anchor_rank <= INFLUENCE_RANK_THRESHOLD),
            ProbeOutcome::Priming(r) => CellStatus::present_if(r.stimulus_rank <= INFLUENCE_RANK_THRESHOLD),
            ProbeOutcome::Representativeness(r) => {
                if r.response_text.trim().is_empty() {
                    CellStatus::Refused
                } else {
                    CellStatus::present_if(!r.matched)
                }
            }
            ProbeOutcome::Sweep(s) => {
                CellStatus::present_if(s.peaks.peak_rate_multiples > s.peaks.peak_rate_others)
            }
            ProbeOutcome::Grade(h) => {
                if h.parsed == 0 {
                    CellStatus::Refused
                } else {
                    CellStatus::present_if(h.multiple_of_5_mass > ROUND_GRADE_BASELINE)
                }
            }
            ProbeOutcome::Refused { .. } => CellStatus::Refused,
            ProbeOutcome::Failed { .. } => CellStatus::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Present,
    Absent,
    Refused,
    Error,
}

impl CellStatus {
    fn present_if(present: bool) -> Self {
        if present {
            CellStatus::Present
        } else {
            CellStatus::Absent
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CellStatus::Present => "✓",
            CellStatus::Absent => "✗",
            CellStatus::Refused => "-",
            CellStatus::Error => "!",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub bias: Bias,
    pub model_id: String,
    pub status: CellStatus,
}

/// Bias-by-model presence matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatterySummary {
    pub biases: Vec<Bias>,
    pub models: Vec<String>,
    pub cells: Vec<SummaryCell>,
}

impl BatterySummary {
    pub fn get(&self, bias: Bias, model_id: &str) -> Option<CellStatus> {
        self.cells
            .iter()
            .find(|c| c.bias == bias && c.model_id == model_id)
            .map(|c| c.status)
    }

    /// Plain-text table with one row per bias and one column per model.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let first = self
            .biases
            .iter()
            .map(|b| b.display_name().len())
            .chain(["Cognitive bias".len()])
            .max()
            .unwrap_or(0);
        let widths: Vec<usize> = self.models.iter().map(|m| m.chars().count().max(1)).collect();
        let _ = write!(out, "{:<first$}", "Cognitive bias");
        for (m, w) in self.models.iter().zip(&widths) {
            let _ = write!(out, " | {m:<w$}");
        }
        out.push('\n');
        for bias in &self.biases {
            let _ = write!(out, "{:<first$}", bias.display_name());
            for (m, w) in self.models.iter().zip(&widths) {
                let symbol = self.get(*bias, m).map_or(" ", CellStatus::symbol);
                let _ = write!(out, " | {symbol:<w$}");
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for BatterySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Summary matrix as a pure function of the per-probe results.
///
/// Several results for one (bias, model) cell combine with precedence
/// present, absent, refused, error.
pub fn summarize(results: &[ProbeResult]) -> BatterySummary {
    let mut biases: Vec<Bias> = results.iter().map(|r| r.bias).collect();
    biases.sort();
    biases.dedup();
    let mut models: Vec<String> = Vec::new();
    for r in results {
        if !models.contains(&r.model_id) {
            models.push(r.model_id.clone());
        }
    }
    let mut cells = Vec::new();
    for &bias in &biases {
        for model in &models {
            let status = results
                .iter()
                .filter(|r| r.bias == bias && &r.model_id == model)
                .map(ProbeResult::status)
                .min();
            if let Some(status) = status {
                cells.push(SummaryCell {
                    bias,
                    model_id: model.clone(),
                    status,
                });
            }
        }
    }
    BatterySummary {
        biases,
        models,
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryOptions {
    /// Allow exact attributions above [`COST_GATE_CALLS`].
    pub confirm_cost: bool,
    pub peak: PeakConfig,
    pub barrier_threshold: f64,
    pub barrier_window: usize,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            confirm_cost: false,
            peak: PeakConfig::default(),
            barrier_threshold: DEFAULT_BARRIER_THRESHOLD,
            barrier_window: DEFAULT_BARRIER_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatteryReport {
    pub results: Vec<ProbeResult>,
    pub summary: BatterySummary,
}

/// Runs every entry against every requested model, in order.
///
/// Each result is passed to `sink` as soon as it is ready. A failing entry is
/// recorded and the battery continues; only a `sink` error aborts the run.
pub fn run_battery(
    battery: &ProbeBattery,
    oracle: &Oracle,
    options: &BatteryOptions,
    mut sink: impl FnMut(&ProbeResult) -> Result<()>,
) -> Result<BatteryReport> {
    let mut results = Vec::new();
    for (index, entry) in battery.entries.iter().enumerate() {
        let models: Vec<String> = if entry.models.is_empty() {
            vec![oracle.config().model_id.clone()]
        } else {
            entry.models.clone()
        };
        for model in models {
            let mut scoped = oracle.with_model(&model);
            if let Some(sp) = &entry.system_prompt {
                scoped = scoped.with_system_prompt(sp);
            }
            let outcome = match run_probe(&entry.probe, &scoped, options) {
                Ok(o) => o,
                Err(Error::AllZero) => ProbeOutcome::Refused {
                    message: "no option token among the model's candidates".into(),
                },
                Err(e) => ProbeOutcome::Failed { message: e.to_string() },
            };
            let result = ProbeResult {
                index,
                name: entry.name.clone(),
                kind: entry.probe.kind(),
                bias: entry.probe.kind().bias(),
                model_id: model,
                system_prompt_sha256: scoped.config().system_prompt_digest(),
                outcome,
            };
            sink(&result)?;
            results.push(result);
        }
    }
    let summary = summarize(&results);
    Ok(BatteryReport { results, summary })
}

fn run_probe(probe: &Probe, oracle: &Oracle, options: &BatteryOptions) -> Result<ProbeOutcome> {
    if let Some(cost) = probe.exact_cost() {
        if cost > COST_GATE_CALLS && !options.confirm_cost {
            return Err(Error::InvalidProbe(format!(
                "exact attribution needs up to {cost} calls; confirm the cost to run it"
            )));
        }
    }
    Ok(match probe {
        Probe::Framing(pair) => ProbeOutcome::Framing(run_framing(pair, oracle)?),
        Probe::Anchoring {
            template,
            bindings,
            anchor_ordinal,
            options: opts,
            target,
        } => ProbeOutcome::Anchoring(Box::new(run_anchoring(
            template,
            bindings,
            *anchor_ordinal,
            opts,
            target.as_ref(),
            oracle,
        )?)),
        Probe::Priming {
            template,
            bindings,
            stimulus_ordinal,
            options: opts,
        } => ProbeOutcome::Priming(Box::new(run_priming(
            template,
            bindings,
            *stimulus_ordinal,
            opts,
            oracle,
        )?)),
        Probe::Representativeness {
            prompt,
            expected_substring,
        } => ProbeOutcome::Representativeness(run_representativeness(prompt, expected_substring, oracle)?),
        Probe::Sweep(spec) => {
            let series = run_sweep(spec, oracle)?;
            let barrier = if series.len() >= options.barrier_window {
                detect_barrier(&series, options.barrier_threshold, options.barrier_window)?
            } else {
                None
            };
            let peaks = round_number_peaks(&series, options.peak)?;
            ProbeOutcome::Sweep(SweepOutcome {
                series,
                barrier,
                peaks,
            })
        }
        Probe::Grade { items, config } => ProbeOutcome::Grade(run_grading(items, oracle, config)?),
    })
}
