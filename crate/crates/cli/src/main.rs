use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use biasprobe_core::oracle::{
    estimate_cost, Backend, CostMode, OpenAiBackend, Oracle, OracleConfig, OracleGame, Provenance,
    ScriptedModel, ValueCache,
};
use biasprobe_core::probes::{
    detect_barrier, parse_range, round_number_peaks, run_battery, run_grading, run_sweep, BatteryOptions,
    GradingConfig, PeakConfig, ProbeBattery, SweepSpec, COST_GATE_CALLS, DEFAULT_BARRIER_THRESHOLD,
    DEFAULT_BARRIER_WINDOW,
};
use biasprobe_core::report::{self, export, ChartKind, ChartSpec, Format};
use biasprobe_core::{exact_shapley, sampled_shapley, Bindings, Error, OptionSet, PromptTemplate, TargetSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "biasprobe", version, about = "Shapley attribution and cognitive-bias probes for language models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Oracle configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// OpenAI-compatible base URL, e.g. https://api.openai.com/v1
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    system_prompt_file: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Answer only from the cache; a miss is an error.
    #[arg(long, global = true)]
    offline: bool,
    /// Seed for sampled attribution.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Allow runs estimated above the call threshold.
    #[arg(long, global = true)]
    confirm_cost: bool,
    /// Use a scripted mock model (JSON) instead of the endpoint.
    #[arg(long, global = true)]
    mock: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute a target token's probability to the template's players.
    Attr {
        template: PathBuf,
        #[arg(long)]
        target: String,
        /// Enumerate all coalitions (the default).
        #[arg(long, conflicts_with = "samples")]
        exact: bool,
        /// Estimate from this many sampled orderings.
        #[arg(long)]
        samples: Option<usize>,
        /// JSONL or CSV by extension; JSONL on stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Bind a template variable, `name=value`.
        #[arg(long = "bind", value_parser = parse_binding)]
        bind: Vec<(String, String)>,
    },
    /// Option preferences for the full prompt.
    Prefs {
        template: PathBuf,
        /// Comma-separated answer tokens.
        #[arg(long, value_delimiter = ',', default_value = "A,B,C,D")]
        options: Vec<String>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long = "bind", value_parser = parse_binding)]
        bind: Vec<(String, String)>,
    },
    /// Target probability across values of one integer variable.
    Sweep {
        template: PathBuf,
        /// Variable to sweep; optional when the template has exactly one.
        #[arg(long)]
        var: Option<String>,
        #[arg(long, default_value = "0:100")]
        range: String,
        #[arg(long)]
        target: String,
        /// Print the first x where the probability stays below the threshold.
        #[arg(long)]
        detect_barrier: bool,
        #[arg(long, default_value_t = DEFAULT_BARRIER_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_BARRIER_WINDOW)]
        window: usize,
        /// Series CSV (`x,p`); printed to stdout when omitted and no barrier is requested.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Marked multiples in the chart.
        #[arg(long, default_value_t = 10)]
        k: i64,
        #[arg(long = "bind", value_parser = parse_binding)]
        bind: Vec<(String, String)>,
    },
    /// Local maxima of a series CSV, split by round and other x.
    Peaks {
        series: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: i64,
        /// Neighbor radius.
        #[arg(long, default_value_t = 1)]
        window: i64,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run a probe battery and summarize bias presence per model.
    Battery {
        battery: PathBuf,
        #[arg(long, value_enum, default_value_t = SummaryFormat::Table)]
        summary: SummaryFormat,
        /// Per-probe results, JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grade items (JSONL of strings or {"text": ...}) and histogram the grades.
    Grade {
        items: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Upper bound on fresh model calls for attributing a template.
    Cost {
        template: PathBuf,
        #[arg(long)]
        samples: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SummaryFormat {
    Table,
    Json,
    Csv,
    None,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            e if e.is_oracle_failure() => 3,
            Error::MalformedTemplate { .. }
            | Error::TooManyPlayers { .. }
            | Error::UnboundVariable(_)
            | Error::PlayerCapExceeded { .. }
            | Error::TooFewPermutations { .. }
            | Error::InvalidOptions(_)
            | Error::InvalidConfig(_)
            | Error::InvalidSweep(_)
            | Error::InvalidProbe(_)
            | Error::WindowExceedsSeries { .. }
            | Error::NoPlayers => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn precondition(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn parse_binding(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    match cli.command {
        Command::Attr {
            template,
            target,
            exact: _,
            samples,
            out,
            svg,
            bind,
        } => {
            let template = PromptTemplate::load(&template)?;
            let n = template.player_count();
            let mode = match samples {
                Some(m) => CostMode::Sampled { permutations: m as u64 },
                None => CostMode::Exact,
            };
            gate_cost(estimate_cost(n, mode)?, g.confirm_cost)?;
            let oracle = build_oracle(g)?;
            let bindings: Bindings = bind.into_iter().collect();
            let game = OracleGame::new(&oracle, &template, &bindings, TargetSpec::new(target));
            let attribution = match samples {
                Some(m) => sampled_shapley(&game, m, g.seed)?,
                None => exact_shapley(&game)?,
            };
            let provenance = game.provenance();
            print_provenance(&provenance);
            if game.floored_count() > 0 {
                eprintln!("note: target missing from candidates for {} coalitions", game.floored_count());
            }
            match &out {
                Some(path) => export::save_attribution(&attribution, Some(&provenance), path)?,
                None => export::write_attribution(&attribution, Some(&provenance), Format::Jsonl, stdout())?,
            }
            if let Some(path) = &svg {
                report::emit_influence_chart(&attribution, path)?;
            }
            eprintln!("efficiency_residual={}", attribution.efficiency_residual);
        }
        Command::Prefs {
            template,
            options,
            svg,
            bind,
        } => {
            let template = PromptTemplate::load(&template)?;
            let bindings: Bindings = bind.into_iter().collect();
            let prompt = template.render_full(&bindings)?;
            let options = OptionSet::from_tokens(&options)?;
            let oracle = build_oracle(g)?;
            let pref = oracle.option_distribution(&prompt, &options)?;
            print_provenance(&oracle.provenance(pref.timestamp));
            let mut w = stdout();
            writeln!(w, "option,raw,normalized")?;
            for (raw, norm) in pref.raw.entries().iter().zip(pref.normalized.entries()) {
                writeln!(w, "{},{},{}", raw.label, raw.probability, norm.probability)?;
            }
            w.flush()?;
            if let Some(path) = &svg {
                let entries = pref.raw.entries();
                let spec = ChartSpec {
                    title: "Option preferences".into(),
                    x_labels: entries.iter().map(|e| e.label.clone()).collect(),
                    values: entries.iter().map(|e| e.probability).collect(),
                    y_range: (0.0, 1.0),
                    kind: ChartKind::Bar,
                    annotations: Vec::new(),
                };
                write_file(path, spec.render()?.as_bytes())?;
            }
        }
        Command::Sweep {
            template,
            var,
            range,
            target,
            detect_barrier: barrier,
            threshold,
            window,
            out,
            svg,
            k,
            bind,
        } => {
            let template = PromptTemplate::load(&template)?;
            let variable = match var {
                Some(v) => v,
                None => {
                    let vars = template.variables();
                    if vars.len() != 1 {
                        return Err(precondition("template needs exactly one variable, or pass --var"));
                    }
                    vars.into_iter().next().unwrap().to_string()
                }
            };
            let (start, end, step) = parse_range(&range)?;
            let spec = SweepSpec {
                template,
                variable,
                start,
                end,
                step,
                target: TargetSpec::new(target),
                bindings: bind.into_iter().collect(),
            };
            spec.validate()?;
            let oracle = build_oracle(g)?;
            let series = match run_sweep(&spec, &oracle) {
                Ok(s) => s,
                Err(Error::SweepInterrupted {
                    partial,
                    resume_at,
                    source,
                }) => {
                    if let Some(path) = &out {
                        export::save_series(&partial, path)?;
                    }
                    let mut f = Failure::from(*source);
                    f.message = format!("{}; {} points saved, resume at x={resume_at}", f.message, partial.len());
                    return Err(f);
                }
                Err(e) => return Err(e.into()),
            };
            print_provenance(&oracle.provenance(sweep_timestamp(&oracle, &spec)));
            if let Some(path) = &out {
                export::save_series(&series, path)?;
            }
            if let Some(path) = &svg {
                report::emit_sweep_chart(&series, k, path)?;
            }
            if barrier {
                match detect_barrier(&series, threshold, window)? {
                    Some(x) => println!("barrier={x}"),
                    None => println!("barrier=none"),
                }
            } else if out.is_none() {
                let mut w = stdout();
                export::write_series(&series, &mut w)?;
                w.flush()?;
            }
        }
        Command::Peaks {
            series,
            k,
            window,
            tolerance,
            svg,
        } => {
            let series = export::load_series(&series)?;
            let config = PeakConfig {
                multiple: k,
                radius: window,
                tolerance,
            };
            let report = round_number_peaks(&series, config)?;
            let peaks: Vec<String> = report.peaks.iter().map(i64::to_string).collect();
            let mut w = stdout();
            writeln!(w, "peaks={}", peaks.join(","))?;
            writeln!(w, "peak_rate_multiples={}", report.peak_rate_multiples)?;
            writeln!(w, "peak_rate_others={}", report.peak_rate_others)?;
            w.flush()?;
            if let Some(path) = &svg {
                report::emit_sweep_chart(&series, k, path)?;
            }
        }
        Command::Battery { battery, summary, out } => {
            let battery = ProbeBattery::load(&battery)?;
            for entry in &battery.entries {
                if let Some(cost) = entry.probe.exact_cost() {
                    if cost > COST_GATE_CALLS && !g.confirm_cost {
                        return Err(precondition(format!(
                            "probe `{}` needs up to {} calls (threshold {}); pass --confirm-cost",
                            entry.name,
                            thousands(cost),
                            thousands(COST_GATE_CALLS)
                        )));
                    }
                }
            }
            let oracle = build_oracle(g)?;
            let options = BatteryOptions {
                confirm_cost: g.confirm_cost,
                ..BatteryOptions::default()
            };
            let mut sink: Option<BufWriter<File>> = match &out {
                Some(path) => Some(BufWriter::new(File::create(path).map_err(|e| Error::File {
                    path: path.clone(),
                    source: e,
                })?)),
                None => None,
            };
            let report = run_battery(&battery, &oracle, &options, |result| {
                if let Some(w) = sink.as_mut() {
                    serde_json::to_writer(&mut *w, result)?;
                    w.write_all(b"\n")?;
                    w.flush()?;
                }
                if let biasprobe_core::probes::ProbeOutcome::Failed { message } = &result.outcome {
                    eprintln!("probe `{}` on {} failed: {message}", result.name, result.model_id);
                }
                Ok(())
            })?;
            let mut w = stdout();
            match summary {
                SummaryFormat::Table => write!(w, "{}", report.summary.to_table())?,
                SummaryFormat::Json => {
                    serde_json::to_writer(&mut w, &report.summary).map_err(Error::from)?;
                    writeln!(w)?;
                }
                SummaryFormat::Csv => export::write_summary_csv(&report.summary, &mut w)?,
                SummaryFormat::None => {}
            }
            w.flush()?;
            let oracle_failures = report
                .results
                .iter()
                .filter(|r| matches!(r.outcome, biasprobe_core::probes::ProbeOutcome::Failed { .. }))
                .count();
            if oracle_failures > 0 && oracle_failures == report.results.len() {
                return Err(Failure {
                    code: 3,
                    message: "every probe failed".into(),
                });
            }
        }
        Command::Grade { items, svg } => {
            let items = biasprobe_core::probes::battery::load_items(&items)?;
            let oracle = build_oracle(g)?;
            let histogram = run_grading(&items, &oracle, &GradingConfig::default())?;
            print_provenance(&histogram.provenance);
            let mut w = stdout();
            serde_json::to_writer(&mut w, &histogram).map_err(Error::from)?;
            writeln!(w)?;
            w.flush()?;
            if let Some(path) = &svg {
                let spec = ChartSpec::fitted(
                    "Grade histogram",
                    histogram.counts.keys().map(u32::to_string).collect(),
                    histogram.counts.values().map(|&c| c as f64).collect(),
                    ChartKind::Bar,
                );
                write_file(path, spec.render()?.as_bytes())?;
            }
        }
        Command::Cost { template, samples } => {
            let template = PromptTemplate::load(&template)?;
            let mode = match samples {
                Some(m) => CostMode::Sampled { permutations: m },
                None => CostMode::Exact,
            };
            let calls = estimate_cost(template.player_count(), mode)?;
            println!("players={}", template.player_count());
            println!("calls={}", thousands(calls));
            gate_cost(calls, g.confirm_cost)?;
        }
    }
    Ok(())
}

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| {
        Error::File {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn gate_cost(calls: u64, confirmed: bool) -> CliResult {
    if calls > COST_GATE_CALLS && !confirmed {
        return Err(precondition(format!(
            "estimated {} model calls exceeds {}; pass --confirm-cost to proceed",
            thousands(calls),
            thousands(COST_GATE_CALLS)
        )));
    }
    Ok(())
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn print_provenance(p: &Provenance) {
    eprintln!(
        "# model={} system_prompt_sha256={} timestamp={}",
        p.model_id, p.system_prompt_sha256, p.timestamp
    );
}

/// Latest cached timestamp among the sweep's prompts.
fn sweep_timestamp(oracle: &Oracle, spec: &SweepSpec) -> u64 {
    spec.xs()
        .filter_map(|x| {
            let mut b = spec.bindings.clone();
            b.insert(spec.variable.clone(), x.to_string());
            let prompt = spec.template.render_full(&b).ok()?;
            oracle.token_probability(&prompt, &spec.target).ok().map(|o| o.timestamp)
        })
        .max()
        .unwrap_or(0)
}

fn build_oracle(g: &Global) -> CliResult<Oracle> {
    let mut config: OracleConfig = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::File {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| precondition(format!("{}: {e}", path.display())))?
        }
        None => OracleConfig::default(),
    };
    if let Some(m) = &g.model {
        config.model_id = m.clone();
    }
    if let Some(e) = &g.endpoint {
        config.endpoint_url = e.clone();
    }
    if let Some(path) = &g.system_prompt_file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::File {
            path: path.clone(),
            source: e,
        })?;
        config.system_prompt = text.strip_suffix('\n').unwrap_or(&text).to_string();
    }
    if let Some(dir) = &g.cache_dir {
        config.cache_dir = dir.clone();
    }
    config.validate()?;

    let backend: Arc<dyn Backend> = match &g.mock {
        Some(path) => Arc::new(ScriptedModel::load(path)?),
        None => {
            let key = config.api_key();
            if key.is_none() && !g.offline {
                eprintln!("warning: ${} is not set; requests go out unauthenticated", config.api_key_env);
            }
            Arc::new(OpenAiBackend::new(&config.endpoint_url, key)?)
        }
    };
    let cache = Arc::new(ValueCache::open(&config.cache_dir)?);
    Ok(Oracle::new(config, backend, cache)?.offline(g.offline))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1024), "1,024");
        assert_eq!(thousands(65_536), "65,536");
        assert_eq!(thousands(1_048_576), "1,048,576");
    }

    #[test]
    fn bindings_parse() {
        assert_eq!(parse_binding("i=5").unwrap(), ("i".into(), "5".into()));
        assert_eq!(parse_binding("a=b=c").unwrap(), ("a".into(), "b=c".into()));
        assert!(parse_binding("nope").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
