#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biasprobe_core::oracle::{cache_key, CacheRecord, Candidate, OracleConfig, ValueCache};
use biasprobe_core::report::load_series;
use biasprobe_core::{bindings, PromptTemplate};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn default_battery() -> PathBuf {
    crate_dir().join("batteries/default")
}

pub fn word_templates() -> PathBuf {
    crate_dir().join("batteries/templates")
}

pub fn data(name: &str) -> PathBuf {
    crate_dir().join("tests/data").join(name)
}

pub fn mock() -> PathBuf {
    default_battery().join("mock.json")
}

pub fn biasprobe<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_biasprobe"))
        .args(args)
        .env_remove("BIASPROBE_API_KEY")
        .output()
        .expect("spawn biasprobe")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Fills `cache_dir` with the responses a live sweep of `template` over
/// `series` would have produced, for the default model and system prompt.
pub fn seed_sweep_cache(cache_dir: &Path, template: &Path, variable: &str, target: &str, series: &Path) {
    let config = OracleConfig::default();
    let template = PromptTemplate::load(template).unwrap();
    let cache = ValueCache::open(cache_dir).unwrap();
    for pt in load_series(series).unwrap().points() {
        let prompt = template
            .render_full(&bindings([(variable, pt.x.to_string())]))
            .unwrap();
        let key = cache_key(&config.model_id, &config.system_prompt, &prompt, target);
        cache
            .insert(CacheRecord {
                key,
                prompt,
                target: target.into(),
                probability: Some(pt.p),
                raw_top_candidates: vec![Candidate {
                    token: target.into(),
                    logprob: pt.p.ln(),
                }],
                timestamp: 1_722_000_000,
                model_id: config.model_id.clone(),
                text: None,
            })
            .unwrap();
    }
}
