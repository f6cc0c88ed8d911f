//! SVG charts and tabular exports of attribution and probe results.

pub mod export;
mod format;
mod svg;

pub use export::{
    attribution_from_records, attribution_records, load_attribution, load_results, load_series,
    save_attribution, save_series, write_attribution, write_results, AttributionRecord, Format,
};
pub use format::sig6;
pub use svg::{
    emit_influence_chart, emit_sweep_chart, influence_chart, sweep_chart, ChartKind, ChartSpec,
};
