//! Span micro-F1, the split × support seed × k protocol, the label-count ×
//! verbalization grid and report files.

mod grid;
mod metrics;
mod protocol;
mod report;

pub use grid::{validation_grid, GridCell, GridConfig};
pub use metrics::{micro_f1, F1Score};
pub use protocol::{
    aggregate, evaluate, mean_std, run_protocol, KSummary, ProtocolConfig, ProtocolOutput, ProtocolSplit, RunResult,
    SkippedCell,
};
pub use report::{
    emit_grid_report, emit_report, grid_markdown, grid_svg, markdown_table, read_report_csv, read_report_json,
    read_results_jsonl, write_results_jsonl, ReportFormat,
};
