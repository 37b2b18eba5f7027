//! Experiment orchestration: Korn-quotient batteries, the slit-square
//! dichotomy, admissibility checks, and report generation.

mod experiments;
mod report;

pub use experiments::{
    battery_quotients, condition_check, cube_tree_weights, field_battery, field_by_name,
    john_tau_limit, korn_quotient, slit_dichotomy, ConditionPoint, DichotomySample, KornMode,
    KornParams, KornResult,
};
pub use report::{
    fmt_f64, run_report, svg_line_plot, write_csv, DichotomyConfig, DomainSummary, KornConstant,
    KornRow, ReportConfig, ReportSummary, Series,
};
