//! Load sweeps over the routing policies, with CSV and summary output.

pub mod report;
pub mod sweep;

pub use report::{csv_header, emit_report, summary_lines, summary_path, ReportStats};
pub use sweep::{default_grid, percent_deviation, rb_improvement, rho_grid, run_sweep, SweepOptions, SweepRow};

use mmroute::{parse_instance, SystemInstance};

/// The three base instances shipped in `instances/`, at nominal load 1.
pub const EXPERIMENTS: [(&str, &str); 3] = [
    ("exp1", include_str!("../instances/exp1.toml")),
    ("exp2", include_str!("../instances/exp2.toml")),
    ("exp3", include_str!("../instances/exp3.toml")),
];

/// Base instance `1`, `2` or `3`.
pub fn experiment(number: usize) -> SystemInstance {
    let (_, text) = EXPERIMENTS[number - 1];
    parse_instance(text).expect("bundled instance parses")
}
