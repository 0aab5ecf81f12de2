//! Run manifests, run-directory layout and results tables.

mod manifest;
mod run_dir;
mod table;

pub use manifest::{append_checkpoint, read_manifest, write_manifest, RunManifest, SPLIT_RULE};
pub use run_dir::RunDir;
pub use table::{
    parse_report_struct, parse_report_table, reference_results, render_report, render_report_struct,
    write_reports, TableRow,
};
