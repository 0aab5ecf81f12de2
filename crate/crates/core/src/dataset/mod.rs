//! Class taxonomy, dataset indexing, subsetting/splitting, image loading and
//! synthetic fixtures.

mod fixture;
mod images;
mod index;
mod sampling;
mod taxonomy;

pub use fixture::{generate_synthetic_fixture, render_cell, FixtureSpec};
pub use images::{decode_rgb, load_batch, write_normalized, ImageBatch, LoadOptions, DEFAULT_INPUT_SIZE};
pub use index::{
    parse_index, read_index, render_index, scan_dataset, write_index, DatasetIndex, Lineage, SampleRecord,
    ScanOutcome, ScanWarning, SubsetMode,
};
pub use sampling::{fraction_count, sample_subset, sample_subset_with, stratified_split, Split};
pub use taxonomy::{ClassEntry, ClassTaxonomy, CLASS_COUNT};
pub(crate) use taxonomy::line_of;
