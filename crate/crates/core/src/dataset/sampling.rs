//! Seeded random subsetting and class-stratified train/validation splits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::index::{DatasetIndex, Lineage, SampleRecord, SubsetMode};
use crate::error::{Error, Result};

/// `floor(fraction * n)`, absorbing representation error so that e.g.
/// `0.29 * 100` yields 29.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    ((raw + 1e-9 * raw.max(1.0)).floor() as usize).min(n)
}

fn pick(samples: &[SampleRecord], positions: Vec<usize>) -> Vec<SampleRecord> {
    let mut positions = positions;
    positions.sort_unstable();
    positions.into_iter().map(|i| samples[i].clone()).collect()
}

fn positions_by_class(index: &DatasetIndex) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in index.samples().iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    by_class
}

/// Draws `floor(fraction * N)` samples without replacement. The result keeps
/// the input order of the chosen samples.
pub fn sample_subset(index: &DatasetIndex, fraction: f64, seed: u64) -> Result<DatasetIndex> {
    sample_subset_with(index, fraction, seed, SubsetMode::Uniform)
}

pub fn sample_subset_with(
    index: &DatasetIndex,
    fraction: f64,
    seed: u64,
    mode: SubsetMode,
) -> Result<DatasetIndex> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("subset fraction {fraction} not in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = match mode {
        SubsetMode::Uniform => {
            let mut order: Vec<usize> = (0..index.len()).collect();
            order.shuffle(&mut rng);
            order.truncate(fraction_count(fraction, index.len()));
            order
        }
        SubsetMode::Stratified => {
            let mut chosen = Vec::new();
            for (_, mut members) in positions_by_class(index) {
                members.shuffle(&mut rng);
                members.truncate(fraction_count(fraction, members.len()));
                chosen.extend(members);
            }
            chosen
        }
    };
    let lineage = Lineage {
        subset_fraction: Some(fraction),
        subset_mode: Some(mode),
        subset_seed: Some(seed),
        ..index.lineage().clone()
    };
    Ok(DatasetIndex::with_lineage(pick(index.samples(), chosen), lineage))
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: DatasetIndex,
    pub val: DatasetIndex,
    /// Labels of classes that had a single sample and went to `train`.
    pub singleton_classes: Vec<usize>,
}

/// Per class, `floor(train_fraction * n_c)` randomly chosen samples go to
/// training and the rest to validation. A class with one sample goes to
/// training.
pub fn stratified_split(index: &DatasetIndex, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut singleton_classes = Vec::new();
    for (label, mut members) in positions_by_class(index) {
        if members.len() == 1 {
            log::warn!("class {label} has a single sample; assigning it to the training split");
            singleton_classes.push(label);
            train.extend(members);
            continue;
        }
        members.shuffle(&mut rng);
        let n_train = fraction_count(train_fraction, members.len());
        val.extend(members.split_off(n_train));
        train.extend(members);
    }
    let lineage = |name: &str| Lineage {
        split: Some(name.to_string()),
        train_fraction: Some(train_fraction),
        split_seed: Some(seed),
        ..index.lineage().clone()
    };
    Ok(Split {
        train: DatasetIndex::with_lineage(pick(index.samples(), train), lineage("train")),
        val: DatasetIndex::with_lineage(pick(index.samples(), val), lineage("val")),
        singleton_classes,
    })
}
