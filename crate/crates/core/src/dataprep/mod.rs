//! Dataset construction: tabular rows to sentences, synonym augmentation,
//! stratified splits, and `label<TAB>text` output.

mod synonyms;
mod tabular;

pub use synonyms::{augment_synonyms, SynonymMap};
pub use tabular::{income_label, read_tabular_csv, row_to_sentence, TabularRow, LABEL_FIELD, TEMPLATE_FIELDS};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io;

/// Train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Per-class shuffle-split with `ratios = [train, val, test]`.
pub fn balanced_split<T: Clone>(
    records: &[T],
    label: impl Fn(&T) -> usize,
    ratios: [f64; 3],
    seed: u64,
) -> Result<Split<T>> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios {ratios:?} must be nonnegative and sum to 1"
        )));
    }
    let mut classes: Vec<usize> = records.iter().map(&label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("balanced split needs at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for c in classes {
        let mut idx: Vec<usize> = (0..records.len()).filter(|&i| label(&records[i]) == c).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
        let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
        let take = |r: &[usize]| r.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
        split.train.extend(take(&idx[..n_train]));
        split.val.extend(take(&idx[n_train..n_train + n_val]));
        split.test.extend(take(&idx[n_train + n_val..]));
    }
    split.train.shuffle(&mut rng);
    split.val.shuffle(&mut rng);
    split.test.shuffle(&mut rng);
    Ok(split)
}

/// Renders `label<TAB>text` lines.
pub fn format_dataset(records: &[(usize, String)]) -> Result<String> {
    let mut out = String::new();
    for (i, (label, text)) in records.iter().enumerate() {
        if text.contains(['\t', '\n', '\r']) {
            return Err(Error::invalid(format!(
                "record {i} contains a tab or line break"
            )));
        }
        out.push_str(&format!("{label}\t{text}\n"));
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[(usize, String)]) -> Result<()> {
    io::write_text(path, &format_dataset(records)?)
}
