//! Exhaustive substitution oracle for toy instances.

use crate::error::{Error, Result};
use crate::lm::TransformerModel;
use crate::vocab::PAD_ID;

pub const DEFAULT_COMBINATION_CAP: u64 = 1_000_000;

/// Distinct options per position: the original id first, then candidates
/// whose embedding row differs from every option kept so far.
fn options(model: &TransformerModel, ids: &[usize], substitutions: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    if substitutions.len() != ids.len() {
        return Err(Error::invalid(format!(
            "{} candidate lists for a sequence of length {}",
            substitutions.len(),
            ids.len()
        )));
    }
    let table = model.embedding();
    let n = table.vocab_size();
    let mut out = Vec::with_capacity(ids.len());
    for (p, (&orig, cands)) in ids.iter().zip(substitutions).enumerate() {
        let mut opts = vec![orig];
        if !cands.is_empty() && orig == PAD_ID {
            return Err(Error::invalid(format!("position {p} is padding")));
        }
        for &c in cands {
            if c == PAD_ID || c >= n {
                return Err(Error::invalid(format!("candidate id {c} at position {p} is not a word")));
            }
            if opts.iter().all(|&o| table.row(o) != table.row(c)) {
                opts.push(c);
            }
        }
        out.push(opts);
    }
    Ok(out)
}

/// Number of distinct substituted sentences, the original included.
pub fn count_combinations(model: &TransformerModel, ids: &[usize], substitutions: &[Vec<usize>]) -> Result<u64> {
    options(model, ids, substitutions)?
        .iter()
        .try_fold(1u64, |acc, o| acc.checked_mul(o.len() as u64))
        .ok_or_else(|| Error::Resource("combination count overflows u64".into()))
}

/// True iff every substitution combination keeps the unsubstituted
/// prediction.
pub fn brute_force_certify(
    model: &TransformerModel,
    ids: &[usize],
    substitutions: &[Vec<usize>],
    cap: u64,
) -> Result<bool> {
    let total = count_combinations(model, ids, substitutions)?;
    if total > cap {
        return Err(Error::Resource(format!(
            "{total} substitution combinations exceed the cap of {cap}"
        )));
    }
    let opts = options(model, ids, substitutions)?;
    let base = model.predict(ids)?;
    let mut digits = vec![0usize; ids.len()];
    let mut current = ids.to_vec();
    loop {
        if model.predict(&current)? != base {
            return Ok(false);
        }
        // Odometer increment.
        let mut p = 0;
        loop {
            if p == digits.len() {
                return Ok(true);
            }
            digits[p] += 1;
            if digits[p] < opts[p].len() {
                current[p] = opts[p][digits[p]];
                break;
            }
            digits[p] = 0;
            current[p] = opts[p][0];
            p += 1;
        }
    }
}
