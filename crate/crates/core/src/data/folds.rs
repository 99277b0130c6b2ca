use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeedStreams;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

fn partition(ids: &[String], parts: usize) -> Vec<Vec<String>> {
    let n = ids.len();
    (0..parts)
        .map(|i| ids[i * n / parts..(i + 1) * n / parts].to_vec())
        .collect()
}

fn folds_from_chunks(chunks: &[Vec<String>], first_index: usize) -> Vec<Fold> {
    (0..chunks.len())
        .map(|i| Fold {
            index: first_index + i,
            val: chunks[i].clone(),
            train: chunks
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, c)| c.iter().cloned())
                .collect(),
        })
        .collect()
}

/// Video-level k-fold assignment.
///
/// Ids are sorted, then shuffled with the seed, then cut into `k` near-equal
/// validation chunks. With an `official` (train, val) split, fold 0 is exactly
/// that split and folds `1..k` are a `(k-1)`-way partition of all listed videos.
pub fn kfold_split(
    ids: &[String],
    k: usize,
    seed: u64,
    official: Option<(&[String], &[String])>,
) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut pool: Vec<String> = match official {
        Some((train, val)) => train.iter().chain(val).cloned().collect(),
        None => ids.to_vec(),
    };
    pool.sort();
    pool.dedup();
    let cv_folds = if official.is_some() { k - 1 } else { k };
    if pool.len() < cv_folds {
        return Err(Error::Config(format!(
            "{} videos cannot fill {cv_folds} folds",
            pool.len()
        )));
    }
    pool.shuffle(&mut SeedStreams::new(seed).stream("folds"));
    let chunks = partition(&pool, cv_folds);
    Ok(match official {
        Some((train, val)) => {
            let mut folds = vec![Fold {
                index: 0,
                train: train.to_vec(),
                val: val.to_vec(),
            }];
            folds.extend(folds_from_chunks(&chunks, 1));
            folds
        }
        None => folds_from_chunks(&chunks, 0),
    })
}
