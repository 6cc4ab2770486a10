//! Seeded study-level k-fold splits with 8:1:1 train/val/test partitions.
//!
//! Studies are shuffled once and dealt into ten folds. Fold `k` tests on
//! chunk `k`, validates on chunk `k + 1 (mod 10)` and trains on the rest,
//! so every study is tested exactly once across the ten folds.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const N_FOLDS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("fold {fold} out of range (0..{N_FOLDS})")]
    FoldOutOfRange { fold: usize },
    #[error("need at least {N_FOLDS} studies for a ten-fold split, got {0}")]
    TooFew(usize),
    #[error("duplicate study id {0}")]
    Duplicate(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Assigns each id to one of ten chunks; chunk sizes differ by at most one.
pub fn fold_chunks(ids: &[String], seed: u64) -> Result<Vec<Vec<String>>, SplitError> {
    if ids.len() < N_FOLDS {
        return Err(SplitError::TooFew(ids.len()));
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(SplitError::Duplicate(w[0].clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let mut chunks = vec![Vec::new(); N_FOLDS];
    for (i, id) in sorted.into_iter().enumerate() {
        chunks[i % N_FOLDS].push(id);
    }
    for c in &mut chunks {
        c.sort();
    }
    Ok(chunks)
}

pub fn fold_split(ids: &[String], seed: u64, fold: usize) -> Result<Split, SplitError> {
    if fold >= N_FOLDS {
        return Err(SplitError::FoldOutOfRange { fold });
    }
    let chunks = fold_chunks(ids, seed)?;
    let val_idx = (fold + 1) % N_FOLDS;
    let mut train: Vec<String> = chunks
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != fold && i != val_idx)
        .flat_map(|(_, c)| c.iter().cloned())
        .collect();
    train.sort();
    Ok(Split {
        train,
        val: chunks[val_idx].clone(),
        test: chunks[fold].clone(),
    })
}

/// Writes `train.txt`, `val.txt` and `test.txt` (one id per line) into `dir`.
pub fn write_manifests(split: &Split, dir: &Path) -> Result<(), SplitError> {
    fs::create_dir_all(dir).map_err(|source| SplitError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let path = dir.join(format!("{name}.txt"));
        let mut text = ids.join("\n");
        text.push('\n');
        fs::write(&path, text).map_err(|source| SplitError::Io { path, source })?;
    }
    Ok(())
}

/// Reads an id list, skipping blank lines and `#` comments.
pub fn read_manifest(path: &Path) -> Result<Vec<String>, SplitError> {
    let text = fs::read_to_string(path).map_err(|source| SplitError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn read_manifests(dir: &Path) -> Result<Split, SplitError> {
    Ok(Split {
        train: read_manifest(&dir.join("train.txt"))?,
        val: read_manifest(&dir.join("val.txt"))?,
        test: read_manifest(&dir.join("test.txt"))?,
    })
}
