//! Sample-quality metrics: validity, novelty, uniqueness, diversity and
//! average pipe tiles per level.

use std::collections::HashSet;

use thiserror::Error;

use super::level::GridLevel;
use crate::circuit::Circuit;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("metrics need at least one sample")]
    NoSamples,
}

pub const METRICS_CSV_HEADER: &str = "validity,novelty,uniqueness,diversity,pipe_tiles";

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// |valid| / |samples|
    pub validity: f64,
    /// |valid and not in the dataset| / |valid|
    pub novelty: f64,
    /// |distinct valid| / |samples|
    pub uniqueness: f64,
    /// Mean pairwise L1 distance of the one-hot encodings over the encoding length.
    pub diversity: f64,
    pub pipe_tiles_per_level: f64,
    /// Novelty is reported as 0 because nothing was valid.
    pub no_valid_samples: bool,
}

impl Metrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.validity, self.novelty, self.uniqueness, self.diversity, self.pipe_tiles_per_level
        )
    }
}

/// Mean pairwise normalized L1 distance between one-hot encodings.
///
/// Two one-hot blocks differ in exactly two bits when their tiles differ,
/// so the L1 distance is twice the number of differing cells.
pub fn diversity(samples: &[GridLevel]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let len = (samples[0].cells() * super::level::NUM_TILES) as f64;
    let mut total = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            let diff = samples[i]
                .tiles()
                .iter()
                .zip(samples[j].tiles())
                .filter(|(a, b)| a != b)
                .count();
            total += 2 * diff as u64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    total as f64 / pairs / len
}

/// Metrics with validity decided by `is_valid`.
pub fn metrics_with(
    samples: &[GridLevel],
    dataset: &[GridLevel],
    is_valid: impl Fn(&GridLevel) -> bool,
) -> Result<Metrics, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let n = samples.len() as f64;
    let known: HashSet<&GridLevel> = dataset.iter().collect();
    let valid: Vec<&GridLevel> = samples.iter().filter(|s| is_valid(s)).collect();
    let novel = valid.iter().filter(|s| !known.contains(**s)).count();
    let distinct: HashSet<&GridLevel> = valid.iter().copied().collect();
    let pipes: usize = samples.iter().map(GridLevel::pipe_tiles).sum();
    Ok(Metrics {
        validity: valid.len() as f64 / n,
        novelty: if valid.is_empty() {
            0.0
        } else {
            novel as f64 / valid.len() as f64
        },
        uniqueness: distinct.len() as f64 / n,
        diversity: diversity(samples),
        pipe_tiles_per_level: pipes as f64 / n,
        no_valid_samples: valid.is_empty(),
    })
}

/// Metrics with validity decided by the compiled constraint.
pub fn metrics(
    samples: &[GridLevel],
    dataset: &[GridLevel],
    constraint: &Circuit,
) -> Result<Metrics, MetricsError> {
    metrics_with(samples, dataset, |l| {
        constraint
            .check_bits(&l.encode())
            .expect("constraint arity matches the grid encoding")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::level::Tile;

    fn lvl(i: usize) -> GridLevel {
        let mut l = GridLevel::filled(2, 2, Tile::Empty);
        l.set(i / 2 % 2, i % 2, Tile::Solid);
        l
    }

    #[test]
    fn all_valid_distinct_novel() {
        let s: Vec<_> = (0..4).map(lvl).collect();
        let m = metrics_with(&s, &[], |_| true).unwrap();
        assert_eq!((m.validity, m.novelty, m.uniqueness), (1.0, 1.0, 1.0));
        // any two differ in two cells -> L1 = 4 over 24 bits
        assert!((m.diversity - 4.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn identical_samples() {
        let s = vec![lvl(0); 5];
        let m = metrics_with(&s, &[], |_| true).unwrap();
        assert!((m.uniqueness - 0.2).abs() < 1e-15);
        assert_eq!(m.diversity, 0.0);
    }

    #[test]
    fn copies_of_dataset_are_not_novel() {
        let d: Vec<_> = (0..3).map(lvl).collect();
        let m = metrics_with(&d, &d, |_| true).unwrap();
        assert_eq!(m.novelty, 0.0);
        assert!(!m.no_valid_samples);
    }

    #[test]
    fn nothing_valid_is_flagged() {
        let m = metrics_with(&[lvl(0)], &[], |_| false).unwrap();
        assert_eq!(m.novelty, 0.0);
        assert!(m.no_valid_samples);
        assert_eq!(metrics_with(&[], &[], |_| true), Err(MetricsError::NoSamples));
    }

    #[test]
    fn pipe_tiles_and_csv() {
        let l = GridLevel::parse("2 2\nLR\n[]\n").unwrap();
        let m = metrics_with(&[l.clone(), lvl(0)], &[], |_| true).unwrap();
        assert_eq!(m.pipe_tiles_per_level, 2.0);
        assert!(m.csv_row().starts_with("1.000000,1.000000,1.000000,"));
    }
}
