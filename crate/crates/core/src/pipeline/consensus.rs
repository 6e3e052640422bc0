//! k-of-n voting over the item sets produced by repeated stochastic runs.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{Concept, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("vote threshold {threshold} must be between 1 and the number of runs ({runs})")]
    InvalidThreshold { threshold: usize, runs: usize },
}

/// Items that compare equal may still differ in surface spelling; the spelling
/// reported for an accepted item is the most frequent one, ties going to the
/// lexicographically smallest.
pub trait Surface {
    fn surface(&self) -> String;
}

impl Surface for Concept {
    fn surface(&self) -> String {
        self.label().to_string()
    }
}

impl Surface for Triple {
    fn surface(&self) -> String {
        format!("{}\u{1f}{}", self.subject().label(), self.object().label())
    }
}

impl Surface for String {
    fn surface(&self) -> String {
        self.clone()
    }
}

impl Surface for u32 {
    fn surface(&self) -> String {
        self.to_string()
    }
}

/// Run count plus per-spelling mention counts.
type Tally<T> = (usize, BTreeMap<String, (usize, T)>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Voted<T> {
    pub item: T,
    pub votes: usize,
}

/// Returns the items present in at least `threshold` of the runs, sorted by
/// item order. Duplicates inside one run count once.
pub fn consensus_vote<T>(runs: &[Vec<T>], threshold: usize) -> Result<Vec<Voted<T>>, ConsensusError>
where
    T: Ord + Clone + Surface,
{
    if threshold == 0 || threshold > runs.len() {
        return Err(ConsensusError::InvalidThreshold {
            threshold,
            runs: runs.len(),
        });
    }
    let mut tally: BTreeMap<T, Tally<T>> = BTreeMap::new();
    for run in runs {
        let distinct: BTreeSet<&T> = run.iter().collect();
        for item in distinct {
            let slot = tally.entry(item.clone()).or_default();
            slot.0 += 1;
            // all spellings of the item within this run get a mention
            for variant in run.iter().filter(|v| *v == item) {
                slot.1
                    .entry(variant.surface())
                    .or_insert_with(|| (0, variant.clone()))
                    .0 += 1;
            }
        }
    }
    Ok(tally
        .into_iter()
        .filter(|(_, (votes, _))| *votes >= threshold)
        .map(|(_, (votes, variants))| {
            let (_, (_, item)) = variants
                .into_iter()
                .max_by(|(sa, (ca, _)), (sb, (cb, _))| ca.cmp(cb).then(sb.cmp(sa)))
                .expect("tallied item has a variant");
            Voted { item, votes }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs_with(item_in: usize, n: usize) -> Vec<Vec<u32>> {
        (0..n).map(|i| if i < item_in { vec![7, 1] } else { vec![1] }).collect()
    }

    #[test]
    fn six_of_ten_boundary() {
        let accepted = consensus_vote(&runs_with(6, 10), 6).unwrap();
        assert_eq!(
            accepted,
            vec![Voted { item: 1, votes: 10 }, Voted { item: 7, votes: 6 }]
        );
        let accepted = consensus_vote(&runs_with(5, 10), 6).unwrap();
        assert_eq!(accepted, vec![Voted { item: 1, votes: 10 }]);
    }

    #[test]
    fn threshold_bounds() {
        assert_eq!(
            consensus_vote::<u32>(&runs_with(1, 3), 4),
            Err(ConsensusError::InvalidThreshold { threshold: 4, runs: 3 })
        );
        assert!(consensus_vote::<u32>(&runs_with(1, 3), 0).is_err());
        assert!(consensus_vote::<u32>(&[], 1).is_err());
    }

    #[test]
    fn duplicates_within_a_run_count_once() {
        let runs = vec![vec![3, 3, 3], vec![4]];
        assert_eq!(consensus_vote(&runs, 2).unwrap(), vec![]);
    }

    #[test]
    fn surface_spelling_is_majority_then_smallest() {
        let c = |s: &str| Concept::new(s).unwrap();
        let runs = vec![vec![c("Yoga")], vec![c("yoga")], vec![c("YOGA")], vec![c("yoga")]];
        let out = consensus_vote(&runs, 4).unwrap();
        assert_eq!(out[0].item.label(), "yoga");
        let runs = vec![vec![c("Yoga")], vec![c("yoga")]];
        let out = consensus_vote(&runs, 2).unwrap();
        assert_eq!(out[0].item.label(), "Yoga");
    }
}
