//! Stratified train/val/test assignment at event granularity: all antenna
//! views of one event land in the same split.

use crate::window::{DataError, Dataset, Result, Split};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Assigns each event a split, stratified by class with largest-remainder
/// rounding so per-class counts stay within one event of the exact quota.
pub fn assign_event_splits(
    event_labels: &[usize],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Vec<Split>> {
    let (tr, va, te) = ratios;
    if tr < 0.0 || va < 0.0 || te < 0.0 {
        return Err(DataError::Config("split ratios must be non-negative".into()));
    }
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "split ratios must sum to 1, got {}",
            tr + va + te
        )));
    }
    if event_labels.is_empty() {
        return Err(DataError::Input("cannot split an empty dataset".into()));
    }
    let classes = event_labels.iter().max().copied().unwrap_or(0) + 1;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (event, &label) in event_labels.iter().enumerate() {
        per_class[label].push(event);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Split::Train; event_labels.len()];
    for (label, events) in per_class.iter_mut().enumerate() {
        if events.is_empty() {
            continue;
        }
        if events.len() < 3 {
            return Err(DataError::Stratification(format!(
                "class {label} has only {} windows; at least 3 are required",
                events.len()
            )));
        }
        events.shuffle(&mut rng);
        let counts = largest_remainder(events.len(), [tr, va, te]);
        let mut cursor = 0;
        for (split, &count) in Split::ALL.iter().zip(&counts) {
            for &event in &events[cursor..cursor + count] {
                assignment[event] = *split;
            }
            cursor += count;
        }
    }
    Ok(assignment)
}

/// Hamilton apportionment of `n` items over three quotas; every count is
/// within one of `n * ratio`. Ties go to the earlier split.
fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(3);
    let mut assigned = 0;
    for i in 0..3 {
        counts[i] = quotas[i].floor() as usize;
        assigned += counts[i];
        remainders.push((i, quotas[i] - quotas[i].floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.into_iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Applies [`assign_event_splits`] to a dataset in place.
pub fn split_dataset(dataset: &mut Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<()> {
    let labels: Vec<usize> = (0..dataset.event_count()).map(|e| dataset.label_of_event(e)).collect();
    let assignment = assign_event_splits(&labels, ratios, seed)?;
    for (event, &split) in assignment.iter().enumerate() {
        for antenna in 0..dataset.antennas {
            dataset.splits[event * dataset.antennas + antenna] = split;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_events_per_class_split_80_10_10() {
        let labels: Vec<usize> = (0..500).map(|i| i / 100).collect();
        let splits = assign_event_splits(&labels, DEFAULT_RATIOS, 7).unwrap();
        for class in 0..5 {
            let of_class: Vec<Split> = labels
                .iter()
                .zip(&splits)
                .filter(|(&l, _)| l == class)
                .map(|(_, &s)| s)
                .collect();
            let count = |s: Split| of_class.iter().filter(|&&x| x == s).count();
            assert_eq!(count(Split::Train), 80);
            assert_eq!(count(Split::Val), 10);
            assert_eq!(count(Split::Test), 10);
        }
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let labels = vec![0, 0, 0, 1, 1, 1];
        let splits = assign_event_splits(&labels, (1.0, 0.0, 0.0), 3).unwrap();
        assert!(splits.iter().all(|&s| s == Split::Train));
    }

    #[test]
    fn tiny_class_is_a_stratification_error() {
        let labels = vec![0, 0, 0, 1, 1];
        let got = assign_event_splits(&labels, DEFAULT_RATIOS, 3);
        assert!(matches!(got, Err(DataError::Stratification(_))));
    }

    #[test]
    fn assignment_is_deterministic_per_seed() {
        let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let a = assign_event_splits(&labels, DEFAULT_RATIOS, 42).unwrap();
        let b = assign_event_splits(&labels, DEFAULT_RATIOS, 42).unwrap();
        let c = assign_event_splits(&labels, DEFAULT_RATIOS, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn counts_stay_within_one_of_quota_for_awkward_sizes() {
        for n in [7usize, 11, 13, 29] {
            let labels = vec![0; n];
            let splits = assign_event_splits(&labels, DEFAULT_RATIOS, 1).unwrap();
            let count = |s: Split| splits.iter().filter(|&&x| x == s).count() as f64;
            assert!((count(Split::Train) - 0.8 * n as f64).abs() <= 1.0);
            assert!((count(Split::Val) - 0.1 * n as f64).abs() <= 1.0);
            assert!((count(Split::Test) - 0.1 * n as f64).abs() <= 1.0);
        }
    }
}
