//! Stratified train/validation/test split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::rng::substream;
use crate::script::Label;

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

/// Index sets into the input sample list, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Undersampled away when balancing.
    pub dropped: Vec<usize>,
}

impl Splits {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len() + self.dropped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `n` items by `ratios` using largest remainders. Ties go to the tied
/// parts in index order, starting at position `rotation` among them.
pub fn apportion(n: usize, ratios: &[f64; 3], rotation: usize) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: [usize; 3] = std::array::from_fn(|k| exact[k].floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut taken = [false; 3];
    while left > 0 {
        let best = (0..3)
            .filter(|&k| !taken[k])
            .map(|k| exact[k] - exact[k].floor())
            .fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..3)
            .filter(|&k| !taken[k] && (exact[k] - exact[k].floor() - best).abs() < 1e-9)
            .collect();
        let k = tied[rotation % tied.len()];
        counts[k] += 1;
        taken[k] = true;
        left -= 1;
    }
    counts
}

/// Stratified split of sample indices. With `balance`, the majority label is
/// undersampled to the minority count first.
pub fn split_traditional(labels: &[Label], ratios: [f64; 3], seed: u64, balance: bool) -> Result<Splits, NnError> {
    if labels.len() < 10 {
        return Err(NnError::Split(format!(
            "need at least 10 samples, got {}",
            labels.len()
        )));
    }
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(NnError::Split(format!(
            "ratios {ratios:?} must be in [0,1] and sum to 1"
        )));
    }
    let groups: Vec<Vec<usize>> = Label::ALL
        .iter()
        .map(|&l| (0..labels.len()).filter(|&i| labels[i] == l).collect())
        .collect();
    if groups.iter().any(Vec::is_empty) {
        return Err(NnError::Split("both labels must be present".into()));
    }
    let keep = groups.iter().map(Vec::len).min().unwrap_or(0);
    let mut splits = Splits {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        dropped: Vec::new(),
    };
    for (li, group) in groups.into_iter().enumerate() {
        let mut group = group;
        group.shuffle(&mut substream(seed, li as u64));
        if balance {
            splits.dropped.extend(group.drain(keep..));
        }
        let [tr, va, _] = apportion(group.len(), &ratios, li);
        splits.train.extend(&group[..tr]);
        splits.validation.extend(&group[tr..tr + va]);
        splits.test.extend(&group[tr + va..]);
    }
    for part in [
        &mut splits.train,
        &mut splits.validation,
        &mut splits.test,
        &mut splits.dropped,
    ] {
        part.sort_unstable();
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(benign: usize, malicious: usize) -> Vec<Label> {
        let mut v = vec![Label::Benign; benign];
        v.extend(vec![Label::Malicious; malicious]);
        v
    }

    #[test]
    fn hundred_balanced_samples() {
        assert_eq!(apportion(50, &DEFAULT_RATIOS, 0), [35, 8, 7]);
        assert_eq!(apportion(50, &DEFAULT_RATIOS, 1), [35, 7, 8]);
        let s = split_traditional(&labels(50, 50), DEFAULT_RATIOS, 3, false).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 15, 15));
    }

    #[test]
    fn balance_undersamples_majority() {
        let l = labels(80, 20);
        let s = split_traditional(&l, DEFAULT_RATIOS, 1, true).unwrap();
        assert_eq!(s.dropped.len(), 60);
        assert!(s.dropped.iter().all(|&i| l[i] == Label::Benign));
        let kept = s.train.len() + s.validation.len() + s.test.len();
        assert_eq!(kept, 40);
    }

    #[test]
    fn errors() {
        assert!(split_traditional(&labels(5, 4), DEFAULT_RATIOS, 1, false).is_err());
        assert!(split_traditional(&labels(20, 0), DEFAULT_RATIOS, 1, false).is_err());
        assert!(split_traditional(&labels(10, 10), [0.5, 0.5, 0.5], 1, false).is_err());
    }
}
