//! Classification metrics over hard labels. A `None` prediction (failed
//! episode) is wrong for accuracy and a false negative for its gold class.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("{predictions} predictions for {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("no labels")]
    Empty,
}

fn check<A, B>(pred: &[A], gold: &[B]) -> Result<(), MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch { predictions: pred.len(), golds: gold.len() });
    }
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Percentage of exact matches.
pub fn accuracy<T: PartialEq>(pred: &[Option<T>], gold: &[T]) -> Result<f64, MetricError> {
    check(pred, gold)?;
    let hits = pred.iter().zip(gold).filter(|(p, g)| p.as_ref() == Some(*g)).count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores<T> {
    /// Percentages in the order of the `classes` argument.
    pub per_class: Vec<(T, f64)>,
    pub macro_avg: f64,
    /// Classes left out of the macro mean.
    pub excluded: Vec<T>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

fn counts<T: PartialEq>(pred: &[Option<T>], gold: &[T], c: &T) -> Counts {
    let mut k = Counts::default();
    for (p, g) in pred.iter().zip(gold) {
        let predicted = p.as_ref() == Some(c);
        match (predicted, g == c) {
            (true, true) => k.tp += 1,
            (true, false) => k.fp += 1,
            (false, true) => k.fn_ += 1,
            (false, false) => k.tn += 1,
        }
    }
    k
}

/// One-vs-rest F1 per class and their unweighted mean. A class with no
/// predicted and no gold positives scores 0.
pub fn f1_scores<T: PartialEq + Clone>(pred: &[Option<T>], gold: &[T], classes: &[T]) -> Result<ClassScores<T>, MetricError> {
    check(pred, gold)?;
    let per_class: Vec<(T, f64)> = classes
        .iter()
        .map(|c| {
            let k = counts(pred, gold, c);
            let denom = 2 * k.tp + k.fp + k.fn_;
            let f1 = if denom == 0 { 0.0 } else { 100.0 * (2 * k.tp) as f64 / denom as f64 };
            (c.clone(), f1)
        })
        .collect();
    let macro_avg = per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len().max(1) as f64;
    Ok(ClassScores { per_class, macro_avg, excluded: Vec::new() })
}

/// Area under the ROC curve by average ranks (ties count one half).
/// `None` unless both positives and negatives are present.
pub fn rank_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|k| positive[**k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest ROC-AUC with one-hot scores from hard predictions. Classes
/// absent from the gold labels (or making up all of them) are excluded
/// from the macro mean and listed in `excluded`.
pub fn roc_auc<T: PartialEq + Clone>(pred: &[Option<T>], gold: &[T], classes: &[T]) -> Result<ClassScores<T>, MetricError> {
    check(pred, gold)?;
    let mut per_class = Vec::new();
    let mut excluded = Vec::new();
    for c in classes {
        let scores: Vec<f64> = pred.iter().map(|p| if p.as_ref() == Some(c) { 1.0 } else { 0.0 }).collect();
        let positive: Vec<bool> = gold.iter().map(|g| g == c).collect();
        match rank_auc(&scores, &positive) {
            Some(a) => per_class.push((c.clone(), 100.0 * a)),
            None => excluded.push(c.clone()),
        }
    }
    let macro_avg =
        if per_class.is_empty() { 0.0 } else { per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64 };
    Ok(ClassScores { per_class, macro_avg, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn some(v: &[char]) -> Vec<Option<char>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn accuracy_cases() {
        let a = accuracy(&some(&['A', 'A', 'B']), &['A', 'B', 'B']).unwrap();
        assert_eq!(format!("{a:.2}"), "66.67");
        assert_eq!(accuracy(&some(&['A', 'B']), &['A', 'B']).unwrap(), 100.0);
        assert_eq!(accuracy(&[None, Some('A')], &['A', 'A']).unwrap(), 50.0);
        assert_eq!(accuracy::<char>(&[], &[]), Err(MetricError::Empty));
        assert!(matches!(accuracy(&some(&['A']), &['A', 'B']), Err(MetricError::LengthMismatch { .. })));
    }

    #[test]
    fn f1_cases() {
        let s = f1_scores(&some(&['A', 'A']), &['A', 'B'], &['A', 'B']).unwrap();
        assert!((s.per_class[0].1 - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(s.per_class[1].1, 0.0);
        assert_eq!(format!("{:.2}", s.macro_avg), "33.33");

        let classes: Vec<char> = "ABCDEFGH".chars().collect();
        let gold: Vec<char> = classes.iter().flat_map(|c| [*c; 5]).collect();
        let pred = vec![Some('C'); gold.len()];
        let s = f1_scores(&pred, &gold, &classes).unwrap();
        assert!((s.per_class[2].1 - 200.0 / 9.0).abs() < 1e-9);
        assert!((s.macro_avg - 200.0 / 72.0).abs() < 1e-9);
        let s = f1_scores(&some(&gold), &gold, &classes).unwrap();
        assert_eq!(s.macro_avg, 100.0);
    }

    #[test]
    fn auc_cases() {
        let s = roc_auc(&some(&['A', 'B', 'B', 'A']), &['A', 'B', 'A', 'B'], &['A', 'B']).unwrap();
        assert_eq!(s.per_class, vec![('A', 50.0), ('B', 50.0)]);
        let s = roc_auc(&some(&['A', 'B']), &['A', 'A'], &['A', 'B']).unwrap();
        assert!(s.per_class.is_empty());
        assert_eq!(s.excluded, vec!['A', 'B']);
        assert_eq!(rank_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
    }
}
