//! Clustering accuracy, segmentation scores and phoneme accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;

/// Largest label count handled by the exact matcher.
pub const MAX_MATCH_LABELS: usize = 10;

/// `counts[t][p]`: items with true label `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_labels(true_labels: &[usize], pred_labels: &[usize], k: usize) -> Self {
        let mut m = Self::new(k);
        for (&t, &p) in true_labels.iter().zip(pred_labels) {
            m.counts[t][p] += 1;
        }
        m
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    /// Columns reordered so predicted label `perm[t]` lines up with true label `t`.
    pub fn aligned(&self, perm: &[usize]) -> Self {
        Self {
            counts: self.counts.iter().map(|row| perm.iter().map(|&p| row[p]).collect()).collect(),
        }
    }

    /// Integer grid with true labels down the side and predicted labels across.
    pub fn render(&self) -> String {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1)
            .max(self.k().to_string().len());
        let mut out = String::new();
        let _ = write!(out, "{:>w$} |", "", w = width);
        for p in 0..self.k() {
            let _ = write!(out, " {p:>width$}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(width + 2 + self.k() * (width + 1)));
        for (t, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{t:>width$} |");
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedAccuracy {
    pub accuracy: f64,
    /// Raw confusion matrix (true x predicted).
    pub confusion: ConfusionMatrix,
    /// `permutation[t]` is the predicted label matched to true label `t`.
    pub permutation: Vec<usize>,
}

/// Accuracy under the one-to-one relabeling of predictions that maximizes
/// agreement with the true labels.
pub fn matched_accuracy(true_labels: &[usize], pred_labels: &[usize]) -> Result<MatchedAccuracy, MetricError> {
    if true_labels.len() != pred_labels.len() {
        return Err(MetricError::LengthMismatch(true_labels.len(), pred_labels.len()));
    }
    let k = true_labels.iter().chain(pred_labels).max().map_or(1, |m| m + 1);
    if k > MAX_MATCH_LABELS {
        return Err(MetricError::TooManyLabels(k));
    }
    let confusion = ConfusionMatrix::from_labels(true_labels, pred_labels, k);
    let permutation = best_assignment(&confusion.counts);
    let hits: u64 = permutation.iter().enumerate().map(|(t, &p)| confusion.counts[t][p]).sum();
    let accuracy = if true_labels.is_empty() {
        1.0
    } else {
        hits as f64 / true_labels.len() as f64
    };
    Ok(MatchedAccuracy {
        accuracy,
        confusion,
        permutation,
    })
}

/// Exact maximum-trace assignment by depth-first search over permutations,
/// pruning branches whose optimistic total cannot beat the incumbent. Ties go
/// to the lexicographically first permutation.
fn best_assignment(w: &[Vec<u64>]) -> Vec<usize> {
    let k = w.len();
    let row_max: Vec<u64> = w.iter().map(|r| r.iter().copied().max().unwrap_or(0)).collect();
    let mut suffix_bound = vec![0u64; k + 1];
    for t in (0..k).rev() {
        suffix_bound[t] = suffix_bound[t + 1] + row_max[t];
    }
    struct Search<'a> {
        w: &'a [Vec<u64>],
        bound: Vec<u64>,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Vec<usize>,
        best_score: Option<u64>,
    }
    impl Search<'_> {
        fn go(&mut self, t: usize, score: u64) {
            let k = self.w.len();
            if t == k {
                if self.best_score.is_none_or(|b| score > b) {
                    self.best_score = Some(score);
                    self.best = self.current.clone();
                }
                return;
            }
            if self.best_score.is_some_and(|b| score + self.bound[t] <= b) {
                return;
            }
            for p in 0..k {
                if !self.used[p] {
                    self.used[p] = true;
                    self.current.push(p);
                    self.go(t + 1, score + self.w[t][p]);
                    self.current.pop();
                    self.used[p] = false;
                }
            }
        }
    }
    let mut s = Search {
        w,
        bound: suffix_bound,
        used: vec![false; k],
        current: Vec::with_capacity(k),
        best: (0..k).collect(),
        best_score: None,
    };
    s.go(0, 0);
    s.best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegEvalResult {
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    pub n_tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl SegEvalResult {
    pub fn from_counts(n_tp: usize, n_fp: usize, n_fn: usize, n_tn: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(n_tp, n_tp + n_fp);
        let recall = ratio(n_tp, n_tp + n_fn);
        let f_measure = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            n_tp,
            n_fp,
            n_fn,
            n_tn,
            precision,
            recall,
            f_measure,
        }
    }

    /// Pools counts over several sentences.
    pub fn sum<'a>(results: impl IntoIterator<Item = &'a SegEvalResult>) -> Self {
        let (mut tp, mut fp, mut fnn, mut tn) = (0, 0, 0, 0);
        for r in results {
            tp += r.n_tp;
            fp += r.n_fp;
            fnn += r.n_fn;
            tn += r.n_tn;
        }
        Self::from_counts(tp, fp, fnn, tn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Match,
    Sub,
    Del,
    Ins,
}

/// Minimum-edit alignment of `a` to `b` as a list of steps. Backtrace ties
/// prefer match, then substitution, then deletion (symbol of `a` only), then
/// insertion (symbol of `b` only).
fn align(a: &[char], b: &[char]) -> Vec<Step> {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1] {
            steps.push(Step::Match);
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1 {
            steps.push(Step::Sub);
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            steps.push(Step::Del);
            i -= 1;
        } else {
            steps.push(Step::Ins);
            j -= 1;
        }
    }
    steps.reverse();
    steps
}

pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    align(&a, &b).iter().filter(|s| **s != Step::Match).count()
}

fn check_cuts(cuts: &[usize], len: usize) -> Result<(), MetricError> {
    match cuts.iter().find(|&&c| c == 0 || c >= len) {
        Some(&cut) => Err(MetricError::InvalidCut { cut, len }),
        None => Ok(()),
    }
}

/// Boundary index (in alignment columns) of each cut of one side.
fn cut_columns(steps: &[Step], cuts: &[usize], first_side: bool) -> Vec<usize> {
    let mut column_of = Vec::new();
    for (col, s) in steps.iter().enumerate() {
        let uses = match s {
            Step::Match | Step::Sub => true,
            Step::Del => first_side,
            Step::Ins => !first_side,
        };
        if uses {
            column_of.push(col + 1);
        }
    }
    let mut out: Vec<usize> = cuts.iter().map(|&c| column_of[c - 1]).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Cut-point precision, recall and F-measure of `estimated` against `correct`
/// after aligning the two strings by minimum edit distance. Each boundary
/// between aligned columns is a true positive (cut in both), false positive
/// (estimated only), false negative (correct only) or true negative.
///
/// The alignment is always computed with the lexicographically smaller
/// string first, so swapping the arguments swaps false positives and false
/// negatives exactly.
pub fn seg_eval(
    correct_cuts: &[usize],
    estimated_cuts: &[usize],
    correct_str: &str,
    estimated_str: &str,
) -> Result<SegEvalResult, MetricError> {
    let c: Vec<char> = correct_str.chars().collect();
    let e: Vec<char> = estimated_str.chars().collect();
    check_cuts(correct_cuts, c.len())?;
    check_cuts(estimated_cuts, e.len())?;
    let swapped = correct_str > estimated_str;
    let steps = if swapped { align(&e, &c) } else { align(&c, &e) };
    let correct_cols = cut_columns(&steps, correct_cuts, !swapped);
    let estimated_cols = cut_columns(&steps, estimated_cuts, swapped);
    let boundaries = steps.len().saturating_sub(1);
    let n_tp = correct_cols.iter().filter(|x| estimated_cols.binary_search(x).is_ok()).count();
    let n_fn = correct_cols.len() - n_tp;
    let n_fp = estimated_cols.len() - n_tp;
    let n_tn = boundaries - n_tp - n_fn - n_fp;
    Ok(SegEvalResult::from_counts(n_tp, n_fp, n_fn, n_tn))
}

/// `1 - edit_distance / |reference|`, floored at 0.
pub fn phoneme_accuracy(reference: &str, hypothesis: &str) -> Result<f64, MetricError> {
    let n = reference.chars().count();
    if n == 0 {
        return Err(MetricError::EmptyReference);
    }
    Ok((1.0 - edit_distance(reference, hypothesis) as f64 / n as f64).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_shifted_labels() {
        let t = [0, 1, 2, 2, 1, 0];
        assert_eq!(matched_accuracy(&t, &t).unwrap().accuracy, 1.0);
        let shifted: Vec<usize> = t.iter().map(|x| (x + 1) % 3).collect();
        let r = matched_accuracy(&t, &shifted).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.permutation, vec![1, 2, 0]);
        assert_eq!(r.confusion.aligned(&r.permutation).trace(), 6);
    }

    #[test]
    fn four_item_case() {
        let r = matched_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.confusion.total(), 4);
    }

    #[test]
    fn matching_errors() {
        assert_eq!(matched_accuracy(&[0], &[0, 1]), Err(MetricError::LengthMismatch(1, 2)));
        assert_eq!(matched_accuracy(&[11], &[0]), Err(MetricError::TooManyLabels(12)));
    }

    #[test]
    fn identical_segmentations() {
        let r = seg_eval(&[1, 3], &[1, 3], "abcd", "abcd").unwrap();
        assert_eq!((r.n_tp, r.n_fp, r.n_fn, r.n_tn), (2, 0, 0, 1));
        assert_eq!((r.precision, r.recall, r.f_measure), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_estimated_cuts() {
        let r = seg_eval(&[2], &[], "abcd", "abcd").unwrap();
        assert_eq!((r.n_tp, r.precision, r.recall, r.f_measure), (0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn cuts_follow_alignment_through_insertions() {
        // "ab/c" against "ab/xc": the inserted x shifts the estimated indices
        let r = seg_eval(&[2], &[2], "abc", "abxc").unwrap();
        assert_eq!((r.n_tp, r.n_fp, r.n_fn), (1, 0, 0));
        assert!(seg_eval(&[3], &[], "abc", "abc").is_err());
    }

    #[test]
    fn phoneme_accuracy_cases() {
        assert_eq!(phoneme_accuracy("abc", "abc").unwrap(), 1.0);
        assert_eq!(phoneme_accuracy("abc", "").unwrap(), 0.0);
        assert!((phoneme_accuracy("abc", "abd").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(phoneme_accuracy("ab", "xxxxxx").unwrap(), 0.0);
        assert_eq!(phoneme_accuracy("", "a"), Err(MetricError::EmptyReference));
    }

    #[test]
    fn render_is_aligned_grid() {
        let m = ConfusionMatrix::from_labels(&[0, 1, 1], &[0, 1, 0], 2);
        let text = m.render();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().ends_with("1 0"));
    }
}
