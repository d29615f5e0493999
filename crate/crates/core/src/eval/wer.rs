use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{N_CLASSES, SILENCE};

/// Substitutions, deletions, insertions and correct words of an alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub s: usize,
    pub d: usize,
    pub i: usize,
    pub c: usize,
    /// Reference words, `s + d + c`.
    pub n: usize,
    /// `(s + d + i) / n`; with an empty reference, the insertion count.
    pub wer: f64,
}

impl WerReport {
    pub fn from_counts(s: usize, d: usize, i: usize, c: usize) -> Self {
        let n = s + d + c;
        let errors = (s + d + i) as f64;
        Self {
            s,
            d,
            i,
            c,
            n,
            wer: if n > 0 { errors / n as f64 } else { errors },
        }
    }

    /// Sum of two reports, WER recomputed from the pooled counts.
    pub fn combine(&self, other: &WerReport) -> WerReport {
        Self::from_counts(self.s + other.s, self.d + other.d, self.i + other.i, self.c + other.c)
    }
}

/// Levenshtein alignment with unit costs. Among optimal alignments the
/// backtrace prefers substitution (or match), then deletion, then insertion.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> WerReport {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        cost[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            cost[i][j] = diag.min(cost[i - 1][j] + 1).min(cost[i][j - 1] + 1);
        }
    }
    let (mut s, mut d, mut ins, mut c) = (0, 0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if cost[i][j] == cost[i - 1][j - 1] + usize::from(!same) {
                if same {
                    c += 1;
                } else {
                    s += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            d += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    WerReport::from_counts(s, d, ins, c)
}

fn check(ids: &[usize]) -> Result<()> {
    match ids.iter().find(|&&c| c >= N_CLASSES) {
        Some(c) => Err(Error::UnknownLabel(format!("class id {c}"))),
        None => Ok(()),
    }
}

/// WER between two class-id sequences. "silence" entries are no-output
/// tokens and are removed before alignment.
pub fn score_wer(reference: &[usize], hypothesis: &[usize]) -> Result<WerReport> {
    check(reference)?;
    check(hypothesis)?;
    let strip = |v: &[usize]| v.iter().copied().filter(|&c| c != SILENCE).collect::<Vec<_>>();
    Ok(align(&strip(reference), &strip(hypothesis)))
}

/// Per-utterance scoring summed over utterances. `None` is a rejected
/// decision and, like "silence", emits nothing.
pub fn score_utterances(reference: &[usize], decisions: &[Option<usize>]) -> Result<WerReport> {
    if reference.len() != decisions.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} decisions", reference.len()),
            got: format!("{}", decisions.len()),
        });
    }
    let mut total = WerReport::from_counts(0, 0, 0, 0);
    for (&r, h) in reference.iter().zip(decisions) {
        let hyp: Vec<usize> = h.iter().copied().collect();
        total = total.combine(&score_wer(&[r], &hyp)?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let r = score_wer(&[9, 8], &[9]).unwrap();
        assert_eq!((r.s, r.d, r.i, r.wer), (0, 1, 0, 0.5));
        let r = align(&["a", "b", "c"], &["a", "x", "b", "c"]);
        assert_eq!((r.s, r.d, r.i), (0, 0, 1));
        assert!((r.wer - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(score_wer(&[1, 2], &[1, 2]).unwrap().wer, 0.0);
        assert!(matches!(score_wer(&[12], &[]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn tie_prefers_substitution() {
        let r = align(&[1], &[2]);
        assert_eq!((r.s, r.d, r.i), (1, 0, 0));
    }

    #[test]
    fn utterance_mapping() {
        let r = score_utterances(&[0, SILENCE, 3, 4], &[Some(0), Some(2), None, Some(SILENCE)]).unwrap();
        assert_eq!((r.s, r.d, r.i, r.c, r.n), (0, 2, 1, 1, 3));
    }
}
