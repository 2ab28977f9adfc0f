//! Answer normalization, edit distance, ANLS and soft-vote accuracy.

use crate::error::{Error, Result};

/// Lowercases, strips punctuation at both ends and collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − d / max(|pred|, |gt|)` in characters; two empty strings score 1.
pub fn nls(pred: &str, gt: &str) -> f64 {
    let longest = pred.chars().count().max(gt.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(pred, gt) as f64 / longest as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub prediction: String,
    pub ground_truths: Vec<String>,
}

impl EvalRecord {
    pub fn new<S: AsRef<str>>(prediction: &str, ground_truths: &[S]) -> Self {
        Self {
            prediction: normalize_answer(prediction),
            ground_truths: ground_truths.iter().map(|g| normalize_answer(g.as_ref())).collect(),
        }
    }

    /// Best NLS over the ground truths, before thresholding.
    pub fn best_nls(&self) -> f64 {
        self.ground_truths
            .iter()
            .map(|g| nls(&self.prediction, g))
            .fold(0.0, f64::max)
    }
}

/// Mean over records of the best NLS, zeroed when below `threshold`.
pub fn anls(records: &[EvalRecord], threshold: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::contract("anls over no records"));
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let s = r.best_nls();
            if s < threshold {
                0.0
            } else {
                s
            }
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// `min(matches / 3, 1)` against exactly ten ground truths.
pub fn vqa_accuracy<S: AsRef<str>>(pred: &str, ten_answers: &[S]) -> Result<f64> {
    if ten_answers.len() != 10 {
        return Err(Error::contract(format!(
            "soft-vote accuracy needs 10 answers, got {}",
            ten_answers.len()
        )));
    }
    let pred = normalize_answer(pred);
    let matches = ten_answers
        .iter()
        .filter(|a| normalize_answer(a.as_ref()) == pred)
        .count();
    Ok((matches as f64 / 3.0).min(1.0))
}

/// Soft-vote accuracy for ten answers, exact match against any answer otherwise.
pub fn answer_accuracy<S: AsRef<str>>(pred: &str, answers: &[S]) -> f64 {
    if answers.len() == 10 {
        return vqa_accuracy(pred, answers).expect("ten answers");
    }
    let pred = normalize_answer(pred);
    f64::from(u8::from(answers.iter().any(|a| normalize_answer(a.as_ref()) == pred)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("  New   York!! "), "new york");
        assert_eq!(normalize_answer("\"it's\""), "it's");
        assert_eq!(normalize_answer("..."), "");
    }

    #[test]
    fn edit_distance_fixtures() {
        assert_eq!(edit_distance("abc", "abc"), 0);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
    }

    #[test]
    fn nls_fixtures() {
        assert_eq!(nls("word", "word"), 1.0);
        assert!((nls("hello", "hallo") - 0.8).abs() < 1e-15);
        assert!((nls("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-15);
        assert_eq!(nls("", ""), 1.0);
    }

    #[test]
    fn anls_fixtures() {
        let exact = [EvalRecord::new("a", &["a"]), EvalRecord::new("bc", &["bc"])];
        assert_eq!(anls(&exact, 0.5).unwrap(), 1.0);
        // "abcde" vs "abxyz": NLS 0.4, below threshold
        assert_eq!(anls(&[EvalRecord::new("abcde", &["abxyz"])], 0.5).unwrap(), 0.0);
        let mixed = [
            EvalRecord::new("hello", &["hallo"]),
            EvalRecord::new("abcde", &["abxyz"]),
        ];
        assert!((anls(&mixed, 0.5).unwrap() - 0.4).abs() < 1e-15);
        assert!(anls(&[], 0.5).is_err());
    }

    #[test]
    fn best_over_ground_truths_before_truncation() {
        let r = EvalRecord::new("hello", &["zzzzz", "hallo"]);
        assert!((anls(&[r], 0.5).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn accuracy_fixtures() {
        let mut ten = vec!["no"; 10];
        assert_eq!(vqa_accuracy("yes", &ten).unwrap(), 0.0);
        ten[0] = "yes";
        ten[1] = "Yes";
        assert!((vqa_accuracy("yes", &ten).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        ten[2] = "yes.";
        assert_eq!(vqa_accuracy("yes", &ten).unwrap(), 1.0);
        ten[3] = "yes";
        assert_eq!(vqa_accuracy("yes", &ten).unwrap(), 1.0);
        assert!(vqa_accuracy("yes", &ten[..9]).is_err());
        assert_eq!(answer_accuracy("b", &["a", "b"]), 1.0);
    }

    proptest! {
        #[test]
        fn edit_distance_is_a_metric(a in "[ab]{0,6}", b in "[ab]{0,6}", c in "[ab]{0,6}") {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert_eq!(edit_distance(&a, &b) == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }

        #[test]
        fn nls_symmetric_and_bounded(a in "[a-c]{0,6}", b in "[a-c]{0,6}") {
            let s = nls(&a, &b);
            prop_assert_eq!(s, nls(&b, &a));
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn anls_monotone(preds in proptest::collection::vec("[a-c]{0,4}", 1..5), gt in "[a-c]{1,4}", k in 0usize..5) {
            let recs: Vec<EvalRecord> = preds.iter().map(|p| EvalRecord::new(p, &[gt.as_str()])).collect();
            let base = anls(&recs, 0.5).unwrap();
            let mut better = recs.clone();
            let k = k % better.len();
            better[k].prediction = better[k].ground_truths[0].clone();
            prop_assert!(anls(&better, 0.5).unwrap() >= base);
        }

        #[test]
        fn accuracy_permutation_invariant(answers in proptest::collection::vec("[ab]", 10), pred in "[ab]", rot in 0usize..10) {
            let mut rotated = answers.clone();
            rotated.rotate_left(rot);
            prop_assert_eq!(vqa_accuracy(&pred, &answers).unwrap(), vqa_accuracy(&pred, &rotated).unwrap());
        }
    }
}
