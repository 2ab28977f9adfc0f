//! Keeps only candidates whose name or description mentions the query token.

use super::kb::CandidateSet;

/// Lowercased alphanumeric words of `text`.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Case-insensitive whole-word containment; a multiword needle must appear
/// as a consecutive run.
pub fn contains_whole_word(haystack: &str, needle: &str) -> bool {
    let needle = words(needle);
    if needle.is_empty() {
        return false;
    }
    words(haystack).windows(needle.len()).any(|w| w == needle.as_slice())
}

pub fn filter_candidates(token: &str, cands: &CandidateSet) -> CandidateSet {
    CandidateSet {
        query_token: cands.query_token.clone(),
        candidates: cands
            .candidates
            .iter()
            .filter(|c| contains_whole_word(&c.name, token) || contains_whole_word(&c.description, token))
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::kb::{KbEntry, KnowledgeCandidate};
    use proptest::prelude::*;

    fn set(entries: &[(&str, &str)]) -> CandidateSet {
        CandidateSet {
            query_token: "q".into(),
            candidates: entries
                .iter()
                .map(|(n, d)| {
                    KnowledgeCandidate::new(
                        &KbEntry {
                            name: (*n).into(),
                            description: (*d).into(),
                            attribute: String::new(),
                        },
                        8,
                    )
                    .unwrap()
                })
                .collect(),
        }
    }

    #[test]
    fn retains_and_drops() {
        assert_eq!(filter_candidates("york", &set(&[("New York", "city")])).len(), 1);
        assert!(filter_candidates("ericsso", &set(&[("Ericsson", "telecom company")])).is_empty());
        assert!(filter_candidates("york", &CandidateSet::default()).is_empty());
        let kept = filter_candidates("vertu", &set(&[("Nokia", "maker of vertu phones"), ("Verturi", "")]));
        assert_eq!(
            kept.candidates.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
            ["Nokia"]
        );
    }

    #[test]
    fn multiword_needles() {
        assert!(contains_whole_word("The New-York Times", "new york"));
        assert!(!contains_whole_word("york new", "new york"));
        assert!(!contains_whole_word("anything", "  "));
    }

    proptest! {
        #[test]
        fn survivors_satisfy_predicate(
            token in "[a-c]{1,3}",
            names in proptest::collection::vec(("[a-c ]{0,8}", "[a-c ]{0,8}"), 0..6),
        ) {
            let entries: Vec<(&str, &str)> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let entries: Vec<_> = entries.into_iter().filter(|(n, _)| !n.trim().is_empty()).collect();
            let s = set(&entries);
            let kept = filter_candidates(&token, &s);
            for c in &kept.candidates {
                prop_assert!(contains_whole_word(&c.name, &token) || contains_whole_word(&c.description, &token));
            }
            let expected = s.candidates.iter()
                .filter(|c| contains_whole_word(&c.name, &token) || contains_whole_word(&c.description, &token))
                .count();
            prop_assert_eq!(kept.len(), expected);
        }
    }
}
