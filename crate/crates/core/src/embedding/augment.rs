//! Entity-substitution prompt augmentation.
//!
//! Content entities (subjects, objects, places) are swapped for other members
//! of the same lexicon category while every other character of the prompt,
//! in particular the style descriptors, is kept verbatim.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("category `{0}` is empty")]
    EmptyCategory(String),
    #[error("category `{category}` lists `{entity}` more than once")]
    DuplicateEntity { category: String, entity: String },
    #[error("category `{0}` contains an empty entity")]
    EmptyEntity(String),
    #[error("cannot read lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed lexicon: {0}")]
    Json(#[from] serde_json::Error),
}

/// Category name to substitutable entity strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct EntityLexicon {
    categories: BTreeMap<String, Vec<String>>,
}

impl TryFrom<BTreeMap<String, Vec<String>>> for EntityLexicon {
    type Error = LexiconError;

    fn try_from(categories: BTreeMap<String, Vec<String>>) -> Result<Self, Self::Error> {
        for (name, entities) in &categories {
            if entities.is_empty() {
                return Err(LexiconError::EmptyCategory(name.clone()));
            }
            for (i, e) in entities.iter().enumerate() {
                if e.trim().is_empty() {
                    return Err(LexiconError::EmptyEntity(name.clone()));
                }
                if entities[..i].iter().any(|prev| eq_ignore_case(prev, e)) {
                    return Err(LexiconError::DuplicateEntity {
                        category: name.clone(),
                        entity: e.clone(),
                    });
                }
            }
        }
        Ok(EntityLexicon { categories })
    }
}

impl From<EntityLexicon> for BTreeMap<String, Vec<String>> {
    fn from(lex: EntityLexicon) -> Self {
        lex.categories
    }
}

impl EntityLexicon {
    pub fn new<I, C, E>(categories: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (C, Vec<E>)>,
        C: Into<String>,
        E: Into<String>,
    {
        let map = categories
            .into_iter()
            .map(|(c, es)| (c.into(), es.into_iter().map(Into::into).collect()))
            .collect::<BTreeMap<String, Vec<String>>>();
        Self::try_from(map)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn categories(&self) -> &BTreeMap<String, Vec<String>> {
        &self.categories
    }

    /// Every (category, entity) pair, longest entity first so that scanning
    /// takes the longest match. Ties keep category then listing order.
    fn entries_longest_first(&self) -> Vec<(&str, &str)> {
        let mut entries: Vec<(&str, &str)> = self
            .categories
            .iter()
            .flat_map(|(c, es)| es.iter().map(move |e| (c.as_str(), e.as_str())))
            .collect();
        entries.sort_by_key(|e| std::cmp::Reverse(e.1.chars().count()));
        entries
    }
}

/// Output of [`augment_prompts`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augmentation {
    pub prompts: Vec<String>,
    /// True when nothing could be substituted and every prompt is the input.
    pub unaugmented: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Hit<'a> {
    start: usize,
    end: usize,
    category: &'a str,
    matched: &'a str,
}

fn eq_ignore_case(a: &str, b: &str) -> bool {
    a.chars().flat_map(char::to_lowercase).eq(b.chars().flat_map(char::to_lowercase))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// If `entity` matches case-insensitively at byte offset `start` of `text`,
/// returns the byte offset just past the match.
fn match_at(text: &str, start: usize, entity: &str) -> Option<usize> {
    let mut rest = text[start..].char_indices();
    let mut end = start;
    for ec in entity.chars() {
        let (off, tc) = rest.next()?;
        if !tc.to_lowercase().eq(ec.to_lowercase()) {
            return None;
        }
        end = start + off + tc.len_utf8();
    }
    Some(end)
}

fn find_hits<'a>(text: &str, lexicon: &'a EntityLexicon) -> Vec<Hit<'a>> {
    let entries = lexicon.entries_longest_first();
    let mut hits = Vec::new();
    let mut pos = 0;
    let mut prev: Option<char> = None;
    while pos < text.len() {
        let c = text[pos..].chars().next().expect("pos is on a char boundary");
        let at_boundary = prev.is_none_or(|p| !is_word_char(p));
        if at_boundary {
            let found = entries.iter().find_map(|&(category, entity)| {
                let end = match_at(text, pos, entity)?;
                let closes = text[end..].chars().next().is_none_or(|n| !is_word_char(n));
                closes.then_some(Hit { start: pos, end, category, matched: entity })
            });
            if let Some(hit) = found {
                prev = text[..hit.end].chars().next_back();
                pos = hit.end;
                hits.push(hit);
                continue;
            }
        }
        prev = Some(c);
        pos += c.len_utf8();
    }
    hits
}

/// Produces `count` variants of `prompt`, each replacing every lexicon entity
/// occurrence with a different entity of the same category drawn uniformly.
///
/// Matching is case-insensitive, word-bounded and longest-first. Occurrences
/// whose category offers no alternative are left alone. Deterministic in `seed`.
pub fn augment_prompts(prompt: &str, lexicon: &EntityLexicon, count: usize, seed: u64) -> Augmentation {
    let hits = find_hits(prompt, lexicon);
    let alternatives: Vec<Vec<&str>> = hits
        .iter()
        .map(|h| {
            lexicon.categories[h.category]
                .iter()
                .map(String::as_str)
                .filter(|e| !eq_ignore_case(e, h.matched))
                .collect()
        })
        .collect();
    if alternatives.iter().all(Vec::is_empty) {
        return Augmentation {
            prompts: vec![prompt.to_string(); count],
            unaugmented: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prompts = (0..count)
        .map(|_| {
            let mut out = String::with_capacity(prompt.len() + 16);
            let mut cursor = 0;
            for (hit, alts) in hits.iter().zip(&alternatives) {
                if alts.is_empty() {
                    continue;
                }
                out.push_str(&prompt[cursor..hit.start]);
                out.push_str(alts[rng.random_range(0..alts.len())]);
                cursor = hit.end;
            }
            out.push_str(&prompt[cursor..]);
            out
        })
        .collect();
    Augmentation { prompts, unaugmented: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn animals() -> EntityLexicon {
        EntityLexicon::new([("animal", vec!["dog", "cat", "horse"])]).unwrap()
    }

    #[test]
    fn substitutes_a_different_animal() {
        let out = augment_prompts("a dog in misty ink-wash style", &animals(), 2, 7);
        assert!(!out.unaugmented);
        assert_eq!(out.prompts.len(), 2);
        for p in &out.prompts {
            let animal = p.strip_prefix("a ").and_then(|s| s.strip_suffix(" in misty ink-wash style"));
            assert!(matches!(animal, Some("cat") | Some("horse")), "{p}");
        }
    }

    #[test]
    fn seeded_sampler_matches_direct_draws() {
        // Same generator, drawn by hand: one draw per variant over [cat, horse].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alts = ["cat", "horse"];
        let expected: Vec<String> = (0..2)
            .map(|_| format!("a {} in misty ink-wash style", alts[rng.random_range(0..2)]))
            .collect();
        let out = augment_prompts("a dog in misty ink-wash style", &animals(), 2, 7);
        assert_eq!(out.prompts, expected);
    }

    #[test]
    fn no_hits_returns_copies() {
        let out = augment_prompts("pure style text", &animals(), 3, 1);
        assert!(out.unaugmented);
        assert_eq!(out.prompts, vec!["pure style text"; 3]);
    }

    #[test]
    fn single_entry_category_cannot_substitute() {
        let lex = EntityLexicon::new([("animal", vec!["dog"])]).unwrap();
        let out = augment_prompts("a dog at dusk", &lex, 1, 0);
        assert!(out.unaugmented);
        assert_eq!(out.prompts, vec!["a dog at dusk"]);
    }

    #[test]
    fn word_boundaries_and_case() {
        let lex = animals();
        // "dogma" and "hotdog" are not the entity; "DOG" is.
        let hits = find_hits("dogma hotdog DOG, dog.", &lex);
        let spans: Vec<_> = hits.iter().map(|h| (h.start, h.end)).collect();
        assert_eq!(spans, vec![(13, 16), (18, 21)]);
    }

    #[test]
    fn longest_match_wins() {
        let lex = EntityLexicon::new([
            ("animal", vec!["dog", "cat"]),
            ("breed", vec!["golden retriever", "poodle"]),
            ("color", vec!["golden", "silver"]),
        ])
        .unwrap();
        let out = augment_prompts("a golden retriever, watercolor", &lex, 1, 3);
        assert_eq!(out.prompts[0], "a poodle, watercolor");
    }

    #[test]
    fn every_occurrence_is_replaced() {
        let out = augment_prompts("dog and dog", &animals(), 4, 11);
        for p in out.prompts {
            assert!(!p.contains("dog"), "{p}");
            assert!(p.contains(" and "));
        }
    }

    #[test]
    fn lexicon_validation() {
        assert!(matches!(
            EntityLexicon::new([("x", Vec::<String>::new())]),
            Err(LexiconError::EmptyCategory(_))
        ));
        assert!(matches!(
            EntityLexicon::new([("x", vec!["Dog", "dog"])]),
            Err(LexiconError::DuplicateEntity { .. })
        ));
        let parsed: Result<EntityLexicon, _> = serde_json::from_str(r#"{"a": []}"#);
        assert!(parsed.is_err());
    }

    proptest::proptest! {
        #[test]
        fn characters_outside_entities_are_preserved(
            words in proptest::collection::vec(
                proptest::sample::select(vec!["dog", "cat", "misty", "ink", "a", "Horse", "in", "style,"]), 1..12),
            seed in proptest::prelude::any::<u64>(),
        ) {
            let prompt = words.join(" ");
            let lex = animals();
            let out = augment_prompts(&prompt, &lex, 2, seed);
            let again = augment_prompts(&prompt, &lex, 2, seed);
            proptest::prop_assert_eq!(&out, &again);
            let is_entity = |w: &str| ["dog", "cat", "horse"].iter().any(|e| eq_ignore_case(e, w));
            for p in &out.prompts {
                let got: Vec<&str> = p.split(' ').collect();
                proptest::prop_assert_eq!(got.len(), words.len());
                for (g, w) in got.iter().zip(&words) {
                    if is_entity(w) {
                        proptest::prop_assert!(is_entity(g) && !eq_ignore_case(g, w));
                    } else {
                        proptest::prop_assert_eq!(g, w);
                    }
                }
            }
        }
    }
}
