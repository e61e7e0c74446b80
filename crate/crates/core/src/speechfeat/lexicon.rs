//! Pronunciation lexicon and cohort-model statistics.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub pronunciation: Vec<String>,
    pub count: u64,
}

/// Words with pronunciations and corpus counts, keyed by spelling.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, LexEntry>,
    total_count: u64,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a word.
    pub fn insert(&mut self, word: &str, pronunciation: Vec<String>, count: u64) -> Result<()> {
        if count == 0 {
            return Err(invalid(format!("count of `{word}` must be at least 1")));
        }
        if pronunciation.is_empty() {
            return Err(invalid(format!("`{word}` has an empty pronunciation")));
        }
        if let Some(old) = self.entries.insert(word.to_string(), LexEntry { pronunciation, count }) {
            self.total_count -= old.count;
        }
        self.total_count += count;
        Ok(())
    }

    pub fn from_entries<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [&'a str], u64)>,
    {
        let mut lex = Self::new();
        for (w, p, c) in entries {
            lex.insert(w, p.iter().map(|s| s.to_string()).collect(), c)?;
        }
        Ok(lex)
    }

    pub fn get(&self, word: &str) -> Option<&LexEntry> {
        self.entries.get(word)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &LexEntry)> {
        self.entries.iter().map(|(w, e)| (w.as_str(), e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    /// Tab-separated `word`, space-separated phonemes, `count`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (word, e) in &self.entries {
            writeln!(w, "{word}\t{}\t{}", e.pronunciation.join(" "), e.count)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(r: R) -> Result<Self> {
        let mut lex = Self::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Format(format!("lexicon line {}: expected 3 columns", lineno + 1)));
            }
            let count = cols[2]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::Format(format!("lexicon line {}: {e}", lineno + 1)))?;
            let pron = cols[1].split_whitespace().map(str::to_string).collect();
            lex.insert(cols[0], pron, count)?;
        }
        Ok(lex)
    }
}

/// Surprisal of a phoneme given its within-word prefix, and the entropy of
/// the cohort that remains after hearing it. Both in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhonemeStats {
    pub surprisal: f64,
    pub entropy: f64,
}

#[derive(Debug, Default, Clone)]
struct Node {
    children: BTreeMap<String, usize>,
    mass: u64,
    // sum over words below this node of count * log2(count)
    count_log_count: f64,
}

/// Prefix tree over pronunciations. Each node carries the cohort mass of
/// its prefix, which makes per-phoneme statistics O(word length).
#[derive(Debug, Clone)]
pub struct CohortModel<'a> {
    lexicon: &'a Lexicon,
    nodes: Vec<Node>,
}

impl<'a> CohortModel<'a> {
    pub fn new(lexicon: &'a Lexicon) -> Self {
        let mut nodes = vec![Node::default()];
        for e in lexicon.entries.values() {
            let c = e.count as f64;
            let clc = c * c.log2();
            let mut at = 0;
            nodes[0].mass += e.count;
            nodes[0].count_log_count += clc;
            for p in &e.pronunciation {
                at = match nodes[at].children.get(p) {
                    Some(&next) => next,
                    None => {
                        nodes.push(Node::default());
                        let id = nodes.len() - 1;
                        nodes[at].children.insert(p.clone(), id);
                        id
                    }
                };
                nodes[at].mass += e.count;
                nodes[at].count_log_count += clc;
            }
        }
        Self { lexicon, nodes }
    }

    fn entropy(node: &Node) -> f64 {
        let m = node.mass as f64;
        // -sum q log2 q with q = c / m  ==  log2 m - (sum c log2 c) / m
        (m.log2() - node.count_log_count / m).max(0.0)
    }

    /// Per-phoneme statistics of `word` under the cohort model.
    pub fn stats(&self, word: &str) -> Result<Vec<PhonemeStats>> {
        let entry = self.lexicon.get(word).ok_or_else(|| Error::UnknownWord(word.to_string()))?;
        let mut at = 0;
        let mut out = Vec::with_capacity(entry.pronunciation.len());
        for p in &entry.pronunciation {
            let prev_mass = self.nodes[at].mass;
            let next = *self.nodes[at]
                .children
                .get(p)
                .ok_or_else(|| Error::Numerical(format!("pronunciation of `{word}` missing from cohort tree")))?;
            let node = &self.nodes[next];
            if prev_mass == 0 || node.mass == 0 {
                return Err(Error::Numerical(format!("zero cohort mass while reading `{word}`")));
            }
            out.push(PhonemeStats {
                surprisal: (prev_mass as f64 / node.mass as f64).log2(),
                entropy: Self::entropy(node),
            });
            at = next;
        }
        Ok(out)
    }
}

/// Phoneme surprisal and cohort entropy for each phoneme of `word`.
///
/// The cohort after a prefix is every lexicon word whose pronunciation
/// starts with it, weighted by count. Surprisal of phoneme `i` is
/// `-log2(mass(prefix + p_i) / mass(prefix))`.
pub fn cohort_stats(lexicon: &Lexicon, word: &str) -> Result<Vec<PhonemeStats>> {
    CohortModel::new(lexicon).stats(word)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Lexicon {
        Lexicon::from_entries([
            ("cat", &["k", "a", "t"][..], 2),
            ("cap", &["k", "a", "p"][..], 1),
            ("dog", &["d", "o", "g"][..], 1),
        ])
        .unwrap()
    }

    #[test]
    fn hand_counted_cohort() {
        let s = cohort_stats(&toy(), "cat").unwrap();
        assert!((s[0].surprisal - (4.0f64 / 3.0).log2()).abs() < 1e-12);
        assert!(s[1].surprisal.abs() < 1e-12);
        assert!((s[2].surprisal - 0.5849625007211562).abs() < 1e-12);
        let h = -(2.0 / 3.0 * (2.0f64 / 3.0).log2() + 1.0 / 3.0 * (1.0f64 / 3.0).log2());
        assert!((s[0].entropy - h).abs() < 1e-12);
        assert!(s[2].entropy.abs() < 1e-12);
    }

    #[test]
    fn single_word_lexicon_has_no_competition() {
        let lex = Lexicon::from_entries([("dog", &["d", "o", "g"][..], 5)]).unwrap();
        for s in cohort_stats(&lex, "dog").unwrap() {
            assert_eq!(s.surprisal, 0.0);
            assert_eq!(s.entropy, 0.0);
        }
    }

    #[test]
    fn unknown_word_errors() {
        assert!(matches!(cohort_stats(&toy(), "cow"), Err(Error::UnknownWord(_))));
    }

    #[test]
    fn rejects_malformed_entries() {
        let mut lex = Lexicon::new();
        assert!(lex.insert("x", vec![], 1).is_err());
        assert!(lex.insert("x", vec!["x".into()], 0).is_err());
        lex.insert("x", vec!["x".into()], 3).unwrap();
        lex.insert("x", vec!["x".into()], 1).unwrap();
        assert_eq!(lex.total_count(), 1);
    }

    #[test]
    fn tsv_round_trip() {
        let lex = toy();
        let mut buf = Vec::new();
        lex.write_tsv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("cat\tk a t\t2\n"));
        assert_eq!(Lexicon::read_tsv(&buf[..]).unwrap(), lex);
    }
}
