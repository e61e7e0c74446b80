//! Add-k smoothed unigram/bigram word model and word-level values.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::error::{invalid, Result};

pub const UNK: &str = "<unk>";

/// Word n-gram model of order 1 or 2 with add-k smoothing.
///
/// The predicted vocabulary is every corpus word plus [`UNK`]. Sentences
/// start with an implicit start symbol that acts only as a context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramModel {
    order: usize,
    k: f64,
    vocab: BTreeMap<String, usize>,
    unigram: Vec<u64>,
    total: u64,
    // (context, word) -> count; context == vocab.len() is the start symbol
    bigram: HashMap<(usize, usize), u64>,
    context_totals: Vec<u64>,
}

impl NGramModel {
    pub fn train(sentences: &[Vec<String>], order: usize, k: f64) -> Result<Self> {
        if !(order == 1 || order == 2) {
            return Err(invalid(format!("n-gram order must be 1 or 2, got {order}")));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(invalid(format!("smoothing constant must be non-negative, got {k}")));
        }
        let mut vocab = BTreeMap::new();
        for w in sentences.iter().flatten() {
            let next = vocab.len();
            vocab.entry(w.clone()).or_insert(next);
        }
        if !vocab.contains_key(UNK) {
            let next = vocab.len();
            vocab.insert(UNK.to_string(), next);
        }
        // Re-index in sorted order so the model is independent of corpus order.
        for (i, v) in vocab.values_mut().enumerate() {
            *v = i;
        }
        let v = vocab.len();
        let start = v;
        let mut unigram = vec![0u64; v];
        let mut bigram = HashMap::new();
        let mut context_totals = vec![0u64; v + 1];
        for s in sentences {
            let mut prev = start;
            for w in s {
                let id = vocab[w];
                unigram[id] += 1;
                *bigram.entry((prev, id)).or_insert(0) += 1;
                context_totals[prev] += 1;
                prev = id;
            }
        }
        let total = unigram.iter().sum();
        if total == 0 {
            return Err(invalid("n-gram corpus is empty"));
        }
        Ok(Self { order, k, vocab, unigram, total, bigram, context_totals })
    }

    /// Reads a plain-text corpus, one whitespace-tokenised sentence per line.
    pub fn read_corpus<R: Read>(r: R) -> Result<Vec<Vec<String>>> {
        let mut out = Vec::new();
        for line in BufReader::new(r).lines() {
            let toks: Vec<String> = line?.split_whitespace().map(str::to_string).collect();
            if !toks.is_empty() {
                out.push(toks);
            }
        }
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(String::as_str)
    }

    fn id(&self, w: &str) -> usize {
        self.vocab.get(w).copied().unwrap_or_else(|| self.vocab[UNK])
    }

    fn unigram_prob(&self, id: usize) -> f64 {
        let v = self.vocab.len() as f64;
        (self.unigram[id] as f64 + self.k) / (self.total as f64 + self.k * v)
    }

    /// `P(word | previous)`; `previous == None` marks a sentence start.
    /// Out-of-vocabulary words are scored as [`UNK`].
    pub fn prob(&self, previous: Option<&str>, word: &str) -> f64 {
        let id = self.id(word);
        if self.order == 1 {
            return self.unigram_prob(id);
        }
        let ctx = previous.map_or(self.vocab.len(), |p| self.id(p));
        let v = self.vocab.len() as f64;
        let denom = self.context_totals[ctx] as f64 + self.k * v;
        if denom <= 0.0 {
            // unseen context without smoothing
            return self.unigram_prob(id);
        }
        let c = self.bigram.get(&(ctx, id)).copied().unwrap_or(0) as f64;
        (c + self.k) / denom
    }
}

/// Word frequency and word surprisal of one token, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordValues {
    pub frequency: f64,
    pub surprisal: f64,
}

/// Frequency (`-log2(count / total)` from the lexicon) and surprisal
/// (`-log2 P(w | previous word)` from the model) for every word of every
/// sentence, flattened in order. Words missing from the lexicon count as
/// seen once.
pub fn word_values(
    model: &NGramModel,
    lexicon: &Lexicon,
    sentences: &[Vec<String>],
) -> Result<Vec<WordValues>> {
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(invalid("no words to score"));
    }
    if lexicon.total_count() == 0 {
        return Err(invalid("lexicon is empty"));
    }
    let total = lexicon.total_count() as f64;
    let mut out = Vec::new();
    for s in sentences {
        let mut prev: Option<&str> = None;
        for w in s {
            let count = lexicon.get(w).map_or(1, |e| e.count) as f64;
            let p = model.prob(prev, w);
            out.push(WordValues { frequency: -(count / total).log2(), surprisal: -p.log2() });
            prev = Some(w);
        }
    }
    for v in &mut out {
        // -log2(1) is -0.0
        v.frequency += 0.0;
        v.surprisal += 0.0;
    }
    Ok(out)
}
