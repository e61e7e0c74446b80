use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Phoneme,
    Word,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Phoneme => "phoneme",
            Level::Word => "word",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub symbol: String,
    pub onset_s: f64,
    pub offset_s: f64,
}

/// Time-aligned phoneme or word tokens of a stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrack {
    level: Level,
    tokens: Vec<Token>,
    duration_s: f64,
}

impl AlignmentTrack {
    /// Validates that onsets strictly increase and every token lies in
    /// `[0, duration_s]` with `onset < offset`.
    pub fn new(level: Level, tokens: Vec<Token>, duration_s: f64) -> Result<Self> {
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(invalid(format!("track duration must be positive, got {duration_s}")));
        }
        for (i, t) in tokens.iter().enumerate() {
            if !(t.onset_s >= 0.0 && t.onset_s < t.offset_s && t.offset_s <= duration_s) {
                return Err(invalid(format!(
                    "token {i} `{}` spans {}-{} s outside 0-{duration_s} s or is empty",
                    t.symbol, t.onset_s, t.offset_s
                )));
            }
            if i > 0 && t.onset_s <= tokens[i - 1].onset_s {
                return Err(invalid(format!("onset of token {i} does not increase")));
            }
        }
        Ok(Self { level, tokens, duration_s })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks that every phoneme lies inside some word interval.
    pub fn check_nesting(phonemes: &AlignmentTrack, words: &AlignmentTrack) -> Result<()> {
        let tol = 1e-9;
        let mut w = 0;
        for (i, p) in phonemes.tokens.iter().enumerate() {
            while w < words.tokens.len() && words.tokens[w].offset_s < p.onset_s + tol {
                w += 1;
            }
            let inside = words.tokens.get(w).is_some_and(|wt| {
                wt.onset_s <= p.onset_s + tol && p.offset_s <= wt.offset_s + tol
            });
            if !inside {
                return Err(invalid(format!("phoneme {i} `{}` is not inside a word", p.symbol)));
            }
        }
        Ok(())
    }

    /// Tab-separated rows `level symbol onset_s offset_s`, preceded by a
    /// header and a `# duration_s` comment.
    pub fn write_tsv<W: Write>(tracks: &[&AlignmentTrack], mut w: W) -> Result<()> {
        let duration = tracks.iter().map(|t| t.duration_s).fold(0.0, f64::max);
        writeln!(w, "# duration_s\t{duration}")?;
        writeln!(w, "level\tsymbol\tonset_s\toffset_s")?;
        for t in tracks {
            for tok in &t.tokens {
                writeln!(w, "{}\t{}\t{}\t{}", t.level.as_str(), tok.symbol, tok.onset_s, tok.offset_s)?;
            }
        }
        Ok(())
    }

    /// Reads tracks written by [`write_tsv`](Self::write_tsv). Returns the
    /// word track and the phoneme track, either of which may be absent.
    pub fn read_tsv<R: Read>(r: R) -> Result<(Option<Self>, Option<Self>)> {
        let mut duration = None;
        let mut words = Vec::new();
        let mut phonemes = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.trim().split('\t');
                if parts.next() == Some("duration_s") {
                    duration = parts.next().and_then(|v| v.trim().parse::<f64>().ok());
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Format(format!("alignment line {}: expected 4 columns", lineno + 1)));
            }
            if cols[0] == "level" {
                continue;
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("alignment line {}: {e}", lineno + 1)))
            };
            let tok = Token { symbol: cols[1].to_string(), onset_s: num(cols[2])?, offset_s: num(cols[3])? };
            match cols[0] {
                "word" => words.push(tok),
                "phoneme" => phonemes.push(tok),
                other => {
                    return Err(Error::Format(format!(
                        "alignment line {}: unknown level `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        let last = words.iter().chain(&phonemes).map(|t| t.offset_s).fold(0.0, f64::max);
        let duration = duration.unwrap_or(last);
        let build = |level, toks: Vec<Token>| -> Result<Option<Self>> {
            if toks.is_empty() {
                Ok(None)
            } else {
                Self::new(level, toks, duration).map(Some)
            }
        };
        Ok((build(Level::Word, words)?, build(Level::Phoneme, phonemes)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str, a: f64, b: f64) -> Token {
        Token { symbol: s.into(), onset_s: a, offset_s: b }
    }

    #[test]
    fn rejects_unordered_or_out_of_range_tokens() {
        assert!(AlignmentTrack::new(Level::Word, vec![tok("a", 1.0, 2.0), tok("b", 0.5, 0.9)], 3.0).is_err());
        assert!(AlignmentTrack::new(Level::Word, vec![tok("a", 1.0, 4.0)], 3.0).is_err());
        assert!(AlignmentTrack::new(Level::Word, vec![tok("a", 1.0, 1.0)], 3.0).is_err());
    }

    #[test]
    fn nesting_check() {
        let w = AlignmentTrack::new(Level::Word, vec![tok("kat", 0.0, 0.3), tok("dog", 0.5, 0.8)], 1.0).unwrap();
        let ok = AlignmentTrack::new(
            Level::Phoneme,
            vec![tok("k", 0.0, 0.1), tok("a", 0.1, 0.2), tok("d", 0.5, 0.6)],
            1.0,
        )
        .unwrap();
        AlignmentTrack::check_nesting(&ok, &w).unwrap();
        let bad = AlignmentTrack::new(Level::Phoneme, vec![tok("k", 0.35, 0.45)], 1.0).unwrap();
        assert!(AlignmentTrack::check_nesting(&bad, &w).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let w = AlignmentTrack::new(Level::Word, vec![tok("kat", 0.0, 0.3)], 2.5).unwrap();
        let p = AlignmentTrack::new(Level::Phoneme, vec![tok("k", 0.0, 0.1), tok("a", 0.1, 0.3)], 2.5).unwrap();
        let mut buf = Vec::new();
        AlignmentTrack::write_tsv(&[&w, &p], &mut buf).unwrap();
        let (w2, p2) = AlignmentTrack::read_tsv(&buf[..]).unwrap();
        assert_eq!(w2.unwrap(), w);
        assert_eq!(p2.unwrap(), p);
    }
}
