//! Stimulus representations: band envelopes, onset trains and
//! information-weighted onset trains from a cohort model and a word
//! n-gram model.

pub mod alignment;
pub mod features;
pub mod lexicon;
pub mod ngram;

pub use alignment::{AlignmentTrack, Level, Token};
pub use features::{encode_linguistic, onset_train, FeatureClass, FeatureName, FeatureStream};
pub use lexicon::{cohort_stats, CohortModel, LexEntry, Lexicon, PhonemeStats};
pub use ngram::{word_values, NGramModel, WordValues};
