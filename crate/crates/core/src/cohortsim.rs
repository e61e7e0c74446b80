//! Synthetic stories, listeners and cohorts.
//!
//! A story is sampled from a random bigram language over a toy lexicon and
//! rendered as amplitude-modulated noise. Listeners respond linearly to a
//! set of stimulus drives through subject-specific temporal response
//! functions, on top of pink background noise. Patients differ from
//! controls only through scaled response gains (and optionally noise).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, derive_seed};
use crate::signal::MultichannelSignal;
use crate::speechfeat::{
    encode_linguistic, onset_train, AlignmentTrack, CohortModel, FeatureClass, FeatureName, FeatureStream, Level,
    Lexicon, Token,
};

pub const EEG_FS: f64 = 64.0;
pub const EEG_CHANNELS: usize = 64;

const INVENTORY: [&str; 36] = [
    "a", "e", "i", "o", "u", "aa", "ee", "ii", "oo", "uu", "ai", "au", "b", "d", "f", "g", "h", "j", "k", "l", "m",
    "n", "p", "r", "s", "t", "v", "w", "y", "z", "ch", "sh", "th", "dh", "ng", "zh",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub n_words: usize,
    pub n_phonemes: usize,
    pub min_phonemes: usize,
    pub max_phonemes: usize,
    pub zipf_exponent: f64,
    pub corpus_sentences: usize,
    /// Preferred successors per word in the generating bigram language.
    pub successors: usize,
    pub successor_boost: f64,
}

impl Default for VocabSpec {
    fn default() -> Self {
        Self {
            n_words: 200,
            n_phonemes: 24,
            min_phonemes: 2,
            max_phonemes: 6,
            zipf_exponent: 1.0,
            corpus_sentences: 3000,
            successors: 6,
            successor_boost: 25.0,
        }
    }
}

impl VocabSpec {
    pub fn validate(&self) -> Result<()> {
        if !(50..=500).contains(&self.n_words) {
            return Err(invalid(format!("vocabulary must have 50-500 words, got {}", self.n_words)));
        }
        if !(2..=INVENTORY.len()).contains(&self.n_phonemes) {
            return Err(invalid(format!("phoneme inventory must have 2-{} symbols", INVENTORY.len())));
        }
        if self.min_phonemes == 0 || self.min_phonemes > self.max_phonemes {
            return Err(invalid("invalid word length range"));
        }
        if self.corpus_sentences == 0 || !(self.successor_boost >= 1.0) || !(self.zipf_exponent >= 0.0) {
            return Err(invalid("invalid corpus parameters"));
        }
        Ok(())
    }
}

/// The generating language: a start distribution and a row-stochastic
/// transition matrix over word indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLanguage {
    pub words: Vec<String>,
    pub pronunciations: Vec<Vec<String>>,
    start: Vec<f64>,
    transition: Vec<f64>,
}

impl BigramLanguage {
    pub fn generate(spec: &VocabSpec, rng: &mut rng::Rng) -> Result<Self> {
        spec.validate()?;
        let inventory = &INVENTORY[..spec.n_phonemes];
        let mut seen = std::collections::HashSet::new();
        let mut words = Vec::new();
        let mut pronunciations = Vec::new();
        let mut attempts = 0;
        while words.len() < spec.n_words {
            attempts += 1;
            if attempts > 1000 * spec.n_words {
                return Err(invalid("phoneme inventory too small for the requested vocabulary"));
            }
            let len = rng.random_range(spec.min_phonemes..=spec.max_phonemes);
            let pron: Vec<String> = (0..len).map(|_| inventory.choose(rng).unwrap().to_string()).collect();
            let spelling = pron.concat();
            if seen.insert(spelling.clone()) && !pronunciations.contains(&pron) {
                words.push(spelling);
                pronunciations.push(pron);
            }
        }
        let v = words.len();
        let zipf: Vec<f64> = (0..v).map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent)).collect();
        let start = normalised(zipf.clone());
        let mut transition = Vec::with_capacity(v * v);
        for _ in 0..v {
            let mut row = zipf.clone();
            for _ in 0..spec.successors {
                row[rng.random_range(0..v)] *= spec.successor_boost;
            }
            transition.extend(normalised(row));
        }
        Ok(Self { words, pronunciations, start, transition })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `P(w | prev)`, with `None` marking a sentence start.
    pub fn prob(&self, prev: Option<usize>, w: usize) -> f64 {
        match prev {
            None => self.start[w],
            Some(p) => self.transition[p * self.len() + w],
        }
    }

    fn draw(&self, prev: Option<usize>, rng: &mut rng::Rng) -> usize {
        let v = self.len();
        let row = match prev {
            None => &self.start[..],
            Some(p) => &self.transition[p * v..(p + 1) * v],
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        v - 1
    }

    pub fn sample_sentence(&self, rng: &mut rng::Rng) -> Vec<usize> {
        let len = rng.random_range(4..=12);
        let mut out = Vec::with_capacity(len);
        let mut prev = None;
        for _ in 0..len {
            let w = self.draw(prev, rng);
            out.push(w);
            prev = Some(w);
        }
        out
    }
}

fn normalised(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// A rendered story with its alignment, language resources and the
/// generative modulator.
#[derive(Debug, Clone)]
pub struct Story {
    pub words: AlignmentTrack,
    pub phonemes: AlignmentTrack,
    pub audio: MultichannelSignal,
    /// Mean of the amplitude modulator over each 64 Hz bin.
    pub modulator: MultichannelSignal,
    /// Story sentences (the last may be cut short).
    pub sentences: Vec<Vec<String>>,
    /// Training corpus for the word model.
    pub corpus: Vec<Vec<String>>,
    /// Pronunciations with corpus counts.
    pub lexicon: Lexicon,
    /// True `P(word | previous word)` of every story word.
    pub word_probabilities: Vec<f64>,
}

impl Story {
    pub fn duration_s(&self) -> f64 {
        self.words.duration_s()
    }
}

/// Samples and renders a story of `minutes` at `audio_fs` (a multiple of
/// 512 Hz).
pub fn gen_story(vocab: &VocabSpec, minutes: f64, audio_fs: f64, seed: u64) -> Result<Story> {
    vocab.validate()?;
    if !(minutes > 0.0 && minutes.is_finite()) {
        return Err(invalid(format!("story length must be positive, got {minutes} min")));
    }
    if !(audio_fs >= 4096.0 && (audio_fs / 512.0).fract() == 0.0) {
        return Err(invalid(format!("audio rate must be a multiple of 512 Hz and at least 4096 Hz, got {audio_fs}")));
    }
    let mut r = rng::stream(seed, 0);
    let lang = BigramLanguage::generate(vocab, &mut r)?;

    let mut r = rng::stream(seed, 1);
    let corpus_ids: Vec<Vec<usize>> = (0..vocab.corpus_sentences).map(|_| lang.sample_sentence(&mut r)).collect();
    let mut counts = vec![1u64; lang.len()];
    for w in corpus_ids.iter().flatten() {
        counts[*w] += 1;
    }
    let mut lexicon = Lexicon::new();
    for (i, w) in lang.words.iter().enumerate() {
        lexicon.insert(w, lang.pronunciations[i].clone(), counts[i])?;
    }
    let corpus: Vec<Vec<String>> =
        corpus_ids.iter().map(|s| s.iter().map(|&w| lang.words[w].clone()).collect()).collect();

    // timing
    let total = minutes * 60.0;
    let mut r = rng::stream(seed, 2);
    let mut t = 0.2;
    let mut word_toks = Vec::new();
    let mut phon_toks = Vec::new();
    let mut sentences = Vec::new();
    let mut word_probabilities = Vec::new();
    'story: loop {
        let sentence = lang.sample_sentence(&mut r);
        let mut words = Vec::new();
        let mut prev = None;
        for &w in &sentence {
            let pron = &lang.pronunciations[w];
            let jitter: f64 = r.sample::<f64, _>(StandardNormal);
            let dur = 0.08 * pron.len() as f64 * (1.0 + 0.15 * jitter).max(0.5);
            if t + dur > total {
                if !words.is_empty() {
                    sentences.push(words);
                }
                break 'story;
            }
            word_toks.push(Token { symbol: lang.words[w].clone(), onset_s: t, offset_s: t + dur });
            let step = dur / pron.len() as f64;
            for (k, p) in pron.iter().enumerate() {
                let on = t + k as f64 * step;
                let off = if k + 1 == pron.len() { t + dur } else { t + (k + 1) as f64 * step };
                phon_toks.push(Token { symbol: p.clone(), onset_s: on, offset_s: off });
            }
            word_probabilities.push(lang.prob(prev, w));
            words.push(lang.words[w].clone());
            prev = Some(w);
            t += dur + r.random_range(0.02..0.08);
        }
        sentences.push(words);
        t += r.random_range(0.25..0.6);
    }
    if word_toks.is_empty() {
        return Err(invalid("story too short to hold a single word"));
    }
    let words = AlignmentTrack::new(Level::Word, word_toks, total)?;
    let phonemes = AlignmentTrack::new(Level::Phoneme, phon_toks, total)?;

    // rendering: Hann bumps per phoneme with per-phoneme and per-word levels
    let mut r = rng::stream(seed, 3);
    let phon_level: BTreeMap<&str, f64> = INVENTORY.iter().map(|&p| (p, r.random_range(0.35..1.0))).collect();
    let n = (total * audio_fs).round() as usize;
    let mut modulator = vec![0.0; n];
    let mut wi = 0;
    let word_level: Vec<f64> = (0..words.len()).map(|_| r.random_range(0.7..1.3)).collect();
    for p in phonemes.tokens() {
        while words.tokens()[wi].offset_s < p.onset_s + 1e-12 {
            wi += 1;
        }
        let a = phon_level[p.symbol.as_str()] * word_level[wi];
        let i0 = (p.onset_s * audio_fs).round() as usize;
        let i1 = ((p.offset_s * audio_fs).round() as usize).min(n);
        let len = (i1 - i0) as f64;
        for (k, m) in modulator[i0..i1].iter_mut().enumerate() {
            let x = (k as f64 + 0.5) / len;
            *m += a * (std::f64::consts::PI * x).sin().powi(2);
        }
    }
    let block = (audio_fs / EEG_FS) as usize;
    let mod64: Vec<f64> = modulator.chunks(block).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();

    // band-limited carrier: one-pole high-pass at 100 Hz, low-pass at 4 kHz
    let hp = (-2.0 * std::f64::consts::PI * 100.0 / audio_fs).exp();
    let lp = (-2.0 * std::f64::consts::PI * 4000.0_f64.min(0.4 * audio_fs) / audio_fs).exp();
    let (mut prev_x, mut hp_y, mut lp_y) = (0.0, 0.0, 0.0);
    let mut r = rng::stream(seed, 4);
    let mut carrier_power = 0.0;
    let mut audio = modulator;
    for m in audio.iter_mut() {
        let x: f64 = r.sample(StandardNormal);
        hp_y = hp * (hp_y + x - prev_x);
        prev_x = x;
        lp_y = lp * lp_y + (1.0 - lp) * hp_y;
        carrier_power += lp_y * lp_y;
        *m *= lp_y;
    }
    let scale = 1.0 / (carrier_power / n as f64).sqrt();
    audio.iter_mut().for_each(|v| *v *= scale);

    Ok(Story {
        words,
        phonemes,
        audio: MultichannelSignal::mono(audio, audio_fs)?,
        modulator: MultichannelSignal::mono(mod64, EEG_FS)?,
        sentences,
        corpus,
        lexicon,
        word_probabilities,
    })
}

/// Stimulus drives of the forward model: the compressed modulator and
/// onset trains weighted by the generating statistics, each scaled to
/// unit RMS.
pub const DRIVES: [FeatureName; 7] = [
    FeatureName::EnvelopeBroad,
    FeatureName::PhonemeOnset,
    FeatureName::WordOnset,
    FeatureName::PhonemeSurprisal,
    FeatureName::CohortEntropy,
    FeatureName::WordFrequency,
    FeatureName::WordSurprisal,
];

pub fn story_drives(story: &Story) -> Result<Vec<FeatureStream>> {
    let d = story.duration_s();
    let mut env: Vec<f64> = story.modulator.channel(0).iter().map(|m| m.max(0.0).powf(0.6)).collect();
    let mean = env.iter().sum::<f64>() / env.len() as f64;
    env.iter_mut().for_each(|v| *v -= mean);
    let cohort = CohortModel::new(&story.lexicon);
    let mut surprisal = Vec::new();
    let mut entropy = Vec::new();
    for w in story.words.tokens() {
        for s in cohort.stats(&w.symbol)? {
            surprisal.push(s.surprisal);
            entropy.push(s.entropy);
        }
    }
    let total = story.lexicon.total_count() as f64;
    let freq: Vec<f64> = story
        .words
        .tokens()
        .iter()
        .map(|w| -(story.lexicon.get(&w.symbol).map_or(1, |e| e.count) as f64 / total).log2())
        .collect();
    let wsurp: Vec<f64> = story.word_probabilities.iter().map(|p| -p.log2()).collect();
    let mut out = vec![FeatureStream::new(FeatureName::EnvelopeBroad, MultichannelSignal::mono(env, EEG_FS)?)?];
    out.push(onset_train(FeatureName::PhonemeOnset, &story.phonemes, EEG_FS, d)?);
    out.push(onset_train(FeatureName::WordOnset, &story.words, EEG_FS, d)?);
    out.push(encode_linguistic(FeatureName::PhonemeSurprisal, &story.phonemes, &surprisal, EEG_FS, d)?);
    out.push(encode_linguistic(FeatureName::CohortEntropy, &story.phonemes, &entropy, EEG_FS, d)?);
    out.push(encode_linguistic(FeatureName::WordFrequency, &story.words, &freq, EEG_FS, d)?);
    out.push(encode_linguistic(FeatureName::WordSurprisal, &story.words, &wsurp, EEG_FS, d)?);
    out.into_iter()
        .map(|f| {
            let v = f.values();
            let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
            if rms == 0.0 {
                return Err(Error::Numerical(format!("drive `{}` is silent", f.name)));
            }
            let data = v.iter().map(|x| x / rms).collect();
            FeatureStream::new(f.name, MultichannelSignal::mono(data, EEG_FS)?)
        })
        .collect()
}

/// Seeds of the temporal response functions. Templates depend only on
/// `population_seed` and the feature; each subject deviates from them by
/// a random perturbation of relative size `variability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrfSpec {
    pub population_seed: u64,
    pub subject_seed: u64,
    pub variability: f64,
}

/// Background noise: pink noise per channel mixed with a few pink sources
/// shared across channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub shared_fraction: f64,
    pub seed: u64,
}

const TRF_RANK: usize = 2;
const TRF_MAX_LAG_S: f64 = 0.4;
const SHARED_SOURCES: usize = 4;

fn random_kernel(r: &mut rng::Rng) -> Vec<f64> {
    let taps = (TRF_MAX_LAG_S * EEG_FS).round() as usize + 1;
    let mut k = vec![0.0; taps];
    for _ in 0..r.random_range(2..=3) {
        let mu = r.random_range(0.04..0.36);
        let sigma = r.random_range(0.012..0.05);
        let freq = r.random_range(0.0..10.0);
        let amp = r.random_range(0.5..1.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        for (i, v) in k.iter_mut().enumerate() {
            let tau = i as f64 / EEG_FS - mu;
            *v += amp * (-tau * tau / (2.0 * sigma * sigma)).exp() * (2.0 * std::f64::consts::PI * freq * tau).cos();
        }
    }
    unit_norm(k)
}

fn unit_norm(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn random_topography(r: &mut rng::Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..EEG_CHANNELS).map(|_| r.sample(StandardNormal)).collect();
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / EEG_CHANNELS as f64).sqrt();
    v.into_iter().map(|x| x / rms).collect()
}

/// Per-subject kernels and topographies of one feature.
fn subject_trf(name: FeatureName, spec: &TrfSpec) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut pop = rng::stream(derive_seed(spec.population_seed, name.as_str()), 0);
    let mut sub = rng::stream(derive_seed(spec.subject_seed, name.as_str()), 0);
    let mut kernels = Vec::new();
    let mut topos = Vec::new();
    for _ in 0..TRF_RANK {
        let k0 = random_kernel(&mut pop);
        let t0 = random_topography(&mut pop);
        let dk = random_kernel(&mut sub);
        let dt = random_topography(&mut sub);
        kernels.push(unit_norm(k0.iter().zip(&dk).map(|(a, b)| a + spec.variability * b).collect()));
        let t: Vec<f64> = t0.iter().zip(&dt).map(|(a, b)| a + spec.variability * b).collect();
        let rms = (t.iter().map(|x| x * x).sum::<f64>() / EEG_CHANNELS as f64).sqrt();
        topos.push(t.into_iter().map(|x| x / rms).collect());
    }
    (kernels, topos)
}

/// Unit-variance 1/f noise of length `n` at 64 Hz.
pub fn pink_noise(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(r.sample(StandardNormal), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let f_min = 0.1;
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = k.min(n - k);
        if kk == 0 {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        let f = (kk as f64 * EEG_FS / n as f64).max(f_min);
        *c /= f.sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let sd = (out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    out.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    out
}

fn background(n: usize, noise: &NoiseSpec) -> Vec<f64> {
    let mut out = vec![0.0; EEG_CHANNELS * n];
    if noise.sigma == 0.0 {
        return out;
    }
    let indep = noise.sigma * (1.0 - noise.shared_fraction).sqrt();
    for c in 0..EEG_CHANNELS {
        let mut r = rng::stream(noise.seed, c as u64);
        for (o, v) in out[c * n..(c + 1) * n].iter_mut().zip(pink_noise(n, &mut r)) {
            *o = indep * v;
        }
    }
    if noise.shared_fraction > 0.0 {
        let shared = noise.sigma * (noise.shared_fraction / SHARED_SOURCES as f64).sqrt();
        for s in 0..SHARED_SOURCES {
            let mut r = rng::stream(noise.seed, (EEG_CHANNELS + s) as u64);
            let topo = random_topography(&mut r);
            let src = pink_noise(n, &mut r);
            for c in 0..EEG_CHANNELS {
                let w = shared * topo[c];
                for (o, v) in out[c * n..(c + 1) * n].iter_mut().zip(&src) {
                    *o += w * v;
                }
            }
        }
    }
    out
}

/// Linear forward model: `eeg[c] = sum_f gain_f * sum_k topo_fk[c] *
/// (feature_f * kernel_fk) + noise`, 64 channels at 64 Hz.
pub fn gen_subject_eeg(
    features: &[FeatureStream],
    gains: &[f64],
    trf: &TrfSpec,
    noise: &NoiseSpec,
) -> Result<MultichannelSignal> {
    if features.len() != gains.len() {
        return Err(Error::Shape(format!("{} features but {} gains", features.len(), gains.len())));
    }
    if features.is_empty() {
        return Err(invalid("no features to respond to"));
    }
    if let Some(g) = gains.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(invalid(format!("gains must be finite and non-negative, got {g}")));
    }
    if !(noise.sigma >= 0.0 && (0.0..=1.0).contains(&noise.shared_fraction)) {
        return Err(invalid("noise sigma must be non-negative and the shared fraction in [0, 1]"));
    }
    let n = features[0].values().len();
    for f in features {
        if (f.signal.fs() - EEG_FS).abs() > 1e-9 || f.values().len() != n {
            return Err(Error::Shape(format!("feature `{}` is not aligned at {EEG_FS} Hz", f.name)));
        }
    }
    let mut data = background(n, noise);
    for (f, &g) in features.iter().zip(gains) {
        if g == 0.0 {
            continue;
        }
        let (kernels, topos) = subject_trf(f.name, trf);
        let x = f.values();
        for (kernel, topo) in kernels.iter().zip(&topos) {
            // causal convolution: response lags the stimulus
            let mut resp = vec![0.0; n];
            for (i, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (j, kv) in kernel.iter().enumerate() {
                    if i + j >= n {
                        break;
                    }
                    resp[i + j] += xv * kv;
                }
            }
            for c in 0..EEG_CHANNELS {
                let w = g * topo[c];
                for (o, v) in data[c * n..(c + 1) * n].iter_mut().zip(&resp) {
                    *o += w * v;
                }
            }
        }
    }
    MultichannelSignal::new(data, EEG_CHANNELS, EEG_FS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Patient,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Patient => "patient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "control" => Some(Group::Control),
            "patient" => Some(Group::Patient),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeDist {
    pub mean: f64,
    pub std: f64,
}

/// Multiplicative deficits applied to patients, per feature class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deficit {
    pub acoustic: f64,
    pub segmentation: f64,
    pub linguistic: f64,
    /// Multiplies the patient noise level.
    pub noise_inflation: f64,
}

impl Deficit {
    pub fn uniform(factor: f64) -> Self {
        Self { acoustic: factor, segmentation: factor, linguistic: factor, noise_inflation: 1.0 }
    }

    pub fn factor(&self, class: FeatureClass) -> f64 {
        match class {
            FeatureClass::Acoustic => self.acoustic,
            FeatureClass::Segmentation => self.segmentation,
            FeatureClass::Linguistic => self.linguistic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_controls: usize,
    pub n_patients: usize,
    pub control_age: AgeDist,
    pub patient_age: AgeDist,
    pub story_minutes: f64,
    pub audio_fs: f64,
    pub vocab: VocabSpec,
    /// Control response gain per drive (see [`DRIVES`]).
    pub gains: BTreeMap<FeatureName, f64>,
    pub deficit: Deficit,
    /// Log-normal spread of per-subject gain multipliers.
    pub gain_spread: f64,
    /// Median background noise level.
    pub noise_sigma: f64,
    /// Log-normal spread of per-subject noise levels.
    pub noise_spread: f64,
    pub shared_noise_fraction: f64,
    pub trf_variability: f64,
    /// Seeds the response templates shared by every cohort of a population.
    pub population_seed: u64,
    pub story_seed: u64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        let gains = [
            (FeatureName::EnvelopeBroad, 1.0),
            (FeatureName::PhonemeOnset, 0.6),
            (FeatureName::WordOnset, 0.6),
            (FeatureName::PhonemeSurprisal, 0.4),
            (FeatureName::CohortEntropy, 0.4),
            (FeatureName::WordFrequency, 0.4),
            (FeatureName::WordSurprisal, 0.4),
        ]
        .into_iter()
        .collect();
        Self {
            n_controls: 22,
            n_patients: 26,
            control_age: AgeDist { mean: 72.0, std: 7.0 },
            patient_age: AgeDist { mean: 72.0, std: 15.0 },
            story_minutes: 20.0,
            audio_fs: 16384.0,
            vocab: VocabSpec::default(),
            gains,
            deficit: Deficit::uniform(0.6),
            gain_spread: 0.15,
            noise_sigma: 40.0,
            noise_spread: 0.1,
            shared_noise_fraction: 0.3,
            trf_variability: 0.3,
            population_seed: 1,
            story_seed: 2,
            seed: 3,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_controls < 2 || self.n_patients < 2 {
            return Err(invalid(format!(
                "need at least 2 controls and 2 patients, got {} and {}",
                self.n_controls, self.n_patients
            )));
        }
        for a in [self.control_age, self.patient_age] {
            if !(a.mean.is_finite() && a.std >= 0.0) {
                return Err(invalid("invalid age distribution"));
            }
        }
        if !(self.story_minutes > 0.0) {
            return Err(invalid("story length must be positive"));
        }
        self.vocab.validate()?;
        for f in DRIVES {
            match self.gains.get(&f) {
                Some(g) if *g >= 0.0 && g.is_finite() => {}
                _ => return Err(invalid(format!("missing or negative gain for `{f}`"))),
            }
        }
        if let Some(f) = self.gains.keys().find(|f| !DRIVES.contains(f)) {
            return Err(invalid(format!("`{f}` is not a response drive")));
        }
        let d = self.deficit;
        for v in [d.acoustic, d.segmentation, d.linguistic] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("deficit factors must lie in [0, 1], got {v}")));
            }
        }
        if !(d.noise_inflation >= 1.0) {
            return Err(invalid("noise inflation must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0
            && self.noise_spread >= 0.0
            && self.gain_spread >= 0.0
            && self.trf_variability >= 0.0
            && (0.0..=1.0).contains(&self.shared_noise_fraction))
        {
            return Err(invalid("noise, spread and variability parameters must be non-negative"));
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.n_controls + self.n_patients
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub id: String,
    pub group: Group,
    pub age: f64,
    pub noise_sigma: f64,
    /// Gain per drive, in [`DRIVES`] order.
    pub gains: Vec<f64>,
    pub trf_seed: u64,
    pub noise_seed: u64,
}

/// A simulated listener. The story (alignment, audio, drives) is shared by
/// the whole cohort and held by [`CohortGenerator`].
#[derive(Debug, Clone)]
pub struct SubjectRecord {
    pub info: SubjectInfo,
    pub eeg: MultichannelSignal,
}

/// Generates subjects on demand, so a cohort never has to be held in
/// memory at once.
#[derive(Debug, Clone)]
pub struct CohortGenerator {
    spec: CohortSpec,
    story: Arc<Story>,
    drives: Arc<Vec<FeatureStream>>,
    infos: Vec<SubjectInfo>,
}

impl CohortGenerator {
    pub fn new(spec: CohortSpec) -> Result<Self> {
        spec.validate()?;
        let story = gen_story(&spec.vocab, spec.story_minutes, spec.audio_fs, spec.story_seed)?;
        Self::with_story(spec, Arc::new(story))
    }

    /// Reuses an already generated story (it must be the one `spec`
    /// describes).
    pub fn with_story(spec: CohortSpec, story: Arc<Story>) -> Result<Self> {
        spec.validate()?;
        if (story.duration_s() - spec.story_minutes * 60.0).abs() > 1e-9 {
            return Err(invalid("story does not match the cohort specification"));
        }
        let drives = Arc::new(story_drives(&story)?);
        let infos = (0..spec.n_subjects()).map(|i| subject_info(&spec, i)).collect::<Result<_>>()?;
        Ok(Self { spec, story, drives, infos })
    }

    pub fn spec(&self) -> &CohortSpec {
        &self.spec
    }

    pub fn story(&self) -> &Arc<Story> {
        &self.story
    }

    pub fn drives(&self) -> &[FeatureStream] {
        &self.drives
    }

    pub fn infos(&self) -> &[SubjectInfo] {
        &self.infos
    }

    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn subject(&self, i: usize) -> Result<SubjectRecord> {
        let info = self.infos.get(i).ok_or_else(|| invalid(format!("no subject {i}")))?.clone();
        let trf = TrfSpec {
            population_seed: self.spec.population_seed,
            subject_seed: info.trf_seed,
            variability: self.spec.trf_variability,
        };
        let noise =
            NoiseSpec { sigma: info.noise_sigma, shared_fraction: self.spec.shared_noise_fraction, seed: info.noise_seed };
        let eeg = gen_subject_eeg(&self.drives, &info.gains, &trf, &noise)?;
        Ok(SubjectRecord { info, eeg })
    }
}

fn subject_info(spec: &CohortSpec, i: usize) -> Result<SubjectInfo> {
    let group = if i < spec.n_controls { Group::Control } else { Group::Patient };
    let mut r = rng::stream(derive_seed(spec.seed, "subjects"), i as u64);
    let ages = if group == Group::Control { spec.control_age } else { spec.patient_age };
    let age = Normal::new(ages.mean, ages.std.max(1e-12))
        .map_err(|e| invalid(e.to_string()))?
        .sample(&mut r)
        .clamp(25.0, 95.0);
    let z: f64 = r.sample(StandardNormal);
    let mut noise_sigma = spec.noise_sigma * (spec.noise_spread * z).exp();
    if group == Group::Patient {
        noise_sigma *= spec.deficit.noise_inflation;
    }
    let gains = DRIVES
        .iter()
        .map(|f| {
            let z: f64 = r.sample(StandardNormal);
            let mut g = spec.gains[f] * (spec.gain_spread * z).exp();
            if group == Group::Patient {
                g *= spec.deficit.factor(f.class());
            }
            g
        })
        .collect();
    Ok(SubjectInfo {
        id: format!("sub-{:03}", i + 1),
        group,
        age,
        noise_sigma,
        gains,
        trf_seed: r.random(),
        noise_seed: r.random(),
    })
}

/// A fully materialised cohort.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub story: Arc<Story>,
    pub subjects: Vec<SubjectRecord>,
}

pub fn gen_cohort(spec: CohortSpec) -> Result<Cohort> {
    let g = CohortGenerator::new(spec)?;
    let subjects = (0..g.len()).map(|i| g.subject(i)).collect::<Result<_>>()?;
    Ok(Cohort { spec: g.spec.clone(), story: g.story.clone(), subjects })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub spec: CohortSpec,
    pub subjects: Vec<SubjectInfo>,
}

/// Writes `cohort.json`, `story/` (alignment, lexicon, corpus, audio) and
/// `subjects/<id>.sig`.
pub fn write_cohort_dir(g: &CohortGenerator, dir: &Path) -> Result<()> {
    let story_dir = dir.join("story");
    let subj_dir = dir.join("subjects");
    fs::create_dir_all(&story_dir)?;
    fs::create_dir_all(&subj_dir)?;
    let s = g.story();
    AlignmentTrack::write_tsv(&[&s.words, &s.phonemes], BufWriter::new(fs::File::create(story_dir.join("alignment.tsv"))?))?;
    s.lexicon.write_tsv(BufWriter::new(fs::File::create(story_dir.join("lexicon.tsv"))?))?;
    let mut w = BufWriter::new(fs::File::create(story_dir.join("corpus.txt"))?);
    for sent in &s.corpus {
        writeln!(w, "{}", sent.join(" "))?;
    }
    w.flush()?;
    s.audio.save(story_dir.join("audio.sig"))?;
    for i in 0..g.len() {
        let rec = g.subject(i)?;
        rec.eeg.save(subj_dir.join(format!("{}.sig", rec.info.id)))?;
    }
    let manifest = CohortManifest { spec: g.spec().clone(), subjects: g.infos().to_vec() };
    fs::write(dir.join("cohort.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Story resources read back from a cohort directory.
#[derive(Debug, Clone)]
pub struct StoredStory {
    pub words: AlignmentTrack,
    pub phonemes: AlignmentTrack,
    pub audio: MultichannelSignal,
    pub lexicon: Lexicon,
    pub corpus: Vec<Vec<String>>,
}

pub fn read_cohort_manifest(dir: &Path) -> Result<CohortManifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join("cohort.json"))?)?)
}

pub fn read_story_dir(dir: &Path) -> Result<StoredStory> {
    let story_dir = dir.join("story");
    let (words, phonemes) = AlignmentTrack::read_tsv(fs::File::open(story_dir.join("alignment.tsv"))?)?;
    let (words, phonemes) = match (words, phonemes) {
        (Some(w), Some(p)) => (w, p),
        _ => return Err(Error::Format("alignment.tsv needs word and phoneme tiers".into())),
    };
    let lexicon = Lexicon::read_tsv(fs::File::open(story_dir.join("lexicon.tsv"))?)?;
    let corpus = crate::speechfeat::NGramModel::read_corpus(fs::File::open(story_dir.join("corpus.txt"))?)?;
    let audio = MultichannelSignal::load(story_dir.join("audio.sig"))?;
    Ok(StoredStory { words, phonemes, audio, lexicon, corpus })
}

pub fn read_subject_eeg(dir: &Path, id: &str) -> Result<MultichannelSignal> {
    MultichannelSignal::load(dir.join("subjects").join(format!("{id}.sig")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_spec() -> CohortSpec {
        CohortSpec {
            n_controls: 2,
            n_patients: 2,
            story_minutes: 0.5,
            audio_fs: 4096.0,
            vocab: VocabSpec { corpus_sentences: 200, ..VocabSpec::default() },
            ..CohortSpec::default()
        }
    }

    #[test]
    fn story_bookkeeping() {
        let s = gen_story(&VocabSpec::default(), 1.0, 4096.0, 9).unwrap();
        assert_eq!(s.duration_s(), 60.0);
        assert_eq!(s.audio.n_samples(), 60 * 4096);
        assert_eq!(s.modulator.n_samples(), 60 * 64);
        assert!(s.words.tokens().last().unwrap().offset_s > 58.0);
        AlignmentTrack::check_nesting(&s.phonemes, &s.words).unwrap();
        let n: usize = s.sentences.iter().map(Vec::len).sum();
        assert_eq!(n, s.words.len());
        assert_eq!(s.word_probabilities.len(), n);
        assert_eq!(s.lexicon.len(), 200);
    }

    #[test]
    fn invalid_inputs() {
        assert!(gen_story(&VocabSpec { n_words: 10, ..VocabSpec::default() }, 1.0, 4096.0, 0).is_err());
        assert!(gen_story(&VocabSpec::default(), 1.0, 5000.0, 0).is_err());
        let mut spec = short_spec();
        spec.n_controls = 0;
        assert!(spec.validate().is_err());
        let mut spec = short_spec();
        spec.gains.remove(&FeatureName::WordOnset);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn language_rows_are_distributions() {
        let mut r = rng::stream(4, 0);
        let lang = BigramLanguage::generate(&VocabSpec::default(), &mut r).unwrap();
        for prev in std::iter::once(None).chain((0..lang.len()).map(Some)) {
            let s: f64 = (0..lang.len()).map(|w| lang.prob(prev, w)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gain_is_pure_noise_and_shape_contract() {
        let g = CohortGenerator::new(short_spec()).unwrap();
        let drives = g.drives();
        let trf = TrfSpec { population_seed: 1, subject_seed: 2, variability: 0.3 };
        let noise = NoiseSpec { sigma: 1.0, shared_fraction: 0.3, seed: 5 };
        let zero = gen_subject_eeg(drives, &[0.0; 7], &trf, &noise).unwrap();
        let quiet = gen_subject_eeg(drives, &[0.0; 7], &trf, &NoiseSpec { sigma: 0.0, ..noise }).unwrap();
        assert!(quiet.data().iter().all(|&v| v == 0.0));
        assert_eq!(zero.n_channels(), 64);
        assert_eq!(zero.fs(), 64.0);
        assert_eq!(zero.n_samples(), drives[0].values().len());
        assert!(gen_subject_eeg(drives, &[1.0; 6], &trf, &noise).is_err());
    }

    #[test]
    fn forward_model_is_linear_in_features() {
        let g = CohortGenerator::new(short_spec()).unwrap();
        let d = g.drives();
        let trf = TrfSpec { population_seed: 1, subject_seed: 2, variability: 0.3 };
        let noise = NoiseSpec { sigma: 0.0, shared_fraction: 0.0, seed: 0 };
        let mut gains = [0.0; 7];
        gains[0] = 0.7;
        let a = gen_subject_eeg(d, &gains, &trf, &noise).unwrap();
        let mut gains_b = [0.0; 7];
        gains_b[3] = 1.3;
        let b = gen_subject_eeg(d, &gains_b, &trf, &noise).unwrap();
        gains[3] = 1.3;
        let ab = gen_subject_eeg(d, &gains, &trf, &noise).unwrap();
        for ((x, y), z) in a.data().iter().zip(b.data()).zip(ab.data()) {
            assert!((x + y - z).abs() < 1e-9);
        }
    }

    #[test]
    fn cohort_is_deterministic_and_grouped() {
        let spec = short_spec();
        let a = gen_cohort(spec.clone()).unwrap();
        let b = gen_cohort(spec).unwrap();
        assert_eq!(a.subjects.len(), 4);
        for (x, y) in a.subjects.iter().zip(&b.subjects) {
            assert_eq!(x.info, y.info);
            assert_eq!(x.eeg, y.eeg);
        }
        let patients = a.subjects.iter().filter(|s| s.info.group == Group::Patient).count();
        assert_eq!(patients, 2);
        for s in &a.subjects {
            assert!((25.0..=95.0).contains(&s.info.age));
        }
        // deficit scales patient gains
        let spec = CohortSpec { gain_spread: 0.0, ..short_spec() };
        let g = CohortGenerator::new(spec).unwrap();
        assert!((g.infos()[2].gains[0] - 0.6 * g.infos()[0].gains[0]).abs() < 1e-12);
    }

    #[test]
    fn default_cohort_has_paper_group_sizes() {
        let spec = CohortSpec::default();
        assert_eq!(spec.n_subjects(), 48);
        assert_eq!(spec.n_patients, 26);
    }

    #[test]
    fn pink_noise_spectrum_falls_off() {
        let mut r = rng::stream(1, 1);
        let x = pink_noise(1 << 14, &mut r);
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let band = |lo: f64, hi: f64| {
            let n = buf.len() as f64;
            let (a, b) = ((lo * n / 64.0) as usize, (hi * n / 64.0) as usize);
            buf[a..b].iter().map(|c| c.norm_sqr()).sum::<f64>() / (b - a) as f64
        };
        let ratio = band(1.0, 2.0) / band(16.0, 32.0);
        // 1/f power: mean over [1,2] vs [16,32] is about 16
        assert!(ratio > 8.0 && ratio < 32.0, "{ratio}");
    }
}
