//! Speech envelope extraction.
//!
//! The broadband envelope is either the sum of power-law compressed
//! subband magnitudes from a gammatone filterbank, or the magnitude of the
//! analytic signal. It is then brought to the band-filtering rate, filtered
//! into the band of interest and downsampled to the feature rate.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::fir::{apply_fir_bank, design_fir, BandDef};
use super::resample::resample;
use crate::error::{invalid, Result};
use crate::signal::MultichannelSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EnvelopeMethod {
    /// Fourth-order gammatone channels with ERB-rate spaced centre
    /// frequencies. Centre frequencies above `0.45 * fs` are clipped.
    Gammatone { n_bands: usize, low_hz: f64, high_hz: f64, exponent: f64 },
    /// `|x + i H{x}|`.
    AnalyticMagnitude,
}

impl Default for EnvelopeMethod {
    fn default() -> Self {
        EnvelopeMethod::Gammatone { n_bands: 28, low_hz: 50.0, high_hz: 5000.0, exponent: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub method: EnvelopeMethod,
    /// Rate at which the band filter is applied.
    pub filter_fs: f64,
    pub filter_order: usize,
    pub out_fs: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { method: EnvelopeMethod::default(), filter_fs: 512.0, filter_order: 2000, out_fs: 64.0 }
    }
}

fn erb(f: f64) -> f64 {
    24.7 * (4.37e-3 * f + 1.0)
}

fn erb_rate(f: f64) -> f64 {
    21.4 * (4.37e-3 * f + 1.0).log10()
}

fn inverse_erb_rate(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 4.37e-3
}

/// Centre frequencies equally spaced on the ERB-rate scale.
pub fn gammatone_centres(n_bands: usize, low_hz: f64, high_hz: f64) -> Vec<f64> {
    if n_bands == 1 {
        return vec![low_hz];
    }
    let (lo, hi) = (erb_rate(low_hz), erb_rate(high_hz));
    (0..n_bands)
        .map(|i| inverse_erb_rate(lo + (hi - lo) * i as f64 / (n_bands - 1) as f64))
        .collect()
}

/// Adds `|g_cf * x|^exponent` to `acc`, where `g_cf` is a fourth-order
/// gammatone filter realised as four cascaded one-pole lowpass sections on
/// the signal shifted down by the centre frequency.
fn accumulate_gammatone_band(x: &[f64], fs: f64, cf: f64, exponent: f64, acc: &mut [f64]) {
    let b = 2.0 * std::f64::consts::PI * 1.019 * erb(cf);
    let a = (-b / fs).exp();
    let g = 1.0 - a;
    let rot = Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * cf / fs);
    let mut phasor = Complex::new(1.0, 0.0);
    let mut s = [Complex::new(0.0, 0.0); 4];
    let half_exp = 0.5 * exponent;
    for (i, (&xi, out)) in x.iter().zip(acc.iter_mut()).enumerate() {
        let z = phasor * xi;
        s[0] = z * g + s[0] * a;
        s[1] = s[0] * g + s[1] * a;
        s[2] = s[1] * g + s[2] * a;
        s[3] = s[2] * g + s[3] * a;
        // Real input splits its energy between +cf and -cf: scale by 2.
        let p = 4.0 * s[3].norm_sqr();
        if p > 0.0 {
            *out += p.powf(half_exp);
        }
        phasor *= rot;
        if i % 4096 == 4095 {
            phasor /= phasor.norm();
        }
    }
}

fn analytic_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    // Zero negative frequencies, double positive ones.
    for (k, c) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            continue;
        }
        if k < n.div_ceil(2) {
            *c *= 2.0;
        } else {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.norm() / n as f64).collect()
}

/// Broadband amplitude envelope at the audio rate. Non-negative.
pub fn broadband_envelope(audio: &MultichannelSignal, method: &EnvelopeMethod) -> Result<Vec<f64>> {
    if audio.n_channels() != 1 {
        return Err(invalid(format!(
            "envelope extraction needs mono audio, got {} channels",
            audio.n_channels()
        )));
    }
    if audio.n_samples() == 0 {
        return Err(invalid("empty audio"));
    }
    let x = audio.channel(0);
    let fs = audio.fs();
    Ok(match *method {
        EnvelopeMethod::Gammatone { n_bands, low_hz, high_hz, exponent } => {
            if n_bands == 0 || !(low_hz > 0.0 && low_hz < high_hz) || !(exponent > 0.0) {
                return Err(invalid("invalid gammatone filterbank parameters"));
            }
            let top = high_hz.min(0.45 * fs);
            if top <= low_hz {
                return Err(invalid(format!("audio rate {fs} Hz too low for the filterbank")));
            }
            let mut acc = vec![0.0; x.len()];
            for cf in gammatone_centres(n_bands, low_hz, top) {
                accumulate_gammatone_band(x, fs, cf, exponent, &mut acc);
            }
            acc
        }
        EnvelopeMethod::AnalyticMagnitude => analytic_magnitude(x),
    })
}

/// Band-limited envelopes of `audio` at `config.out_fs`, one per band.
///
/// The broadband envelope is computed once, decimated to
/// `config.filter_fs`, filtered with a delay-compensated least-squares FIR
/// per band, and decimated to the output rate.
pub fn extract_envelopes(
    audio: &MultichannelSignal,
    bands: &[BandDef],
    config: &EnvelopeConfig,
) -> Result<Vec<MultichannelSignal>> {
    let env = broadband_envelope(audio, &config.method)?;
    let env = MultichannelSignal::mono(env, audio.fs())?;
    let env = resample(&env, config.filter_fs)?;
    let filters = bands
        .iter()
        .map(|b| design_fir(b, config.filter_fs, config.filter_order))
        .collect::<Result<Vec<_>>>()?;
    apply_fir_bank(&env, &filters)?
        .iter()
        .map(|s| resample(s, config.out_fs))
        .collect()
}

pub fn extract_envelope(
    audio: &MultichannelSignal,
    band: &BandDef,
    config: &EnvelopeConfig,
) -> Result<MultichannelSignal> {
    Ok(extract_envelopes(audio, std::slice::from_ref(band), config)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::fir::BandName;

    #[test]
    fn centres_span_the_requested_range() {
        let c = gammatone_centres(28, 50.0, 5000.0);
        assert_eq!(c.len(), 28);
        assert!((c[0] - 50.0).abs() < 1e-9);
        assert!((c[27] - 5000.0).abs() < 1e-6);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn silence_gives_zero_envelope() {
        let audio = MultichannelSignal::mono(vec![0.0; 4096 * 4], 4096.0).unwrap();
        let cfg = EnvelopeConfig { filter_order: 400, ..Default::default() };
        let env = extract_envelope(&audio, &BandDef::canonical(BandName::Delta), &cfg).unwrap();
        assert_eq!(env.fs(), 64.0);
        assert!(env.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_stereo_and_empty_audio() {
        let st = MultichannelSignal::zeros(2, 100, 4096.0).unwrap();
        assert!(broadband_envelope(&st, &EnvelopeMethod::default()).is_err());
        let empty = MultichannelSignal::new(vec![], 1, 4096.0).unwrap();
        assert!(broadband_envelope(&empty, &EnvelopeMethod::default()).is_err());
    }

    #[test]
    fn gammatone_gain_is_unity_at_centre() {
        let fs = 16384.0;
        let cf = 1000.0;
        let x: Vec<f64> =
            (0..16384).map(|i| (2.0 * std::f64::consts::PI * cf * i as f64 / fs).cos()).collect();
        let mut acc = vec![0.0; x.len()];
        accumulate_gammatone_band(&x, fs, cf, 2.0, &mut acc);
        // exponent 2 on the magnitude: steady-state value is 1.
        let tail = &acc[8000..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "gain^2 = {mean}");
    }

    #[test]
    fn analytic_magnitude_of_a_tone_is_flat() {
        let n = 4096;
        let x: Vec<f64> =
            (0..n).map(|i| 0.7 * (2.0 * std::f64::consts::PI * 64.0 * i as f64 / n as f64).sin()).collect();
        let m = analytic_magnitude(&x);
        assert!(m.iter().all(|v| (v - 0.7).abs() < 1e-9));
    }
}
