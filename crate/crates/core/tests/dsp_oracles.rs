use std::f64::consts::PI;

use neurotrack::cohortsim::{gen_story, VocabSpec};
use neurotrack::dsp::{
    apply_fir_compensated, common_average_reference, design_fir, extract_envelope, resample, zscore, BandDef,
    BandName, EnvelopeConfig, EnvelopeMethod,
};
use neurotrack::MultichannelSignal;
use proptest::prelude::*;

fn dtft_magnitude(c: &[f64], f: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in c.iter().enumerate() {
        re += v * (w * n as f64).cos();
        im -= v * (w * n as f64).sin();
    }
    re.hypot(im)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn theta_response_by_dtft() {
    let f = design_fir(&BandDef::canonical(BandName::Theta), 512.0, 2000).unwrap();
    assert_eq!(f.coefficients().len(), 2001);
    let h6 = dtft_magnitude(f.coefficients(), 6.0, 512.0);
    let h1 = dtft_magnitude(f.coefficients(), 1.0, 512.0);
    assert!((0.95..=1.05).contains(&h6), "{h6}");
    assert!(h1 < 0.01, "{h1}");
}

/// Passband interior within 1 +- 0.05; stopband below 0.01 from half the
/// lower edge down and from 1.5 times the upper edge up. A lower edge
/// closer to DC than the filter's resolution (2 fs / order) has no
/// resolvable stopband and is skipped.
#[test]
fn canonical_bands_by_dtft() {
    for (fs, order) in [(512.0, 2000), (64.0, 250)] {
        let resolution = 2.0 * fs / order as f64;
        for name in BandName::ANALYSIS {
            let band = BandDef::canonical(name);
            let c = design_fir(&band, fs, order).unwrap();
            let nyquist = fs / 2.0;
            let width = band.high_hz - band.low_hz;
            for i in 0..=400 {
                let f = i as f64 * nyquist / 400.0;
                let h = dtft_magnitude(c.coefficients(), f, fs);
                if f >= band.low_hz + 0.1 * width && f <= band.high_hz - 0.1 * width {
                    assert!((h - 1.0).abs() <= 0.05, "{name:?} at {fs} Hz: |H({f})| = {h}");
                }
                let low_stop = band.low_hz > resolution && f <= 0.5 * band.low_hz;
                if low_stop || f >= 1.5 * band.high_hz {
                    assert!(h < 0.01, "{name:?} at {fs} Hz: |H({f})| = {h}");
                }
            }
        }
    }
}

#[test]
fn no_band_amplifies_anywhere() {
    for (fs, order) in [(512.0, 2000), (64.0, 250)] {
        for name in BandName::ANALYSIS {
            let c = design_fir(&BandDef::canonical(name), fs, order).unwrap();
            let peak = (0..=20_000).map(|i| dtft_magnitude(c.coefficients(), i as f64 * fs / 40_000.0, fs)).fold(0.0, f64::max);
            assert!(peak < 1.1, "{name:?} at {fs} Hz peaks at {peak}");
        }
    }
}

fn tone(freq: f64, fs: f64, seconds: f64) -> Vec<f64> {
    (0..(fs * seconds) as usize).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
}

fn amplitude(x: &[f64]) -> f64 {
    (2.0 * x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn sines_through_theta_filter() {
    let f = design_fir(&BandDef::canonical(BandName::Theta), 512.0, 2000).unwrap();
    for (freq, lo, hi) in [(6.0, 0.95, 1.05), (30.0, 0.0, 0.01)] {
        let x = MultichannelSignal::mono(tone(freq, 512.0, 20.0), 512.0).unwrap();
        let y = apply_fir_compensated(&x, &f).unwrap();
        let steady = 2048..x.n_samples() - 2048;
        let ratio = amplitude(&y.channel(0)[steady.clone()]) / amplitude(&x.channel(0)[steady]);
        assert!((lo..=hi).contains(&ratio), "{freq} Hz: {ratio}");
    }
}

#[test]
fn tone_survives_decimation() {
    let x = MultichannelSignal::mono(tone(5.0, 512.0, 10.0), 512.0).unwrap();
    let y = resample(&x, 64.0).unwrap();
    assert_eq!(y.fs(), 64.0);
    assert_eq!(y.n_samples(), 640);
    let a = amplitude(&y.channel(0)[64..576]);
    assert!((a - 1.0).abs() < 0.02, "{a}");
}

#[test]
fn envelope_follows_known_modulator() {
    let fs = 8192.0;
    let secs = 20.0;
    let m = |t: f64| 1.0 + 0.8 * (2.0 * PI * 3.0 * t).sin();
    let audio: Vec<f64> =
        (0..(fs * secs) as usize).map(|i| i as f64 / fs).map(|t| m(t) * (2.0 * PI * 1000.0 * t).sin()).collect();
    let audio = MultichannelSignal::mono(audio, fs).unwrap();
    let env = extract_envelope(&audio, &BandDef::canonical(BandName::Delta), &EnvelopeConfig::default()).unwrap();
    assert_eq!(env.fs(), 64.0);
    let steady = 256..env.n_samples() - 256;
    let reference: Vec<f64> = steady.clone().map(|i| m(i as f64 / 64.0)).collect();
    let r = pearson(&env.channel(0)[steady], &reference);
    assert!(r > 0.9, "{r}");
}

fn story_envelope_r(method: EnvelopeMethod) -> f64 {
    let story = gen_story(&VocabSpec::default(), 1.0, 16384.0, 4).unwrap();
    let cfg = EnvelopeConfig { method, ..EnvelopeConfig::default() };
    let env = extract_envelope(&story.audio, &BandDef::canonical(BandName::Broad), &cfg).unwrap();
    let n = env.n_samples().min(story.modulator.n_samples());
    pearson(&env.channel(0)[125..n - 125], &story.modulator.channel(0)[125..n - 125])
}

#[test]
fn story_envelope_tracks_generative_modulator() {
    let r = story_envelope_r(EnvelopeMethod::AnalyticMagnitude);
    assert!(r > 0.8, "{r}");
}

/// The noise carrier's own envelope fluctuations fall inside the broad
/// band for the narrow low-frequency gammatone channels, which costs
/// some correlation.
#[test]
fn gammatone_envelope_tracks_generative_modulator() {
    let r = story_envelope_r(EnvelopeMethod::default());
    assert!(r > 0.7, "{r}");
}

#[test]
fn silence_stays_silent() {
    let audio = MultichannelSignal::mono(vec![0.0; 8192 * 3], 8192.0).unwrap();
    let env = extract_envelope(&audio, &BandDef::canonical(BandName::Broad), &EnvelopeConfig::default()).unwrap();
    assert!(env.channel(0).iter().all(|v| *v == 0.0));
}

fn matrix(rows: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 16..64), rows..=rows).prop_map(|mut m| {
        let n = m.iter().map(Vec::len).min().unwrap();
        for r in &mut m {
            r.truncate(n);
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fir_is_symmetric(low in 1.0f64..20.0, width in 2.0f64..40.0, half in 20usize..200) {
        let band = BandDef::custom(low, (low + width).min(120.0));
        let f = design_fir(&band, 256.0, 2 * half).unwrap();
        let c = f.coefficients();
        for i in 0..c.len() {
            prop_assert_eq!(c[i], c[c.len() - 1 - i]);
        }
    }

    #[test]
    fn filtering_is_linear(
        x in prop::collection::vec(-1.0f64..1.0, 300),
        y in prop::collection::vec(-1.0f64..1.0, 300),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let f = design_fir(&BandDef::canonical(BandName::Alpha), 64.0, 100).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let run = |v: Vec<f64>| apply_fir_compensated(&MultichannelSignal::mono(v, 64.0).unwrap(), &f).unwrap();
        let (fx, fy, fm) = (run(x), run(y), run(mix));
        let scale = fm.channel(0).iter().map(|v| v.abs()).fold(1e-12, f64::max);
        for i in 0..300 {
            let lin = a * fx.channel(0)[i] + b * fy.channel(0)[i];
            prop_assert!((fm.channel(0)[i] - lin).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn car_zeroes_every_sample_mean_and_is_idempotent(m in matrix(6)) {
        let s = MultichannelSignal::from_channels(m, 64.0).unwrap();
        let r = common_average_reference(&s).unwrap();
        for t in 0..r.n_samples() {
            let mean: f64 = (0..6).map(|c| r.channel(c)[t]).sum::<f64>() / 6.0;
            prop_assert!(mean.abs() < 1e-10);
        }
        let rr = common_average_reference(&r).unwrap();
        for (p, q) in r.data().iter().zip(rr.data()) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn zscore_standardises_and_is_idempotent(m in matrix(3)) {
        let s = MultichannelSignal::from_channels(m, 64.0).unwrap();
        let z = zscore(&s).unwrap();
        for c in z.channels() {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
        let zz = zscore(&z).unwrap();
        for (p, q) in z.data().iter().zip(zz.data()) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }
}
