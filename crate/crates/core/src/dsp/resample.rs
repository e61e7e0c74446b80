//! Integer-factor decimation with a least-squares anti-alias filter.

use super::fir::{design_fir, BandDef};
use crate::error::{invalid, Result};
use crate::signal::MultichannelSignal;

/// Anti-alias cutoff relative to the target rate.
pub const ANTI_ALIAS_CUTOFF: f64 = 0.45;

/// Anti-alias filter order per unit of decimation factor.
pub const ANTI_ALIAS_ORDER_PER_FACTOR: usize = 40;

/// Integer decimation factor from `fs` to `to_fs`.
pub fn decimation_factor(fs: f64, to_fs: f64) -> Result<usize> {
    if !(to_fs.is_finite() && to_fs > 0.0) {
        return Err(invalid(format!("target rate must be positive, got {to_fs}")));
    }
    if to_fs > fs {
        return Err(invalid(format!("cannot upsample from {fs} Hz to {to_fs} Hz")));
    }
    let ratio = fs / to_fs;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-9 * ratio {
        return Err(invalid(format!(
            "{fs} Hz to {to_fs} Hz is not an integer decimation (ratio {ratio})"
        )));
    }
    Ok(factor as usize)
}

/// Downsamples by an integer factor. The input is lowpassed at
/// `0.45 * to_fs` (order `8 * factor`, delay-compensated) and every
/// `factor`-th sample is kept, starting with the first; the output has
/// `ceil(n / factor)` samples.
pub fn resample(signal: &MultichannelSignal, to_fs: f64) -> Result<MultichannelSignal> {
    let factor = decimation_factor(signal.fs(), to_fs)?;
    if factor == 1 {
        return Ok(signal.clone());
    }
    let order = ANTI_ALIAS_ORDER_PER_FACTOR * factor;
    let filter = design_fir(&BandDef::lowpass(ANTI_ALIAS_CUTOFF * to_fs), signal.fs(), order)?;
    let h = filter.coefficients();
    let shift = filter.delay() as isize;
    let n = signal.n_samples();
    let out_len = n.div_ceil(factor);
    let mut data = Vec::with_capacity(out_len * signal.n_channels());
    for x in signal.channels() {
        for m in 0..out_len {
            // y[m] = sum_k h[k] x[m * factor + shift - k], only at kept samples
            let centre = (m * factor) as isize + shift;
            let k_lo = (centre - (n as isize - 1)).max(0) as usize;
            let k_hi = (centre.min(order as isize)) as usize;
            let mut acc = 0.0;
            for k in k_lo..=k_hi {
                acc += h[k] * x[(centre - k as isize) as usize];
            }
            data.push(acc);
        }
    }
    Ok(signal.with_data(data, out_len, to_fs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_when_rates_match() {
        let s = MultichannelSignal::mono(vec![1.0, 2.0, 3.0], 64.0).unwrap();
        assert_eq!(resample(&s, 64.0).unwrap(), s);
    }

    #[test]
    fn rejects_upsampling_and_fractional_factors() {
        let s = MultichannelSignal::mono(vec![0.0; 100], 512.0).unwrap();
        assert!(resample(&s, 1024.0).is_err());
        assert!(resample(&s, 100.0).is_err());
    }

    #[test]
    fn preserves_duration_through_both_stages() {
        let n = 8192 * 3;
        let s = MultichannelSignal::mono(vec![0.0; n], 8192.0).unwrap();
        let a = resample(&s, 512.0).unwrap();
        assert_eq!(a.n_samples(), 3 * 512);
        let b = resample(&a, 64.0).unwrap();
        assert_eq!(b.fs(), 64.0);
        assert_eq!(b.n_samples(), 3 * 64);
        let odd = MultichannelSignal::mono(vec![0.0; 1001], 512.0).unwrap();
        let r = resample(&odd, 64.0).unwrap();
        assert!((r.duration_s() - odd.duration_s()).abs() <= 1.0 / 64.0);
    }

    #[test]
    fn sub_nyquist_tone_keeps_amplitude() {
        let fs = 512.0;
        let x: Vec<f64> = (0..512 * 20).map(|i| (2.0 * PI * 5.0 * i as f64 / fs).sin()).collect();
        let y = resample(&MultichannelSignal::mono(x, fs).unwrap(), 64.0).unwrap();
        // Compare against the ideal samples away from the edges.
        let ch = y.channel(0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (m, v) in ch.iter().enumerate().skip(64).take(ch.len() - 128) {
            let ideal = (2.0 * PI * 5.0 * m as f64 / 64.0).sin();
            num += v * ideal;
            den += ideal * ideal;
        }
        let gain = num / den;
        assert!((gain - 1.0).abs() < 0.02, "gain {gain}");
    }
}
