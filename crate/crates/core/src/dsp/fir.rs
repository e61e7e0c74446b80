//! Linear-phase least-squares FIR design and delay-compensated filtering.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::convolve::filter_rows;
use crate::error::{invalid, Error, Result};
use crate::signal::MultichannelSignal;

/// Width of each transition band as a fraction of its edge frequency.
pub const TRANSITION_FRACTION: f64 = 0.1;

/// Design grid density relative to the number of free coefficients.
const GRID_OVERSAMPLING: usize = 16;

/// Weight of the linear ramp fitted across each transition band, relative
/// to the unit weight of the pass and stop bands. Without it the response
/// inside wide transition bands is unconstrained and long filters can
/// reach gains of 1e4 there.
pub const TRANSITION_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandName {
    Delta,
    Theta,
    Alpha,
    Beta,
    Broad,
    Custom,
}

impl BandName {
    /// The five analysis bands in canonical order.
    pub const ANALYSIS: [BandName; 5] =
        [BandName::Delta, BandName::Theta, BandName::Alpha, BandName::Beta, BandName::Broad];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Delta => "delta",
            BandName::Theta => "theta",
            BandName::Alpha => "alpha",
            BandName::Beta => "beta",
            BandName::Broad => "broad",
            BandName::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "delta" => BandName::Delta,
            "theta" => BandName::Theta,
            "alpha" => BandName::Alpha,
            "beta" => BandName::Beta,
            "broad" => BandName::Broad,
            _ => return None,
        })
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A passband `[low_hz, high_hz]`. `low_hz == 0` designs a lowpass and
/// `high_hz == fs / 2` a highpass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDef {
    pub name: BandName,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandDef {
    pub fn canonical(name: BandName) -> Self {
        let (low_hz, high_hz) = match name {
            BandName::Delta => (0.5, 4.0),
            BandName::Theta => (4.0, 8.0),
            BandName::Alpha => (8.0, 12.0),
            BandName::Beta => (12.0, 25.0),
            BandName::Broad => (0.5, 32.0),
            BandName::Custom => panic!("custom bands have no canonical edges"),
        };
        Self { name, low_hz, high_hz }
    }

    pub fn custom(low_hz: f64, high_hz: f64) -> Self {
        Self { name: BandName::Custom, low_hz, high_hz }
    }

    pub fn lowpass(cutoff_hz: f64) -> Self {
        Self::custom(0.0, cutoff_hz)
    }

    /// Checks the edges against a sampling rate.
    pub fn validate(&self, fs: f64) -> Result<()> {
        let nyquist = fs / 2.0;
        if !(self.low_hz.is_finite() && self.high_hz.is_finite()) {
            return Err(invalid("band edges must be finite"));
        }
        if self.low_hz >= self.high_hz {
            return Err(invalid(format!(
                "degenerate band {}-{} Hz (low must be below high)",
                self.low_hz, self.high_hz
            )));
        }
        if self.low_hz < 0.0 || self.high_hz > nyquist {
            return Err(invalid(format!(
                "band {}-{} Hz outside (0, {nyquist}) Hz",
                self.low_hz, self.high_hz
            )));
        }
        if self.low_hz == 0.0 && self.high_hz == nyquist {
            return Err(invalid("band covers the whole spectrum"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    coefficients: Vec<f64>,
    order: usize,
    band: BandDef,
    fs_designed: f64,
}

impl FirFilter {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn band(&self) -> BandDef {
        self.band
    }

    pub fn fs(&self) -> f64 {
        self.fs_designed
    }

    /// Group delay in samples.
    pub fn delay(&self) -> usize {
        self.order / 2
    }

    /// |H(f)| by direct evaluation of the transfer function.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / self.fs_designed;
        let (re, im) = self
            .coefficients
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, &h)| {
                let (s, c) = (w * n as f64).sin_cos();
                (re + h * c, im - h * s)
            });
        re.hypot(im)
    }
}

/// Sum of `cos(j * phi)` for `j` in `a..=b`.
fn cos_sum(a: usize, b: usize, phi: f64) -> f64 {
    let s = (0.5 * phi).sin();
    if s.abs() < 1e-300 {
        return (b - a + 1) as f64;
    }
    (((b as f64 + 0.5) * phi).sin() - ((a as f64 - 0.5) * phi).sin()) / (2.0 * s)
}

/// Index range of grid points whose frequency lies in `[lo, hi]`.
fn grid_range(lo: f64, hi: f64, df: f64, points: usize) -> Option<(usize, usize)> {
    let a = (lo / df - 1e-9).ceil().max(0.0) as usize;
    let b = ((hi / df + 1e-9).floor() as usize).min(points - 1);
    (a <= b).then_some((a, b))
}

/// Designs a linear-phase (type I) least-squares FIR filter.
///
/// The amplitude response is fitted on a uniform grid of
/// `16 * (order / 2 + 1)` frequencies with unit weight in the passband and
/// stopbands. Transition bands extend 10% of each edge frequency outward
/// (`0.9 * low` to `low`, `high` to `1.1 * high`), where a linear ramp is
/// fitted with weight [`TRANSITION_WEIGHT`].
pub fn design_fir(band: &BandDef, fs: f64, order: usize) -> Result<FirFilter> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(invalid(format!("sampling rate must be positive, got {fs}")));
    }
    if order == 0 || order % 2 != 0 {
        return Err(invalid(format!("filter order must be even and positive, got {order}")));
    }
    band.validate(fs)?;

    let half = order / 2;
    let n_coef = half + 1;
    let points = GRID_OVERSAMPLING * n_coef;
    let nyquist = fs / 2.0;
    let df = nyquist / (points - 1) as f64;
    let theta = std::f64::consts::PI / (points - 1) as f64;

    let pass = grid_range(band.low_hz, band.high_hz, df, points)
        .ok_or_else(|| invalid("passband narrower than the design grid"))?;
    let mut stops = Vec::new();
    // (first grid index, last grid index, desired at the first, at the last)
    let mut ramps = Vec::new();
    if band.low_hz > 0.0 {
        let stop_edge = (1.0 - TRANSITION_FRACTION) * band.low_hz;
        if let Some(r) = grid_range(0.0, stop_edge, df, points) {
            stops.push(r);
        }
        if let Some((a, b)) = grid_range(stop_edge, band.low_hz, df, points) {
            ramps.push((a, b, stop_edge, band.low_hz, 0.0, 1.0));
        }
    }
    let upper_edge = (1.0 + TRANSITION_FRACTION) * band.high_hz;
    if band.high_hz < nyquist && upper_edge < nyquist {
        if let Some(r) = grid_range(upper_edge, nyquist, df, points) {
            stops.push(r);
        }
        if let Some((a, b)) = grid_range(band.high_hz, upper_edge, df, points) {
            ramps.push((a, b, band.high_hz, upper_edge, 1.0, 0.0));
        }
    }

    // Weighted sums of cos(m * w_j) over the grid, for m = 0..=2 * half.
    let weighted: Vec<f64> = (0..=2 * half)
        .map(|m| {
            let phi = m as f64 * theta;
            std::iter::once(pass)
                .chain(stops.iter().copied())
                .map(|(a, b)| cos_sum(a, b, phi))
                .sum::<f64>()
                + TRANSITION_WEIGHT * ramps.iter().map(|r| cos_sum(r.0, r.1, phi)).sum::<f64>()
        })
        .collect();
    let gram = DMatrix::from_fn(n_coef, n_coef, |k, l| {
        0.5 * (weighted[k.abs_diff(l)] + weighted[k + l])
    });
    let rhs = DVector::from_fn(n_coef, |k, _| {
        let mut v = cos_sum(pass.0, pass.1, k as f64 * theta);
        for &(a, b, f0, f1, d0, d1) in &ramps {
            for j in a..=b {
                let t = ((j as f64 * df - f0) / (f1 - f0)).clamp(0.0, 1.0);
                v += TRANSITION_WEIGHT * (d0 + (d1 - d0) * t) * (k as f64 * j as f64 * theta).cos();
            }
        }
        v
    });

    let amp = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("least-squares normal equations are singular".into()))?,
    };
    if amp.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares design produced non-finite taps".into()));
    }

    let mut coefficients = vec![0.0; order + 1];
    coefficients[half] = amp[0];
    for k in 1..=half {
        coefficients[half - k] = 0.5 * amp[k];
        coefficients[half + k] = 0.5 * amp[k];
    }
    Ok(FirFilter { coefficients, order, band: *band, fs_designed: fs })
}

/// Filters every channel and advances the result by the group delay
/// (`order / 2` samples), so the output is time-aligned with the input and
/// has the same length. Samples beyond the edges are treated as zero.
pub fn apply_fir_compensated(
    signal: &MultichannelSignal,
    filter: &FirFilter,
) -> Result<MultichannelSignal> {
    Ok(apply_fir_bank(signal, std::slice::from_ref(filter))?.remove(0))
}

/// [`apply_fir_compensated`] for several filters at once, sharing the
/// forward transforms of the input.
pub fn apply_fir_bank(
    signal: &MultichannelSignal,
    filters: &[FirFilter],
) -> Result<Vec<MultichannelSignal>> {
    for f in filters {
        if (f.fs_designed - signal.fs()).abs() > 1e-9 * signal.fs() {
            return Err(Error::RateMismatch { expected: f.fs_designed, actual: signal.fs() });
        }
    }
    let taps: Vec<(&[f64], usize)> =
        filters.iter().map(|f| (f.coefficients.as_slice(), f.delay())).collect();
    let outputs = filter_rows(signal.data(), signal.n_samples(), &taps);
    Ok(outputs
        .into_iter()
        .map(|data| signal.with_data(data, signal.n_samples(), signal.fs()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_designs() {
        let theta = BandDef::canonical(BandName::Theta);
        assert!(design_fir(&theta, 512.0, 201).is_err());
        assert!(design_fir(&theta, 512.0, 0).is_err());
        assert!(design_fir(&BandDef::custom(8.0, 4.0), 512.0, 200).is_err());
        assert!(design_fir(&BandDef::custom(4.0, 300.0), 512.0, 200).is_err());
        assert!(design_fir(&BandDef::custom(-1.0, 8.0), 512.0, 200).is_err());
        assert!(design_fir(&BandDef::custom(0.0, 256.0), 512.0, 200).is_err());
    }

    #[test]
    fn coefficients_are_exactly_symmetric() {
        for (band, fs, order) in [
            (BandDef::canonical(BandName::Beta), 512.0, 400),
            (BandDef::canonical(BandName::Broad), 64.0, 250),
            (BandDef::lowpass(28.8), 512.0, 64),
        ] {
            let f = design_fir(&band, fs, order).unwrap();
            let h = f.coefficients();
            assert_eq!(h.len(), order + 1);
            for i in 0..=order {
                assert_eq!(h[i], h[order - i]);
            }
        }
    }

    #[test]
    fn broadband_at_nyquist_is_a_highpass() {
        let f = design_fir(&BandDef::canonical(BandName::Broad), 64.0, 250).unwrap();
        // 250 taps cannot resolve a 0.05 Hz transition, so only partial DC rejection
        assert!(f.magnitude_at(0.0) < 0.1);
        assert!((f.magnitude_at(10.0) - 1.0).abs() < 0.05);
        assert!((f.magnitude_at(30.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn lowpass_has_unit_dc_gain() {
        let f = design_fir(&BandDef::lowpass(40.0), 512.0, 200).unwrap();
        assert!((f.magnitude_at(0.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn impulse_stays_in_place() {
        let f = design_fir(&BandDef::canonical(BandName::Theta), 128.0, 200).unwrap();
        let mut x = vec![0.0; 600];
        x[317] = 1.0;
        let s = MultichannelSignal::mono(x, 128.0).unwrap();
        let y = apply_fir_compensated(&s, &f).unwrap();
        let peak = y
            .channel(0)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 317);
        assert_eq!(y.n_samples(), 600);
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let f = design_fir(&BandDef::canonical(BandName::Theta), 128.0, 100).unwrap();
        let s = MultichannelSignal::mono(vec![0.0; 300], 256.0).unwrap();
        assert!(matches!(apply_fir_compensated(&s, &f), Err(Error::RateMismatch { .. })));
    }
}
