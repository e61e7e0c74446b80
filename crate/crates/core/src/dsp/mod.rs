//! Deterministic signal-processing primitives and the EEG preprocessing
//! chain built from them.

mod convolve;
pub mod envelope;
pub mod fir;
pub mod reference;
pub mod resample;

pub use envelope::{extract_envelope, extract_envelopes, EnvelopeConfig, EnvelopeMethod};
pub use fir::{apply_fir_bank, apply_fir_compensated, design_fir, BandDef, BandName, FirFilter};
pub use reference::{common_average_reference, zscore};
pub use resample::resample;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::MultichannelSignal;

/// Hook for artifact removal (e.g. ICA-based ocular correction). Runs on
/// the raw recording before referencing.
pub trait ArtifactRemoval: Send + Sync {
    fn clean(&self, eeg: MultichannelSignal) -> Result<MultichannelSignal>;
}

/// Leaves the recording untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoArtifactRemoval;

impl ArtifactRemoval for NoArtifactRemoval {
    fn clean(&self, eeg: MultichannelSignal) -> Result<MultichannelSignal> {
        Ok(eeg)
    }
}

/// Rates and filter length of the EEG chain.
///
/// `filter_order` is specified at `reference_fs`; when the band filter runs
/// at another rate the order is scaled to keep the same duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub intermediate_fs: f64,
    pub out_fs: f64,
    pub filter_order: usize,
    pub reference_fs: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { intermediate_fs: 512.0, out_fs: 64.0, filter_order: 2000, reference_fs: 512.0 }
    }
}

impl PreprocessConfig {
    /// Even filter order for a band filter running at `fs`.
    pub fn order_at(&self, fs: f64) -> usize {
        let scaled = (self.filter_order as f64 * fs / self.reference_fs / 2.0).round() as usize * 2;
        scaled.max(2)
    }

    /// Samples at each edge of the output that carry filter transients.
    pub fn edge_samples(&self, filter_fs: f64) -> usize {
        let delay_s = (self.order_at(filter_fs) / 2) as f64 / filter_fs;
        (delay_s * self.out_fs).ceil() as usize
    }
}

/// EEG preprocessing: artifact hook, downsampling to the intermediate
/// rate, common-average reference, band filtering, z-scoring and
/// downsampling to the output rate. Recordings already at or below the
/// intermediate rate are filtered at their own rate.
pub struct EegPreprocessor {
    pub config: PreprocessConfig,
    pub artifacts: Box<dyn ArtifactRemoval>,
}

impl Default for EegPreprocessor {
    fn default() -> Self {
        Self { config: PreprocessConfig::default(), artifacts: Box::new(NoArtifactRemoval) }
    }
}

impl EegPreprocessor {
    pub fn new(config: PreprocessConfig) -> Self {
        Self { config, artifacts: Box::new(NoArtifactRemoval) }
    }

    /// Rate at which band filters run for a recording sampled at `fs`.
    pub fn filter_fs(&self, fs: f64) -> f64 {
        fs.min(self.config.intermediate_fs)
    }

    /// Runs the rate-independent head of the chain (artifacts, downsampling,
    /// referencing) once, for reuse across bands.
    pub fn reference(&self, raw: MultichannelSignal) -> Result<MultichannelSignal> {
        let cleaned = self.artifacts.clean(raw)?;
        let fs = self.filter_fs(cleaned.fs());
        let down = if fs < cleaned.fs() { resample(&cleaned, fs)? } else { cleaned };
        common_average_reference(&down)
    }

    /// Filters a referenced recording into each band, then z-scores and
    /// downsamples every band to the output rate.
    pub fn bands(
        &self,
        referenced: &MultichannelSignal,
        bands: &[BandDef],
    ) -> Result<Vec<MultichannelSignal>> {
        let fs = referenced.fs();
        if fs < self.config.out_fs {
            return Err(invalid(format!(
                "recording at {fs} Hz is below the output rate {} Hz",
                self.config.out_fs
            )));
        }
        let order = self.config.order_at(fs);
        let filters = bands.iter().map(|b| design_fir(b, fs, order)).collect::<Result<Vec<_>>>()?;
        apply_fir_bank(referenced, &filters)?
            .iter()
            .map(|s| resample(&zscore(s)?, self.config.out_fs))
            .collect()
    }

    pub fn run(&self, raw: MultichannelSignal, band: &BandDef) -> Result<MultichannelSignal> {
        let referenced = self.reference(raw)?;
        Ok(self.bands(&referenced, std::slice::from_ref(band))?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_scales_with_filter_rate() {
        let c = PreprocessConfig::default();
        assert_eq!(c.order_at(512.0), 2000);
        assert_eq!(c.order_at(64.0), 250);
        assert_eq!(c.edge_samples(512.0), 125);
        assert_eq!(c.edge_samples(64.0), 125);
    }
}
