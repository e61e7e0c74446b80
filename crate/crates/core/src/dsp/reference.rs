//! Common-average referencing and z-scoring.

use crate::error::{invalid, Error, Result};
use crate::signal::MultichannelSignal;

/// Subtracts the per-sample mean over channels from every channel.
pub fn common_average_reference(eeg: &MultichannelSignal) -> Result<MultichannelSignal> {
    let (nc, n) = (eeg.n_channels(), eeg.n_samples());
    if nc < 2 {
        return Err(invalid("common average reference needs at least two channels"));
    }
    let mut mean = vec![0.0; n];
    for ch in eeg.channels() {
        for (m, v) in mean.iter_mut().zip(ch) {
            *m += v;
        }
    }
    let inv = 1.0 / nc as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut data = eeg.data().to_vec();
    for ch in data.chunks_exact_mut(n.max(1)) {
        for (v, m) in ch.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    Ok(eeg.with_data(data, n, eeg.fs()))
}

/// Per-channel standardisation to mean 0 and population standard
/// deviation 1.
pub fn zscore(signal: &MultichannelSignal) -> Result<MultichannelSignal> {
    let n = signal.n_samples();
    if n == 0 {
        return Err(invalid("cannot z-score an empty signal"));
    }
    let mut data = signal.data().to_vec();
    for (c, ch) in data.chunks_exact_mut(n).enumerate() {
        let mean = ch.iter().sum::<f64>() / n as f64;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        let scale = ch.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(std > 1e-12 * scale) || scale == 0.0 {
            return Err(Error::ConstantChannel { channel: signal.channel_name(c) });
        }
        for v in ch.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
    Ok(signal.with_data(data, n, signal.fs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn car_hand_example() {
        let s = MultichannelSignal::from_channels(vec![vec![1.0, 1.0], vec![3.0, 3.0]], 64.0).unwrap();
        let r = common_average_reference(&s).unwrap();
        assert_eq!(r.channel(0), &[-1.0, -1.0]);
        assert_eq!(r.channel(1), &[1.0, 1.0]);
    }

    #[test]
    fn car_needs_two_channels() {
        let s = MultichannelSignal::mono(vec![1.0, 2.0], 64.0).unwrap();
        assert!(common_average_reference(&s).is_err());
    }

    #[test]
    fn two_point_zscore() {
        let s = MultichannelSignal::mono(vec![0.0, 2.0], 64.0).unwrap();
        assert_eq!(zscore(&s).unwrap().channel(0), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_channel_is_named() {
        let s = MultichannelSignal::from_channels(vec![vec![0.0, 2.0], vec![5.0, 5.0]], 64.0)
            .unwrap()
            .with_labels(vec!["Fz".into(), "Oz".into()])
            .unwrap();
        match zscore(&s) {
            Err(Error::ConstantChannel { channel }) => assert_eq!(channel, "Oz"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
