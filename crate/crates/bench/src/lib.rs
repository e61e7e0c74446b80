//! Seeded inputs shared by the benchmarks.

use neurotrack::classify::TrackingProfile;
use neurotrack::cohortsim::Group;
use neurotrack::speechfeat::FeatureName;
use neurotrack::MultichannelSignal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn noise(channels: usize, samples: usize, fs: f64, seed: u64) -> MultichannelSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..channels).map(|_| (0..samples).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    MultichannelSignal::from_channels(rows, fs).expect("well-formed")
}

/// A cohort of profiles in which patients score `shift` lower.
pub fn profiles(n_controls: usize, n_patients: usize, shift: f64, seed: u64) -> Vec<TrackingProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_controls + n_patients)
        .map(|i| {
            let group = if i < n_controls { Group::Control } else { Group::Patient };
            let base = if group == Group::Patient { 0.8 - shift } else { 0.8 };
            let acc = FeatureName::ALL.iter().map(|f| (*f, (base + 0.1 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0))).collect();
            TrackingProfile::new(&format!("s{i:02}"), group, 60.0 + 20.0 * rng.random::<f64>(), acc).expect("valid")
        })
        .collect()
}
