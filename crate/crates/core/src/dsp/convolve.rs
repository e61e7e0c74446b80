//! Delay-compensated FIR convolution, direct and FFT-based.
//!
//! Both paths compute `y[n] = sum_k h[k] * x[n + shift - k]` with zeros
//! outside the input, for `n` in `0..x.len()`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Above this many multiply-adds per channel the FFT path is used.
const DIRECT_LIMIT: usize = 1 << 21;

pub(crate) fn convolve_direct(x: &[f64], h: &[f64], shift: usize, y: &mut [f64]) {
    let n = x.len();
    debug_assert_eq!(y.len(), n);
    y.iter_mut().for_each(|v| *v = 0.0);
    for (k, &hk) in h.iter().enumerate() {
        if hk == 0.0 {
            continue;
        }
        // y[i] += hk * x[i + shift - k]
        let off = shift as isize - k as isize;
        let lo = (-off).max(0) as usize;
        let hi = ((n as isize) - off).min(n as isize).max(0) as usize;
        if lo >= hi {
            continue;
        }
        let src = &x[(lo as isize + off) as usize..(hi as isize + off) as usize];
        for (yi, xi) in y[lo..hi].iter_mut().zip(src) {
            *yi += hk * xi;
        }
    }
}

/// Filters every channel (rows of length `n`) with every filter, sharing
/// one forward transform per pair of channels. Returns one output buffer
/// per filter, laid out like the input.
pub(crate) fn filter_rows(
    data: &[f64],
    n: usize,
    filters: &[(&[f64], usize)],
) -> Vec<Vec<f64>> {
    let rows = if n == 0 { 0 } else { data.len() / n };
    let mut out = vec![vec![0.0; data.len()]; filters.len()];
    if rows == 0 || filters.is_empty() {
        return out;
    }
    let max_len = filters.iter().map(|(h, _)| h.len()).max().unwrap_or(1);
    if max_len * n <= DIRECT_LIMIT {
        for (fi, (h, shift)) in filters.iter().enumerate() {
            for r in 0..rows {
                convolve_direct(&data[r * n..(r + 1) * n], h, *shift, &mut out[fi][r * n..(r + 1) * n]);
            }
        }
        return out;
    }

    let size = (n + max_len - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let scale = 1.0 / size as f64;
    let spectra: Vec<Vec<Complex<f64>>> = filters
        .iter()
        .map(|(h, _)| {
            let mut buf = vec![Complex::new(0.0, 0.0); size];
            for (b, &v) in buf.iter_mut().zip(h.iter()) {
                b.re = v * scale;
            }
            fwd.process(&mut buf);
            buf
        })
        .collect();

    let mut spec = vec![Complex::new(0.0, 0.0); size];
    let mut work = vec![Complex::new(0.0, 0.0); size];
    let mut r = 0;
    while r < rows {
        // Two real rows share one complex transform (real and imaginary part).
        let pair = r + 1 < rows;
        spec.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, v) in data[r * n..(r + 1) * n].iter().enumerate() {
            spec[i].re = *v;
        }
        if pair {
            for (i, v) in data[(r + 1) * n..(r + 2) * n].iter().enumerate() {
                spec[i].im = *v;
            }
        }
        fwd.process(&mut spec);
        for (fi, (_, shift)) in filters.iter().enumerate() {
            for ((w, s), hspec) in work.iter_mut().zip(&spec).zip(&spectra[fi]) {
                *w = s * hspec;
            }
            inv.process(&mut work);
            let dst = &mut out[fi];
            for i in 0..n {
                dst[r * n + i] = work[i + shift].re;
            }
            if pair {
                for i in 0..n {
                    dst[(r + 1) * n + i] = work[i + shift].im;
                }
            }
        }
        r += 2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_path_matches_direct_path() {
        let n = 5000;
        let x: Vec<f64> = (0..3 * n).map(|i| ((i * 7919) % 113) as f64 / 50.0 - 1.0).collect();
        let h: Vec<f64> = (0..801).map(|i| ((i * 31) % 17) as f64 / 17.0 - 0.5).collect();
        let out = filter_rows(&x, n, &[(&h, 400)]);
        let mut y = vec![0.0; n];
        for r in 0..3 {
            convolve_direct(&x[r * n..(r + 1) * n], &h, 400, &mut y);
            for i in 0..n {
                assert!((y[i] - out[0][r * n + i]).abs() < 1e-9, "row {r} sample {i}");
            }
        }
    }

    #[test]
    fn direct_shift_aligns_impulse() {
        let mut x = vec![0.0; 9];
        x[4] = 1.0;
        let h = [0.25, 0.5, 0.25];
        let mut y = vec![0.0; 9];
        convolve_direct(&x, &h, 1, &mut y);
        assert_eq!(y, vec![0.0, 0.0, 0.0, 0.25, 0.5, 0.25, 0.0, 0.0, 0.0]);
    }
}
