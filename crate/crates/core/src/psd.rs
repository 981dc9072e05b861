//! Welch power spectral density estimation.
//!
//! Averaged windowed periodograms with a Hann window, FFT-shifted so DC sits
//! in the middle, and peak-normalized so the strongest bin reads 0 dB.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{fft_in_place, ComplexSignal};

/// One PSD estimate: `db[k]` is the peak-normalized power at `freq_hz[k]`.
#[derive(Debug, Clone)]
pub struct PsdEstimate {
    pub freq_hz: Vec<f64>,
    pub db: Vec<f64>,
    pub segments_averaged: usize,
}

impl PsdEstimate {
    /// Width of the region where the PSD stays at or above `threshold_db`,
    /// measured between the outermost crossing bins. Used to quantify
    /// nonlinearity-induced spectral broadening.
    pub fn bandwidth_at(&self, threshold_db: f64) -> f64 {
        let first = self.db.iter().position(|&d| d >= threshold_db);
        let last = self.db.iter().rposition(|&d| d >= threshold_db);
        match (first, last) {
            (Some(a), Some(b)) if b > a => self.freq_hz[b] - self.freq_hz[a],
            _ => 0.0,
        }
    }
}

/// Periodic Hann window of length `n`.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Welch PSD of `sig` using Hann-windowed segments of `segment_len` samples
/// with fractional `overlap` in `[0, 1)`.
pub fn welch_psd(sig: &ComplexSignal, segment_len: usize, overlap: f64) -> Result<PsdEstimate> {
    if segment_len == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    if segment_len > sig.len() {
        return Err(Error::invalid(format!(
            "segment length {} exceeds signal length {}",
            segment_len,
            sig.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap must be in [0, 1)"));
    }

    let window = hann(segment_len);
    let hop = ((segment_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;

    let mut acc = vec![0.0f64; segment_len];
    let mut buf = vec![Complex64::ZERO; segment_len];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + segment_len <= sig.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = sig.samples[start + i] * window[i];
        }
        fft_in_place(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    // Shift so DC is centered; index j then corresponds to frequency
    // (j - floor(n/2)) * df.
    let n = segment_len;
    let shift = n.div_ceil(2);
    let offset = (n / 2) as f64;
    let shifted: Vec<f64> = (0..n).map(|j| acc[(j + shift) % n]).collect();

    let peak = shifted.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::degenerate(
            "cannot normalize PSD of an all-zero signal",
        ));
    }
    let db: Vec<f64> = shifted
        .iter()
        .map(|&v| 10.0 * (v / peak).max(1e-300).log10())
        .collect();

    let df = sig.sample_rate / n as f64;
    let freq_hz: Vec<f64> = (0..n).map(|j| (j as f64 - offset) * df).collect();

    Ok(PsdEstimate {
        freq_hz,
        db,
        segments_averaged: segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn pure_tone_peaks_at_tone_frequency() {
        let fs = 1024.0;
        let f0 = 128.0;
        let n = 4096;
        let samples: Vec<Complex64> = (0..n)
            .map(|t| Complex64::from_polar(1.0, 2.0 * PI * f0 * t as f64 / fs))
            .collect();
        let sig = ComplexSignal::new(samples, fs).unwrap();
        let psd = welch_psd(&sig, 512, 0.5).unwrap();
        let (imax, _) = psd
            .db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!((psd.freq_hz[imax] - f0).abs() < fs / 512.0);
        assert_eq!(psd.db[imax], 0.0);
    }

    #[test]
    fn white_noise_is_flat() {
        let mut rng = StdRng::seed_from_u64(99);
        let n = 200 * 256; // >= 100 averaged segments at 50% overlap
        let samples: Vec<Complex64> = (0..n)
            .map(|_| {
                Complex64::new(
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                )
            })
            .collect();
        let sig = ComplexSignal::new(samples, 1.0).unwrap();
        let psd = welch_psd(&sig, 256, 0.5).unwrap();
        assert!(psd.segments_averaged >= 100);
        for &d in &psd.db {
            assert!(d > -2.0 && d <= 0.0, "bin deviates from flat: {d} dB");
        }
    }

    #[test]
    fn two_tone_level_difference() {
        let fs = 1024.0;
        let seg = 512;
        let n = 16 * seg;
        // Both tones on exact segment bins; amplitudes 1 and 0.1 (-20 dB).
        let f1 = 64.0;
        let f2 = -128.0;
        let samples: Vec<Complex64> = (0..n)
            .map(|t| {
                let t = t as f64 / fs;
                Complex64::from_polar(1.0, 2.0 * PI * f1 * t)
                    + Complex64::from_polar(0.1, 2.0 * PI * f2 * t)
            })
            .collect();
        let sig = ComplexSignal::new(samples, fs).unwrap();
        let psd = welch_psd(&sig, seg, 0.5).unwrap();
        let at = |f: f64| -> f64 {
            let idx = psd
                .freq_hz
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - f).abs().partial_cmp(&(b.1 - f).abs()).unwrap())
                .unwrap()
                .0;
            psd.db[idx]
        };
        assert_eq!(at(f1), 0.0);
        assert!((at(f2) + 20.0).abs() < 0.5, "second tone at {} dB", at(f2));
    }

    #[test]
    fn all_pass_dispersion_leaves_psd_unchanged() {
        // A dispersion-only channel is all-pass: input and output spectra
        // agree bin by bin well inside the averaging noise.
        use crate::channel::{ssfm_propagate, ChannelConfig};
        let cfg = ChannelConfig { f_sim_hz: 160e9, bw_hz: 20e9, n_ssfm_steps: 1, ..Default::default() }
            .with_impairments(false, true, false);
        let mut rng = StdRng::seed_from_u64(17);
        let n = 1 << 17;
        let samples: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let x = ComplexSignal::new(samples, cfg.f_sim_hz).unwrap();
        let y = ssfm_propagate(&x, &cfg, 0).unwrap();
        let px = welch_psd(&x, 1024, 0.5).unwrap();
        let py = welch_psd(&y, 1024, 0.5).unwrap();
        for (a, b) in px.db.iter().zip(&py.db) {
            assert!((a - b).abs() < 0.5, "all-pass PSD deviates: {a} vs {b} dB");
        }
    }

    #[test]
    fn invalid_arguments_rejected() {
        let sig = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 64], 1.0).unwrap();
        assert!(welch_psd(&sig, 0, 0.5).is_err());
        assert!(welch_psd(&sig, 128, 0.5).is_err());
        assert!(welch_psd(&sig, 32, 1.0).is_err());
    }
}
