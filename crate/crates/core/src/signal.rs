//! Complex-baseband signal primitives shared by the channel model, the
//! conventional DSP chain and the trainable transceiver.
//!
//! Conventions pinned here and relied upon everywhere else:
//!
//! * All block processing is **circular** (periodic): filters are circular
//!   convolutions and the FFT grid is the natural frequency grid of the block.
//! * The FFT is **unitary** (`1/sqrt(N)` in both directions), so Parseval
//!   holds without bookkeeping and the adjoint of the forward transform is
//!   the inverse transform.
//! * Frequencies are signed baseband frequencies `f in [-fs/2, fs/2)` with DC
//!   at bin 0 before any shift.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// A uniformly sampled complex baseband waveform.
///
/// Samples are dimensionless field amplitudes whose squared magnitude is an
/// instantaneous power in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    /// Sample rate in Hz.
    pub sample_rate: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("signal must be non-empty"));
        }
        if !sample_rate.is_finite() || sample_rate <= 0.0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean power `(1/N) * sum |x_i|^2` in watts.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// Total energy `sum |x_i|^2`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// A block of symbol indices drawn from an alphabet of size `M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolBlock {
    pub indices: Vec<usize>,
    pub alphabet_size: usize,
}

impl SymbolBlock {
    pub fn new(indices: Vec<usize>, alphabet_size: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= alphabet_size) {
            return Err(Error::invalid(format!(
                "symbol index {bad} out of range for alphabet size {alphabet_size}"
            )));
        }
        Ok(Self {
            indices,
            alphabet_size,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Frequency-domain view of a block under the unitary transform convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin `k` holds the signed baseband frequency `bin_frequency(k)`.
    pub bins: Vec<Complex64>,
    /// Spacing between adjacent bins in Hz (`sample_rate / N`).
    pub bin_spacing: f64,
}

impl Spectrum {
    /// Signed baseband frequency of bin `k` (DC at bin 0, negative
    /// frequencies in the upper half).
    pub fn bin_frequency(&self, k: usize) -> f64 {
        signed_bin_frequency(k, self.bins.len(), self.bin_spacing)
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Signed frequency of bin `k` on an `n`-point grid with the given spacing.
pub fn signed_bin_frequency(k: usize, n: usize, spacing: f64) -> f64 {
    debug_assert!(k < n);
    if k <= (n - 1) / 2 {
        k as f64 * spacing
    } else {
        (k as f64 - n as f64) * spacing
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    // rustfft plans are cached per length; planning is deterministic, so
    // reusing plans never changes results.
    static FFT_PLANS: RefCell<HashMap<usize, PlanPair>> = RefCell::new(HashMap::new());
}

fn with_plan<R>(n: usize, inverse: bool, f: impl FnOnce(&Arc<dyn Fft<f64>>) -> R) -> R {
    FFT_PLANS.with(|plans| {
        let mut plans = plans.borrow_mut();
        let entry = plans.entry(n).or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        });
        if inverse {
            f(&entry.1)
        } else {
            f(&entry.0)
        }
    })
}

/// In-place unitary forward transform of a raw complex buffer.
pub fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    with_plan(n, false, |plan| plan.process(buf));
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// In-place unitary inverse transform of a raw complex buffer.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    with_plan(n, true, |plan| plan.process(buf));
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Unitary forward FFT. `ifft(fft(x)) == x` to machine precision and
/// Parseval's identity holds exactly up to rounding.
pub fn fft(sig: &ComplexSignal) -> Result<Spectrum> {
    if sig.is_empty() {
        return Err(Error::invalid("fft of empty signal"));
    }
    let mut bins = sig.samples.clone();
    fft_in_place(&mut bins);
    Ok(Spectrum {
        bins,
        bin_spacing: sig.sample_rate / sig.len() as f64,
    })
}

/// Unitary inverse FFT back to the time domain.
pub fn ifft(spec: &Spectrum) -> Result<ComplexSignal> {
    if spec.is_empty() {
        return Err(Error::invalid("ifft of empty spectrum"));
    }
    let mut samples = spec.bins.clone();
    ifft_in_place(&mut samples);
    let sample_rate = spec.bin_spacing * samples.len() as f64;
    ComplexSignal::new(samples, sample_rate)
}

/// Zero-insertion upsampling: `out[k*factor] = in[k]`, all other samples 0.
/// Energy is preserved exactly.
pub fn upsample(block: &[Complex64], factor: usize) -> Result<Vec<Complex64>> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be >= 1"));
    }
    let mut out = vec![Complex64::ZERO; block.len() * factor];
    for (k, &v) in block.iter().enumerate() {
        out[k * factor] = v;
    }
    Ok(out)
}

/// Strided downsampling: `out[k] = in[k*factor + offset]`.
pub fn downsample(samples: &[Complex64], factor: usize, offset: usize) -> Result<Vec<Complex64>> {
    if factor == 0 || offset >= factor {
        return Err(Error::invalid("require 0 <= offset < factor"));
    }
    if !samples.len().is_multiple_of(factor) {
        return Err(Error::invalid(format!(
            "signal length {} not divisible by factor {}",
            samples.len(),
            factor
        )));
    }
    Ok((0..samples.len() / factor)
        .map(|k| samples[k * factor + offset])
        .collect())
}

/// Circular FIR filtering over the block: `y[n] = sum_k taps[k] * x[(n - k) mod N]`.
///
/// Output length equals input length; linearity and circular shift
/// equivariance hold exactly.
pub fn fir_filter(samples: &[Complex64], taps: &[Complex64]) -> Result<Vec<Complex64>> {
    if taps.is_empty() {
        return Err(Error::invalid("taps must be non-empty"));
    }
    if taps.len() > samples.len() {
        return Err(Error::invalid(format!(
            "taps length {} exceeds signal length {}",
            taps.len(),
            samples.len()
        )));
    }
    let n = samples.len();
    let mut out = vec![Complex64::ZERO; n];
    for (k, &h) in taps.iter().enumerate() {
        if h == Complex64::ZERO {
            continue;
        }
        for (n_out, o) in out.iter_mut().enumerate() {
            let idx = (n_out + n - k) % n;
            *o += h * samples[idx];
        }
    }
    Ok(out)
}

/// Circular FIR with the tap at index `center` treated as the zero-delay tap,
/// so a symmetric tap vector leaves symbol alignment untouched.
pub fn fir_filter_centered(
    samples: &[Complex64],
    taps: &[Complex64],
    center: usize,
) -> Result<Vec<Complex64>> {
    let mut out = fir_filter(samples, taps)?;
    out.rotate_left(center % samples.len());
    Ok(out)
}

/// Ideal brickwall low-pass: bins with `|f| <= cutoff` pass with gain 1,
/// all others are zeroed. The sample rate is unchanged.
pub fn ideal_lowpass(sig: &ComplexSignal, cutoff: f64) -> Result<ComplexSignal> {
    if !cutoff.is_finite() || cutoff <= 0.0 || cutoff > sig.sample_rate / 2.0 {
        return Err(Error::invalid(format!(
            "cutoff {} Hz outside (0, {}] Hz",
            cutoff,
            sig.sample_rate / 2.0
        )));
    }
    let mut spec = fft(sig)?;
    let n = spec.len();
    for k in 0..n {
        if signed_bin_frequency(k, n, spec.bin_spacing).abs() > cutoff {
            spec.bins[k] = Complex64::ZERO;
        }
    }
    ifft(&spec)
}

/// 0/1 brickwall mask over an `n`-point grid at the given sample rate.
pub fn lowpass_mask(n: usize, sample_rate: f64, cutoff: f64) -> Vec<f64> {
    let spacing = sample_rate / n as f64;
    (0..n)
        .map(|k| {
            if signed_bin_frequency(k, n, spacing).abs() <= cutoff {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Rescale so that the mean power equals `target_power` exactly.
pub fn normalize_power(sig: &ComplexSignal, target_power: f64) -> Result<ComplexSignal> {
    if !target_power.is_finite() || target_power <= 0.0 {
        return Err(Error::invalid("target power must be positive"));
    }
    let p = sig.mean_power();
    if p <= 0.0 {
        return Err(Error::degenerate("cannot normalize an all-zero signal"));
    }
    let g = (target_power / p).sqrt();
    let samples = sig.samples.iter().map(|&s| s * g).collect();
    ComplexSignal::new(samples, sig.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_signal(n: usize, seed: u64) -> ComplexSignal {
        let mut rng = StdRng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexSignal::new(samples, 1.0).unwrap()
    }

    fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    /// Brute-force O(N^2) DFT with the same unitary convention, used as an
    /// independent oracle for the FFT path.
    fn dft_oracle(samples: &[Complex64]) -> Vec<Complex64> {
        let n = samples.len();
        let scale = 1.0 / (n as f64).sqrt();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::ZERO;
                for (t, &x) in samples.iter().enumerate() {
                    let phase = -2.0 * PI * (k * t) as f64 / n as f64;
                    acc += x * Complex64::from_polar(1.0, phase);
                }
                acc * scale
            })
            .collect()
    }

    #[test]
    fn fft_constant_signal_is_dc_only() {
        let sig = ComplexSignal::new(vec![c(1.0, 0.0); 4], 1.0).unwrap();
        let spec = fft(&sig).unwrap();
        assert!((spec.bins[0] - c(2.0, 0.0)).norm() < 1e-12);
        for k in 1..4 {
            assert!(spec.bins[k].norm() < 1e-12);
        }
    }

    #[test]
    fn fft_impulse_is_flat() {
        let mut samples = vec![Complex64::ZERO; 4];
        samples[0] = c(1.0, 0.0);
        let spec = fft(&ComplexSignal::new(samples, 1.0).unwrap()).unwrap();
        for b in &spec.bins {
            assert!((b - c(0.5, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn fft_matches_direct_dft_and_parseval() {
        let sig = random_signal(64, 7);
        let spec = fft(&sig).unwrap();
        let oracle = dft_oracle(&sig.samples);
        assert!(rel_l2(&spec.bins, &oracle) < 1e-12);

        let e_time: f64 = sig.samples.iter().map(|s| s.norm_sqr()).sum();
        let e_freq: f64 = spec.bins.iter().map(|b| b.norm_sqr()).sum();
        assert!((e_time - e_freq).abs() / e_time < 1e-12);
    }

    #[test]
    fn fft_non_power_of_two_round_trip() {
        for n in [3usize, 12, 100, 1000] {
            let sig = random_signal(n, n as u64);
            let back = ifft(&fft(&sig).unwrap()).unwrap();
            assert!(rel_l2(&back.samples, &sig.samples) < 1e-12);
        }
    }

    #[test]
    fn fft_round_trip_large() {
        let sig = random_signal(1 << 17, 3);
        let back = ifft(&fft(&sig).unwrap()).unwrap();
        assert!(rel_l2(&back.samples, &sig.samples) < 1e-12);
    }

    #[test]
    fn fft_empty_rejected() {
        assert!(ComplexSignal::new(vec![], 1.0).is_err());
    }

    #[test]
    fn upsample_zero_insertion() {
        let out = upsample(&[c(1.0, 2.0), c(3.0, 4.0)], 2).unwrap();
        assert_eq!(
            out,
            vec![c(1.0, 2.0), Complex64::ZERO, c(3.0, 4.0), Complex64::ZERO]
        );
        assert_eq!(upsample(&[c(5.0, 0.0)], 1).unwrap(), vec![c(5.0, 0.0)]);
        assert!(upsample(&[c(1.0, 0.0)], 0).is_err());
    }

    #[test]
    fn downsample_strided() {
        let sig = vec![c(1.0, 0.0), Complex64::ZERO, c(2.0, 0.0), Complex64::ZERO];
        assert_eq!(
            downsample(&sig, 2, 0).unwrap(),
            vec![c(1.0, 0.0), c(2.0, 0.0)]
        );
        let abcd = vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        assert_eq!(downsample(&abcd, 4, 2).unwrap(), vec![c(3.0, 0.0)]);
        assert!(downsample(&abcd, 3, 0).is_err());
        assert!(downsample(&abcd, 2, 2).is_err());
    }

    #[test]
    fn fir_identity_and_circular_shift() {
        let x = vec![c(1.0, 1.0), c(2.0, -1.0), c(3.0, 0.5)];
        assert_eq!(fir_filter(&x, &[c(1.0, 0.0)]).unwrap(), x);
        let shifted = fir_filter(&x, &[Complex64::ZERO, c(1.0, 0.0)]).unwrap();
        assert_eq!(shifted, vec![x[2], x[0], x[1]]);
        assert!(fir_filter(&x, &[]).is_err());
        assert!(fir_filter(&[c(1.0, 0.0)], &x).is_err());
    }

    #[test]
    fn fir_matches_fft_domain_product() {
        let sig = random_signal(128, 11);
        let taps: Vec<Complex64> = random_signal(16, 12).samples;
        let direct = fir_filter(&sig.samples, &taps).unwrap();

        // FFT-domain oracle: unitary conventions need a sqrt(N) to express
        // plain circular convolution as a bin-wise product.
        let mut h = taps.clone();
        h.resize(sig.len(), Complex64::ZERO);
        fft_in_place(&mut h);
        let mut x = sig.samples.clone();
        fft_in_place(&mut x);
        let scale = (sig.len() as f64).sqrt();
        let mut y: Vec<Complex64> = x.iter().zip(&h).map(|(a, b)| a * b * scale).collect();
        ifft_in_place(&mut y);

        assert!(rel_l2(&direct, &y) < 1e-10);
    }

    #[test]
    fn lowpass_at_nyquist_is_identity() {
        let sig = random_signal(64, 21);
        let out = ideal_lowpass(&sig, 0.5).unwrap();
        assert!(rel_l2(&out.samples, &sig.samples) < 1e-12);
    }

    #[test]
    fn lowpass_rejects_out_of_band_tone() {
        let n = 64;
        let fs = 64.0;
        let cutoff = 8.0;
        // Tones on exact FFT bins at 0.5x and 1.5x the cutoff.
        let tone = |f: f64| -> Vec<Complex64> {
            (0..n)
                .map(|t| Complex64::from_polar(1.0, 2.0 * PI * f * t as f64 / fs))
                .collect()
        };
        let t_in = tone(4.0);
        let t_out = tone(12.0);

        let only_out = ComplexSignal::new(t_out.clone(), fs).unwrap();
        let y = ideal_lowpass(&only_out, cutoff).unwrap();
        assert!(y.samples.iter().all(|s| s.norm() < 1e-12));

        let both: Vec<Complex64> = t_in.iter().zip(&t_out).map(|(a, b)| a + b).collect();
        let y = ideal_lowpass(&ComplexSignal::new(both, fs).unwrap(), cutoff).unwrap();
        assert!(rel_l2(&y.samples, &t_in) < 1e-12);

        assert!(ideal_lowpass(&only_out, 33.0).is_err());
    }

    #[test]
    fn normalize_power_contract() {
        let sig = ComplexSignal::new(vec![c(1.0, 0.0); 4], 1.0).unwrap();
        let out = normalize_power(&sig, 1.0).unwrap();
        assert!(rel_l2(&out.samples, &sig.samples) < 1e-12);

        let sig = ComplexSignal::new(vec![c(2.0, 0.0), Complex64::ZERO], 1.0).unwrap();
        let out = normalize_power(&sig, 1.0).unwrap();
        assert!((out.samples[0] - c(2.0_f64.sqrt(), 0.0)).norm() < 1e-12);

        // -10 dBm in watts.
        let target = 1e-3 * 10f64.powf(-10.0 / 10.0);
        let sig = random_signal(256, 5);
        let out = normalize_power(&sig, target).unwrap();
        assert!((out.mean_power() - target).abs() / target < 1e-12);

        let zero = ComplexSignal::new(vec![Complex64::ZERO; 8], 1.0).unwrap();
        assert!(matches!(
            normalize_power(&zero, 1.0),
            Err(Error::DegenerateInput(_))
        ));
    }

    proptest! {
        #[test]
        fn prop_fir_linearity(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let x = random_signal(32, rng.random());
            let y = random_signal(32, rng.random());
            let taps = random_signal(5, rng.random()).samples;
            let a = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let b = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));

            let lhs_in: Vec<Complex64> =
                x.samples.iter().zip(&y.samples).map(|(u, v)| a * u + b * v).collect();
            let lhs = fir_filter(&lhs_in, &taps).unwrap();
            let fx = fir_filter(&x.samples, &taps).unwrap();
            let fy = fir_filter(&y.samples, &taps).unwrap();
            let rhs: Vec<Complex64> = fx.iter().zip(&fy).map(|(u, v)| a * u + b * v).collect();
            prop_assert!(rel_l2(&lhs, &rhs) < 1e-12);
        }

        #[test]
        fn prop_normalize_idempotent(seed in 0u64..500) {
            let sig = random_signal(64, seed.wrapping_mul(31).wrapping_add(1));
            let once = normalize_power(&sig, 0.25).unwrap();
            let twice = normalize_power(&once, 0.25).unwrap();
            prop_assert!(rel_l2(&twice.samples, &once.samples) < 1e-12);
        }

        #[test]
        fn prop_up_down_round_trip(seed in 0u64..500, factor in 1usize..8) {
            let v = random_signal(24, seed).samples;
            let up = upsample(&v, factor).unwrap();
            let back = downsample(&up, factor, 0).unwrap();
            prop_assert_eq!(back, v.clone());
            // Zero insertion preserves energy.
            let e_up: f64 = up.iter().map(|s| s.norm_sqr()).sum();
            let e_v: f64 = v.iter().map(|s| s.norm_sqr()).sum();
            prop_assert!((e_up - e_v).abs() <= 1e-12 * e_v);
        }

        #[test]
        fn prop_up_down_adjoint(seed in 0u64..500, factor in 1usize..6) {
            // <upsample(v), w> == <v, downsample(w)>: the gradient contract
            // used by the tape.
            let v = random_signal(16, seed).samples;
            let w = random_signal(16 * factor, seed.wrapping_add(1)).samples;
            let up = upsample(&v, factor).unwrap();
            let down = downsample(&w, factor, 0).unwrap();
            let lhs: Complex64 = up.iter().zip(&w).map(|(a, b)| a * b.conj()).sum();
            let rhs: Complex64 = v.iter().zip(&down).map(|(a, b)| a * b.conj()).sum();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn prop_parseval(seed in 0u64..200) {
            let sig = random_signal(96, seed.wrapping_add(1000));
            let spec = fft(&sig).unwrap();
            let e_t: f64 = sig.samples.iter().map(|s| s.norm_sqr()).sum();
            let e_f: f64 = spec.bins.iter().map(|b| b.norm_sqr()).sum();
            prop_assert!((e_t - e_f).abs() / e_t < 1e-12);
        }
    }
}
