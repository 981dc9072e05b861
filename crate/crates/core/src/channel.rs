//! Split-step Fourier simulation of a single-polarization nonlinear fiber
//! with ideal distributed amplification.
//!
//! The field evolves under chromatic dispersion (frequency-domain quadratic
//! phase), Kerr nonlinearity (intensity-dependent phase rotation) and
//! circularly-symmetric Gaussian amplification noise. Each of the three
//! impairments can be toggled independently, which yields the channel
//! variants used throughout: AWGN only, AWGN+CD, and AWGN+CD+KNL.
//!
//! Splitting scheme per step of length `dz`: half-dispersion, full
//! nonlinearity, half-dispersion, then noise injection. Attenuation is
//! assumed perfectly balanced by the distributed gain and enters only
//! through the noise density.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::{
    fft_in_place, ideal_lowpass, ifft_in_place, signed_bin_frequency, ComplexSignal, Spectrum,
};

/// Physical and simulation parameters of the fiber link.
///
/// Defaults describe a 1000 km standard single-mode link sampled at 1 THz
/// with a 20 GHz transceiver; see [`ChannelConfig::default`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Planck constant in J*s.
    pub h: f64,
    /// Optical carrier frequency in Hz.
    pub f0_hz: f64,
    /// Attenuation coefficient in 1/km.
    pub alpha_per_km: f64,
    /// Group-velocity dispersion in s^2/km.
    pub beta2_s2_per_km: f64,
    /// Kerr nonlinearity coefficient in 1/(km*W).
    pub gamma_per_km_w: f64,
    /// Spontaneous emission factor (dimensionless).
    pub n_sp: f64,
    /// Fiber length in km.
    pub length_km: f64,
    /// Number of split steps.
    pub n_ssfm_steps: usize,
    /// Simulation sample rate in Hz.
    pub f_sim_hz: f64,
    /// Transceiver (DAC/ADC) bandwidth in Hz; also the symbol rate.
    pub bw_hz: f64,
    pub enable_awgn: bool,
    pub enable_cd: bool,
    pub enable_knl: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            h: 6.626e-34,
            f0_hz: 193.55e12,
            alpha_per_km: 0.046,
            beta2_s2_per_km: -21.67e-24,
            gamma_per_km_w: 1.27,
            n_sp: 1.0,
            length_km: 1000.0,
            n_ssfm_steps: 200,
            f_sim_hz: 1.0e12,
            bw_hz: 20.0e9,
            enable_awgn: true,
            enable_cd: true,
            enable_knl: true,
        }
    }
}

impl ChannelConfig {
    /// Step length in km.
    pub fn dz_km(&self) -> f64 {
        self.length_km / self.n_ssfm_steps as f64
    }

    /// Oversampling factor `f_sim / R_s` (samples per symbol).
    pub fn oversampling(&self) -> usize {
        (self.f_sim_hz / self.bw_hz).round() as usize
    }

    /// Validate the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let dz = self.dz_km();
        if self.n_ssfm_steps == 0 || !dz.is_finite() || dz <= 0.0 {
            return Err(Error::invalid("step length must be positive"));
        }
        let ratio = self.f_sim_hz / self.bw_hz;
        if !ratio.is_finite() || ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::invalid(
                "simulation rate must be an integer multiple of the symbol rate",
            ));
        }
        Ok(())
    }

    /// Select which impairments are active: AWGN / CD / KNL.
    pub fn with_impairments(mut self, awgn: bool, cd: bool, knl: bool) -> Self {
        self.enable_awgn = awgn;
        self.enable_cd = cd;
        self.enable_knl = knl;
        self
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel::from_config(self)
    }
}

/// Amplification-noise bookkeeping derived from the channel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Noise power spectral and spatial density in W/(Hz*km).
    pub rho_n: f64,
    /// Complex noise variance injected per step, in W.
    pub sigma2_per_step: f64,
}

impl NoiseModel {
    pub fn from_config(cfg: &ChannelConfig) -> Self {
        let rho_n = cfg.n_sp * cfg.h * cfg.f0_hz * cfg.alpha_per_km;
        let sigma2_per_step = rho_n * cfg.dz_km() * cfg.f_sim_hz;
        Self {
            rho_n,
            sigma2_per_step,
        }
    }
}

/// Apply the dispersion operator over `dz_km` in the frequency domain: each
/// bin is multiplied by `exp(-j/2 * beta2 * omega^2 * dz)`. Unit-magnitude,
/// so energy is preserved exactly.
pub fn cd_step(spec: &Spectrum, beta2_s2_per_km: f64, dz_km: f64) -> Spectrum {
    let n = spec.len();
    let bins = spec
        .bins
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let omega = 2.0 * std::f64::consts::PI * signed_bin_frequency(k, n, spec.bin_spacing);
            b * Complex64::from_polar(1.0, -0.5 * beta2_s2_per_km * omega * omega * dz_km)
        })
        .collect();
    Spectrum {
        bins,
        bin_spacing: spec.bin_spacing,
    }
}

/// Unit-magnitude dispersion phasors for an `n`-point grid, reusable across
/// steps of equal length.
pub fn cd_phasors(n: usize, sample_rate: f64, beta2_s2_per_km: f64, dz_km: f64) -> Vec<Complex64> {
    let spacing = sample_rate / n as f64;
    (0..n)
        .map(|k| {
            let omega = 2.0 * std::f64::consts::PI * signed_bin_frequency(k, n, spacing);
            Complex64::from_polar(1.0, -0.5 * beta2_s2_per_km * omega * omega * dz_km)
        })
        .collect()
}

/// Kerr step over `dz_km`: sample-wise `q * exp(-j*gamma*|q|^2*dz)`.
/// Magnitudes are preserved exactly.
pub fn knl_step(sig: &ComplexSignal, gamma_per_km_w: f64, dz_km: f64) -> ComplexSignal {
    let samples = sig
        .samples
        .iter()
        .map(|&q| q * Complex64::from_polar(1.0, -gamma_per_km_w * q.norm_sqr() * dz_km))
        .collect();
    ComplexSignal {
        samples,
        sample_rate: sig.sample_rate,
    }
}

/// Draw one step's worth of circularly-symmetric complex Gaussian noise with
/// total variance `sigma2` per sample. Deterministic given the RNG state.
fn sample_noise(rng: &mut ChaCha12Rng, n: usize, sigma2: f64) -> Vec<Complex64> {
    let std = (sigma2 / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * std, im * std)
        })
        .collect()
}

/// Add circularly-symmetric complex Gaussian noise of total variance
/// `sigma2` per sample (half per quadrature).
pub fn ase_noise_step(
    sig: &ComplexSignal,
    sigma2: f64,
    rng: &mut ChaCha12Rng,
) -> Result<ComplexSignal> {
    if sigma2 < 0.0 {
        return Err(Error::invalid("noise variance must be non-negative"));
    }
    if sigma2 == 0.0 {
        return Ok(sig.clone());
    }
    let noise = sample_noise(rng, sig.len(), sigma2);
    let samples = sig.samples.iter().zip(&noise).map(|(s, w)| s + w).collect();
    ComplexSignal::new(samples, sig.sample_rate)
}

/// Seeded per-step noise RNG. Step `k` of a propagation seeded with `seed`
/// always sees the same substream, so reruns (e.g. finite-difference
/// gradient checks) observe identical noise.
pub fn step_rng(seed: u64, step: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

/// Noise vector injected after step `step` of a propagation with the given
/// seed, or `None` when noise is disabled. Shared with the differentiable
/// channel so both paths see bit-identical noise.
pub fn step_noise(cfg: &ChannelConfig, seed: u64, step: usize, n: usize) -> Option<Vec<Complex64>> {
    if !cfg.enable_awgn {
        return None;
    }
    let sigma2 = cfg.noise_model().sigma2_per_step;
    let mut rng = step_rng(seed, step);
    Some(sample_noise(&mut rng, n, sigma2))
}

/// Propagate `sig` through the fiber using the symmetric split-step scheme.
///
/// Per step: half-CD, full KNL, half-CD, then noise. Disabled impairments
/// skip their sub-step. With noise off the propagation is unitary. The
/// result is deterministic given `seed`.
pub fn ssfm_propagate(
    sig: &ComplexSignal,
    cfg: &ChannelConfig,
    seed: u64,
) -> Result<ComplexSignal> {
    cfg.validate()?;
    if (sig.sample_rate - cfg.f_sim_hz).abs() > 1e-6 * cfg.f_sim_hz.abs() {
        return Err(Error::invalid(format!(
            "signal sample rate {} Hz does not match simulation rate {} Hz",
            sig.sample_rate, cfg.f_sim_hz
        )));
    }

    let n = sig.len();
    let dz = cfg.dz_km();
    let half_cd = if cfg.enable_cd {
        Some(cd_phasors(n, cfg.f_sim_hz, cfg.beta2_s2_per_km, dz / 2.0))
    } else {
        None
    };
    let gamma = if cfg.enable_knl {
        cfg.gamma_per_km_w
    } else {
        0.0
    };
    let sigma2 = if cfg.enable_awgn {
        cfg.noise_model().sigma2_per_step
    } else {
        0.0
    };

    let mut q = sig.samples.clone();
    for step in 0..cfg.n_ssfm_steps {
        if let Some(phasors) = &half_cd {
            apply_cd_half(&mut q, phasors);
        }
        if gamma != 0.0 {
            for v in q.iter_mut() {
                *v *= Complex64::from_polar(1.0, -gamma * v.norm_sqr() * dz);
            }
        }
        if let Some(phasors) = &half_cd {
            apply_cd_half(&mut q, phasors);
        }
        if sigma2 > 0.0 {
            let mut rng = step_rng(seed, step);
            let noise = sample_noise(&mut rng, n, sigma2);
            for (v, w) in q.iter_mut().zip(&noise) {
                *v += w;
            }
        }
    }
    ComplexSignal::new(q, sig.sample_rate)
}

fn apply_cd_half(q: &mut [Complex64], phasors: &[Complex64]) {
    fft_in_place(q);
    for (v, p) in q.iter_mut().zip(phasors) {
        *v *= p;
    }
    ifft_in_place(q);
}

/// Ideal band-limited DAC: brickwall low-pass over `|f| <= bw/2` without
/// changing the sample rate. The transceiver bandwidth `bw` is the full
/// two-sided width of the passband, matching the symbol rate.
pub fn dac(sig: &ComplexSignal, cfg: &ChannelConfig) -> Result<ComplexSignal> {
    ideal_lowpass(sig, cfg.bw_hz / 2.0)
}

/// Ideal band-limited ADC; identical front-end filter to [`dac`].
pub fn adc(sig: &ComplexSignal, cfg: &ChannelConfig) -> Result<ComplexSignal> {
    ideal_lowpass(sig, cfg.bw_hz / 2.0)
}

/// Rule-of-thumb estimate of the widest bandwidth occupied along the link at
/// maximum launch power: `0.86 * gamma * (2 p_max) * length * bw`.
pub fn estimate_max_bandwidth(cfg: &ChannelConfig, p_max_w: f64) -> f64 {
    0.86 * cfg.gamma_per_km_w * (2.0 * p_max_w) * cfg.length_km * cfg.bw_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fft;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_signal(n: usize, fs: f64, power: f64, seed: u64) -> ComplexSignal {
        let mut rng = StdRng::seed_from_u64(seed);
        let amp = (power / 2.0).sqrt();
        let samples = (0..n)
            .map(|_| {
                Complex64::new(
                    amp * rng.sample::<f64, _>(StandardNormal),
                    amp * rng.sample::<f64, _>(StandardNormal),
                )
            })
            .collect();
        ComplexSignal::new(samples, fs).unwrap()
    }

    fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn defaults_produce_expected_noise_density() {
        let cfg = ChannelConfig::default();
        let nm = cfg.noise_model();
        // rho_n = n_sp * h * f0 * alpha
        assert!((nm.rho_n - 5.8994e-21).abs() / 5.8994e-21 < 1e-3);
        // sigma2 per step at dz = 5 km, f_sim = 1 THz
        assert!((nm.sigma2_per_step - 2.9497e-8).abs() / 2.9497e-8 < 1e-3);
    }

    #[test]
    fn cd_step_identity_cases() {
        let sig = random_signal(64, 64.0, 1.0, 1);
        let spec = fft(&sig).unwrap();
        let out = cd_step(&spec, 0.0, 5.0);
        assert!(rel_l2(&out.bins, &spec.bins) < 1e-15);
        // DC bin untouched for any beta2.
        let out = cd_step(&spec, -21.67e-24, 5.0);
        assert!((out.bins[0] - spec.bins[0]).norm() < 1e-15);
    }

    #[test]
    fn cd_step_single_tone_phase() {
        // Tone at +10 GHz on a 1 THz grid; phase from the dispersion
        // exponent: -0.5 * beta2 * omega^2 * dz.
        let n = 100usize;
        let fs = 1.0e12;
        let k_tone = 1usize; // bin 1 = 10 GHz when n = 100
        let f_tone = fs / n as f64 * k_tone as f64;
        assert_eq!(f_tone, 1.0e10);
        let samples: Vec<Complex64> = (0..n)
            .map(|t| Complex64::from_polar(1.0, 2.0 * PI * k_tone as f64 * t as f64 / n as f64))
            .collect();
        let spec = fft(&ComplexSignal::new(samples, fs).unwrap()).unwrap();
        let beta2 = -21.67e-24;
        let dz = 5.0;
        let out = cd_step(&spec, beta2, dz);
        let expected = -0.5 * beta2 * (2.0 * PI * f_tone).powi(2) * dz;
        assert!(
            (expected - 0.21387).abs() < 1e-4,
            "scalar check: {expected}"
        );
        let got = (out.bins[k_tone] / spec.bins[k_tone]).arg();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn knl_step_phase_and_magnitude() {
        let sig = ComplexSignal::new(vec![Complex64::new(1.0, 0.0), Complex64::ZERO], 1.0).unwrap();
        let out = knl_step(&sig, 1.27, 5.0);
        // |q| = 1 -> phase -6.35 rad; zero stays zero.
        assert!((out.samples[0].arg() - wrap(-6.35)).abs() < 1e-12);
        assert!((out.samples[0].norm() - 1.0).abs() < 1e-15);
        assert_eq!(out.samples[1], Complex64::ZERO);

        let sig = random_signal(128, 1.0, 2.0, 2);
        let out = knl_step(&sig, 0.0, 5.0);
        assert!(rel_l2(&out.samples, &sig.samples) < 1e-15);
        let out = knl_step(&sig, 1.27, 5.0);
        for (a, b) in out.samples.iter().zip(&sig.samples) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    fn wrap(x: f64) -> f64 {
        let mut y = x;
        while y <= -PI {
            y += 2.0 * PI;
        }
        while y > PI {
            y -= 2.0 * PI;
        }
        y
    }

    #[test]
    fn noise_step_calibration() {
        let n = 1_000_000usize;
        let sigma2 = 2.9497e-8;
        let zero = ComplexSignal::new(vec![Complex64::ZERO; n], 1.0).unwrap();
        let mut rng = step_rng(42, 0);
        let out = ase_noise_step(&zero, sigma2, &mut rng).unwrap();
        let var = out.mean_power();
        assert!(
            (var - sigma2).abs() / sigma2 < 0.01,
            "empirical variance {var}"
        );

        let mut rng = step_rng(42, 0);
        let same = ase_noise_step(&zero, sigma2, &mut rng).unwrap();
        assert_eq!(same.samples, out.samples);

        let mut rng = step_rng(42, 0);
        let ident = ase_noise_step(&zero, 0.0, &mut rng).unwrap();
        assert!(ident.samples.iter().all(|s| *s == Complex64::ZERO));
    }

    #[test]
    fn ssfm_linear_limit_matches_closed_form() {
        // gamma = 0, noise off: the split steps compose into one dispersion
        // filter over the whole length.
        let mut cfg = ChannelConfig {
            f_sim_hz: 64e9,
            bw_hz: 8e9,
            n_ssfm_steps: 50,
            ..Default::default()
        };
        cfg = cfg.with_impairments(false, true, false);
        let sig = random_signal(1024, cfg.f_sim_hz, 1e-3, 3);
        let out = ssfm_propagate(&sig, &cfg, 0).unwrap();

        let spec = fft(&sig).unwrap();
        let all_at_once = cd_step(&spec, cfg.beta2_s2_per_km, cfg.length_km);
        let expected = crate::signal::ifft(&all_at_once).unwrap();
        assert!(rel_l2(&out.samples, &expected.samples) < 1e-9);

        // Invariance to the step count in the linear limit.
        let cfg_one = ChannelConfig {
            n_ssfm_steps: 1,
            ..cfg.clone()
        };
        let one = ssfm_propagate(&sig, &cfg_one, 0).unwrap();
        assert!(rel_l2(&out.samples, &one.samples) < 1e-9);
    }

    #[test]
    fn ssfm_nonlinear_limit_is_exact() {
        let mut cfg = ChannelConfig {
            beta2_s2_per_km: 0.0,
            f_sim_hz: 64e9,
            bw_hz: 8e9,
            n_ssfm_steps: 37,
            ..Default::default()
        };
        cfg = cfg.with_impairments(false, false, true);
        let sig = random_signal(512, cfg.f_sim_hz, 2e-3, 4);
        let out = ssfm_propagate(&sig, &cfg, 0).unwrap();
        let expected = knl_step(&sig, cfg.gamma_per_km_w, cfg.length_km);
        assert!(rel_l2(&out.samples, &expected.samples) < 1e-10);
    }

    #[test]
    fn ssfm_all_off_is_identity() {
        let cfg = ChannelConfig {
            f_sim_hz: 64e9,
            bw_hz: 8e9,
            ..Default::default()
        }
        .with_impairments(false, false, false);
        let sig = random_signal(256, cfg.f_sim_hz, 1e-3, 5);
        let out = ssfm_propagate(&sig, &cfg, 0).unwrap();
        assert!(rel_l2(&out.samples, &sig.samples) < 1e-12);
    }

    #[test]
    fn ssfm_noiseless_is_unitary() {
        let cfg = ChannelConfig {
            f_sim_hz: 64e9,
            bw_hz: 8e9,
            n_ssfm_steps: 25,
            ..Default::default()
        }
        .with_impairments(false, true, true);
        let sig = random_signal(512, cfg.f_sim_hz, 5e-3, 6);
        let out = ssfm_propagate(&sig, &cfg, 0).unwrap();
        let e_in = sig.energy();
        let e_out = out.energy();
        assert!((e_in - e_out).abs() / e_in < 1e-10);
    }

    #[test]
    fn ssfm_determinism_and_rate_check() {
        let cfg = ChannelConfig {
            f_sim_hz: 64e9,
            bw_hz: 8e9,
            n_ssfm_steps: 10,
            ..Default::default()
        };
        let sig = random_signal(256, cfg.f_sim_hz, 1e-3, 7);
        let a = ssfm_propagate(&sig, &cfg, 99).unwrap();
        let b = ssfm_propagate(&sig, &cfg, 99).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = ssfm_propagate(&sig, &cfg, 100).unwrap();
        assert_ne!(a.samples, c.samples);

        let wrong = ComplexSignal::new(sig.samples.clone(), 32e9).unwrap();
        assert!(ssfm_propagate(&wrong, &cfg, 0).is_err());
    }

    #[test]
    fn max_bandwidth_estimate() {
        let cfg = ChannelConfig::default();
        let b = estimate_max_bandwidth(&cfg, 1e-2);
        assert!((b - 4.3688e11).abs() / 4.3688e11 < 1e-3);
        // The default simulation rate clears twice this estimate.
        assert!(cfg.f_sim_hz > 2.0 * b);
        assert_eq!(estimate_max_bandwidth(&cfg, 0.0), 0.0);
        let b2 = estimate_max_bandwidth(&cfg, 2e-2);
        assert!((b2 - 2.0 * b).abs() / b2 < 1e-12);
    }
}
