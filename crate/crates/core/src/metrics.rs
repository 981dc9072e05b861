//! Performance metrics: plug-in mutual information over hard decisions,
//! spectral efficiency, link SNR, and capacity reference curves.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::ChannelConfig;
use crate::dsp::Constellation;
use crate::error::{Error, Result};
use crate::signal::SymbolBlock;

/// Mutual information estimate from empirical symbol histograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    /// `H(s) + H(s_hat) - H(s, s_hat)` in bits per symbol.
    pub mi_bits: f64,
    pub n_samples: usize,
    pub h_s: f64,
    pub h_shat: f64,
    pub h_joint: f64,
}

fn entropy_bits(counts: impl IntoIterator<Item = usize>, total: usize) -> f64 {
    let total = total as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Plug-in mutual information between sent and decided symbol indices.
///
/// Uses maximum-likelihood (histogram) entropies with `0 log 0 := 0`; the
/// estimator carries the usual positive bias of roughly
/// `(M-1)^2 / (2 N ln 2)` bits for independent inputs.
pub fn estimate_mi(s: &SymbolBlock, s_hat: &SymbolBlock) -> Result<MiEstimate> {
    if s.len() != s_hat.len() {
        return Err(Error::invalid("blocks must have equal length"));
    }
    if s.alphabet_size != s_hat.alphabet_size {
        return Err(Error::invalid("blocks must share the alphabet size"));
    }
    if s.is_empty() {
        return Err(Error::invalid("blocks must be non-empty"));
    }
    let m = s.alphabet_size;
    let n = s.len();
    let mut c_s = vec![0usize; m];
    let mut c_t = vec![0usize; m];
    let mut c_joint = vec![0usize; m * m];
    for (&a, &b) in s.indices.iter().zip(&s_hat.indices) {
        c_s[a] += 1;
        c_t[b] += 1;
        c_joint[a * m + b] += 1;
    }
    let h_s = entropy_bits(c_s, n);
    let h_shat = entropy_bits(c_t, n);
    let h_joint = entropy_bits(c_joint, n);
    Ok(MiEstimate {
        mi_bits: h_s + h_shat - h_joint,
        n_samples: n,
        h_s,
        h_shat,
        h_joint,
    })
}

/// Spectral efficiency `MI / (T * Bw)` in bits/(s*Hz). With the symbol
/// duration at `T = 1/Bw` (time-bandwidth product 1) this equals the MI.
pub fn spectral_efficiency(mi_bits: f64, symbol_duration_s: f64, bw_hz: f64) -> f64 {
    mi_bits / (symbol_duration_s * bw_hz)
}

/// Link SNR: mean launch power over the accumulated in-band noise power
/// `rho_n * l * Bw`. Independent of the simulation rate and step count.
pub fn snr(launch_power_w: f64, cfg: &ChannelConfig) -> f64 {
    let rho_n = cfg.noise_model().rho_n;
    launch_power_w / (rho_n * cfg.length_km * cfg.bw_hz)
}

/// Launch power that produces the given SNR on this channel.
pub fn launch_power_for_snr(snr_linear: f64, cfg: &ChannelConfig) -> f64 {
    let rho_n = cfg.noise_model().rho_n;
    snr_linear * rho_n * cfg.length_km * cfg.bw_hz
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// dBm -> watts.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    1e-3 * from_db(p_dbm)
}

/// watts -> dBm.
pub fn watts_to_dbm(p_w: f64) -> f64 {
    db(p_w / 1e-3)
}

/// Shannon capacity of the complex AWGN channel, bits/(s*Hz).
pub fn awgn_capacity(snr_linear: f64) -> f64 {
    (1.0 + snr_linear).log2()
}

/// Symbol-wise capacity (mutual information) of equiprobable square M-QAM
/// over complex AWGN at the given SNR, estimated by Monte Carlo.
///
/// Returns the estimate and its standard error in bits.
pub fn qam_symbolwise_capacity(
    snr_linear: f64,
    m: usize,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let c = Constellation::square_qam(m)?;
    if n_mc == 0 {
        return Err(Error::invalid("need at least one Monte Carlo draw"));
    }
    let sigma2 = 1.0 / snr_linear; // unit-power constellation
    let sigma = (sigma2 / 2.0).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let log2m = (m as f64).log2();

    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..n_mc {
        let i = rng.random_range(0..m);
        let (nr, ni): (f64, f64) = (
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        let noise = Complex64::new(sigma * nr, sigma * ni);
        // log2 of the posterior mass ratio via a stabilized log-sum-exp of
        // -|x_i - x_j + n|^2 / sigma2 over j.
        let exps: Vec<f64> = c
            .points
            .iter()
            .map(|&xj| -(c.points[i] - xj + noise).norm_sqr() / sigma2)
            .collect();
        let max = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        // -|n|^2/sigma2 is the numerator exponent for the true symbol.
        let info = (-(noise.norm_sqr()) / sigma2 - lse) / std::f64::consts::LN_2;
        sum += info;
        sum_sq += info * info;
    }
    let mean = sum / n_mc as f64;
    let var = (sum_sq / n_mc as f64 - mean * mean).max(0.0);
    let se = (var / n_mc as f64).sqrt();
    Ok((log2m + mean, se))
}
