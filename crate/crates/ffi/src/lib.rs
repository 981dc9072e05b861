//! C ABI for the fiber-link simulation core.
//!
//! Conventions:
//!
//! * Channel configurations are opaque handles created by
//!   `fiberae_channel_new_*` and released with `fiberae_channel_free`.
//! * Every fallible call returns a [`FiberaeStatus`] code; outputs go
//!   through caller-allocated buffers. No call panics across the boundary.
//! * Complex buffers are interleaved `re, im` pairs of `double`, length
//!   `2 * n` for `n` complex samples.
//!
//! The matching header lives at `include/fiberae.h` (kept in sync by hand;
//! `cbindgen --config cbindgen.toml` regenerates it where available).

use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;

use fiberae::channel::{ssfm_propagate, ChannelConfig};
use fiberae::dsp::{conventional_link, Constellation};
use fiberae::error::Error;
use fiberae::metrics::{db, dbm_to_watts, estimate_mi, snr, spectral_efficiency};
use fiberae::psd::welch_psd;
use fiberae::signal::{ComplexSignal, SymbolBlock};

/// Result codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberaeStatus {
    Ok = 0,
    InvalidArgument = 1,
    DegenerateInput = 2,
    Diverged = 3,
    Internal = 4,
    NullPointer = 5,
}

fn status_of(e: &Error) -> FiberaeStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => FiberaeStatus::InvalidArgument,
        Error::DegenerateInput(_) => FiberaeStatus::DegenerateInput,
        Error::Diverged(_) => FiberaeStatus::Diverged,
        _ => FiberaeStatus::Internal,
    }
}

/// Opaque channel-configuration handle.
pub struct FiberaeChannel {
    cfg: ChannelConfig,
}

/// Static, NUL-terminated crate version string.
#[no_mangle]
pub extern "C" fn fiberae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Human-readable name of a status code (static storage).
#[no_mangle]
pub extern "C" fn fiberae_status_name(status: FiberaeStatus) -> *const c_char {
    let s: &'static str = match status {
        FiberaeStatus::Ok => "ok\0",
        FiberaeStatus::InvalidArgument => "invalid argument\0",
        FiberaeStatus::DegenerateInput => "degenerate input\0",
        FiberaeStatus::Diverged => "diverged\0",
        FiberaeStatus::Internal => "internal error\0",
        FiberaeStatus::NullPointer => "null pointer\0",
    };
    s.as_ptr() as *const c_char
}

/// New channel at the full-scale default parameters (1 THz grid, 200
/// split steps, 1000 km, all impairments on).
#[no_mangle]
pub extern "C" fn fiberae_channel_new_full() -> *mut FiberaeChannel {
    Box::into_raw(Box::new(FiberaeChannel {
        cfg: ChannelConfig::default(),
    }))
}

/// New channel at the reduced desk-scale grid (160 GHz, 50 split steps).
#[no_mangle]
pub extern "C" fn fiberae_channel_new_desk() -> *mut FiberaeChannel {
    let cfg = ChannelConfig {
        f_sim_hz: 160e9,
        n_ssfm_steps: 50,
        ..Default::default()
    };
    Box::into_raw(Box::new(FiberaeChannel { cfg }))
}

/// Release a channel handle. NULL is accepted and ignored.
///
/// # Safety
/// `ch` must be NULL or a pointer previously returned by a
/// `fiberae_channel_new_*` function that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn fiberae_channel_free(ch: *mut FiberaeChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Toggle the three impairments (AWGN, chromatic dispersion, Kerr
/// nonlinearity).
///
/// # Safety
/// `ch` must be a live channel handle.
#[no_mangle]
pub unsafe extern "C" fn fiberae_channel_set_impairments(
    ch: *mut FiberaeChannel,
    awgn: c_int,
    cd: c_int,
    knl: c_int,
) -> FiberaeStatus {
    let Some(ch) = ch.as_mut() else {
        return FiberaeStatus::NullPointer;
    };
    ch.cfg = ch
        .cfg
        .clone()
        .with_impairments(awgn != 0, cd != 0, knl != 0);
    FiberaeStatus::Ok
}

/// Set fiber length and split-step count.
///
/// # Safety
/// `ch` must be a live channel handle.
#[no_mangle]
pub unsafe extern "C" fn fiberae_channel_set_geometry(
    ch: *mut FiberaeChannel,
    length_km: f64,
    n_ssfm_steps: usize,
) -> FiberaeStatus {
    let Some(ch) = ch.as_mut() else {
        return FiberaeStatus::NullPointer;
    };
    if !length_km.is_finite() || length_km <= 0.0 || n_ssfm_steps == 0 {
        return FiberaeStatus::InvalidArgument;
    }
    ch.cfg.length_km = length_km;
    ch.cfg.n_ssfm_steps = n_ssfm_steps;
    FiberaeStatus::Ok
}

/// Link SNR in dB at the given launch power.
///
/// # Safety
/// `ch` must be a live channel handle; `out_snr_db` must point to a
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn fiberae_snr_db(
    ch: *const FiberaeChannel,
    p_dbm: f64,
    out_snr_db: *mut f64,
) -> FiberaeStatus {
    let (Some(ch), Some(out)) = (ch.as_ref(), out_snr_db.as_mut()) else {
        return FiberaeStatus::NullPointer;
    };
    *out = db(snr(dbm_to_watts(p_dbm), &ch.cfg));
    FiberaeStatus::Ok
}

/// Propagate `n` complex samples (interleaved re/im, sampled at the
/// channel's simulation rate) through the fiber. `out_iq` receives `2 n`
/// doubles and may alias `iq`.
///
/// # Safety
/// `ch` must be a live channel handle; `iq` and `out_iq` must point to
/// `2 * n` readable/writable doubles respectively.
#[no_mangle]
pub unsafe extern "C" fn fiberae_ssfm_propagate(
    ch: *const FiberaeChannel,
    iq: *const f64,
    n: usize,
    seed: u64,
    out_iq: *mut f64,
) -> FiberaeStatus {
    let Some(ch) = ch.as_ref() else {
        return FiberaeStatus::NullPointer;
    };
    if iq.is_null() || out_iq.is_null() {
        return FiberaeStatus::NullPointer;
    }
    if n == 0 {
        return FiberaeStatus::InvalidArgument;
    }
    let input = std::slice::from_raw_parts(iq, 2 * n);
    let samples: Vec<Complex64> = input
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<Vec<Complex64>, Error> {
        let sig = ComplexSignal::new(samples, ch.cfg.f_sim_hz)?;
        Ok(ssfm_propagate(&sig, &ch.cfg, seed)?.samples)
    }));
    match result {
        Ok(Ok(out)) => {
            let dst = std::slice::from_raw_parts_mut(out_iq, 2 * n);
            for (i, v) in out.iter().enumerate() {
                dst[2 * i] = v.re;
                dst[2 * i + 1] = v.im;
            }
            FiberaeStatus::Ok
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => FiberaeStatus::Internal,
    }
}

/// Run the conventional transceiver at one launch power: `blocks`
/// independent blocks of `n_b` square-QAM symbols from an alphabet of `m`
/// points. Writes mutual information (bits/symbol), spectral efficiency
/// (bits/(s*Hz)), symbol error rate and SNR (dB). Output pointers may be
/// NULL when a metric is not wanted.
///
/// # Safety
/// `ch` must be a live channel handle; non-NULL output pointers must be
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fiberae_conventional_point(
    ch: *const FiberaeChannel,
    m: usize,
    n_b: usize,
    blocks: usize,
    p_dbm: f64,
    seed: u64,
    out_mi_bits: *mut f64,
    out_se: *mut f64,
    out_ser: *mut f64,
    out_snr_db: *mut f64,
) -> FiberaeStatus {
    let Some(ch) = ch.as_ref() else {
        return FiberaeStatus::NullPointer;
    };
    if n_b == 0 || blocks == 0 {
        return FiberaeStatus::InvalidArgument;
    }
    let p_w = dbm_to_watts(p_dbm);
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<(f64, f64, f64), Error> {
        use rand::Rng;
        let c = Constellation::square_qam(m)?;
        let mut sent = Vec::new();
        let mut decided = Vec::new();
        for b in 0..blocks {
            let mut rng = rand_chacha_seed(seed, b as u64);
            let block = SymbolBlock {
                indices: (0..n_b).map(|_| rng.random_range(0..m)).collect(),
                alphabet_size: m,
            };
            let s_hat = conventional_link(&block, &c, &ch.cfg, p_w, 64, seed ^ ((b as u64) << 16))?;
            sent.extend_from_slice(&block.indices);
            decided.extend_from_slice(&s_hat.indices);
        }
        let errors = sent.iter().zip(&decided).filter(|(a, b)| a != b).count();
        let ser = errors as f64 / sent.len() as f64;
        let s = SymbolBlock {
            indices: sent,
            alphabet_size: m,
        };
        let t = SymbolBlock {
            indices: decided,
            alphabet_size: m,
        };
        let mi = estimate_mi(&s, &t)?.mi_bits;
        let se = spectral_efficiency(mi, 1.0 / ch.cfg.bw_hz, ch.cfg.bw_hz);
        Ok((mi, se, ser))
    }));
    match result {
        Ok(Ok((mi, se, ser))) => {
            if let Some(out) = out_mi_bits.as_mut() {
                *out = mi;
            }
            if let Some(out) = out_se.as_mut() {
                *out = se;
            }
            if let Some(out) = out_ser.as_mut() {
                *out = ser;
            }
            if let Some(out) = out_snr_db.as_mut() {
                *out = db(snr(p_w, &ch.cfg));
            }
            FiberaeStatus::Ok
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => FiberaeStatus::Internal,
    }
}

fn rand_chacha_seed(seed: u64, stream: u64) -> impl rand::Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Histogram mutual information between two index sequences over an
/// alphabet of `m` symbols, in bits.
///
/// # Safety
/// `s` and `s_hat` must point to `n` readable uint32 values; `out_bits`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn fiberae_estimate_mi(
    s: *const u32,
    s_hat: *const u32,
    n: usize,
    m: usize,
    out_bits: *mut f64,
) -> FiberaeStatus {
    if s.is_null() || s_hat.is_null() || out_bits.is_null() {
        return FiberaeStatus::NullPointer;
    }
    let s = std::slice::from_raw_parts(s, n);
    let t = std::slice::from_raw_parts(s_hat, n);
    let build = |v: &[u32]| SymbolBlock {
        indices: v.iter().map(|&x| x as usize).collect(),
        alphabet_size: m,
    };
    let (a, b) = (build(s), build(t));
    if a.indices.iter().chain(&b.indices).any(|&i| i >= m) {
        return FiberaeStatus::InvalidArgument;
    }
    match estimate_mi(&a, &b) {
        Ok(mi) => {
            *out_bits = mi.mi_bits;
            FiberaeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Welch power spectral density of `n` complex samples: averaged
/// Hann-windowed periodograms, DC-centered, peak-normalized in dB.
/// `out_freq_hz` and `out_db` receive `segment_len` doubles each.
///
/// # Safety
/// `iq` must point to `2 * n` readable doubles; the output arrays must
/// hold `segment_len` writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn fiberae_welch_psd(
    iq: *const f64,
    n: usize,
    sample_rate_hz: f64,
    segment_len: usize,
    overlap: f64,
    out_freq_hz: *mut f64,
    out_db: *mut f64,
) -> FiberaeStatus {
    if iq.is_null() || out_freq_hz.is_null() || out_db.is_null() {
        return FiberaeStatus::NullPointer;
    }
    if n == 0 {
        return FiberaeStatus::InvalidArgument;
    }
    let input = std::slice::from_raw_parts(iq, 2 * n);
    let samples: Vec<Complex64> = input
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    let run = catch_unwind(AssertUnwindSafe(|| -> Result<_, Error> {
        let sig = ComplexSignal::new(samples, sample_rate_hz)?;
        welch_psd(&sig, segment_len, overlap)
    }));
    match run {
        Ok(Ok(psd)) => {
            let freqs = std::slice::from_raw_parts_mut(out_freq_hz, segment_len);
            let dbs = std::slice::from_raw_parts_mut(out_db, segment_len);
            freqs.copy_from_slice(&psd.freq_hz);
            dbs.copy_from_slice(&psd.db);
            FiberaeStatus::Ok
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => FiberaeStatus::Internal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn version_and_status_names() {
        let v = unsafe { CStr::from_ptr(fiberae_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
        let s = unsafe { CStr::from_ptr(fiberae_status_name(FiberaeStatus::InvalidArgument)) };
        assert_eq!(s.to_str().unwrap(), "invalid argument");
    }

    #[test]
    fn channel_lifecycle_and_null_safety() {
        unsafe {
            let ch = fiberae_channel_new_desk();
            assert!(!ch.is_null());
            assert_eq!(
                fiberae_channel_set_impairments(ch, 1, 0, 0),
                FiberaeStatus::Ok
            );
            assert_eq!(
                fiberae_channel_set_geometry(ch, 500.0, 25),
                FiberaeStatus::Ok
            );
            assert_eq!(
                fiberae_channel_set_geometry(ch, -1.0, 25),
                FiberaeStatus::InvalidArgument
            );
            fiberae_channel_free(ch);
            fiberae_channel_free(std::ptr::null_mut());
            assert_eq!(
                fiberae_channel_set_impairments(std::ptr::null_mut(), 1, 1, 1),
                FiberaeStatus::NullPointer
            );
        }
    }

    #[test]
    fn propagation_round_trip_is_deterministic() {
        unsafe {
            let ch = fiberae_channel_new_desk();
            fiberae_channel_set_impairments(ch, 1, 1, 1);
            let n = 1024usize;
            let iq: Vec<f64> = (0..2 * n)
                .map(|i| ((i * 37 + 11) % 101) as f64 * 1e-4)
                .collect();
            let mut out_a = vec![0.0f64; 2 * n];
            let mut out_b = vec![0.0f64; 2 * n];
            assert_eq!(
                fiberae_ssfm_propagate(ch, iq.as_ptr(), n, 7, out_a.as_mut_ptr()),
                FiberaeStatus::Ok
            );
            assert_eq!(
                fiberae_ssfm_propagate(ch, iq.as_ptr(), n, 7, out_b.as_mut_ptr()),
                FiberaeStatus::Ok
            );
            assert_eq!(out_a, out_b);
            assert_ne!(out_a, iq);
            assert_eq!(
                fiberae_ssfm_propagate(ch, iq.as_ptr(), 0, 7, out_a.as_mut_ptr()),
                FiberaeStatus::InvalidArgument
            );
            fiberae_channel_free(ch);
        }
    }

    #[test]
    fn conventional_point_reports_clean_link() {
        unsafe {
            let ch = fiberae_channel_new_desk();
            // Dispersion-only noiseless link decides perfectly.
            fiberae_channel_set_impairments(ch, 0, 1, 0);
            let (mut mi, mut se, mut ser, mut snr_db) = (0.0, 0.0, 0.0, 0.0);
            let status = fiberae_conventional_point(
                ch,
                16,
                256,
                2,
                -10.0,
                3,
                &mut mi,
                &mut se,
                &mut ser,
                &mut snr_db,
            );
            assert_eq!(status, FiberaeStatus::Ok);
            assert_eq!(ser, 0.0);
            assert!((mi - 4.0).abs() < 0.05, "mi {mi}");
            assert!((se - mi).abs() < 1e-12);
            assert!((snr_db - 29.28).abs() < 0.05);
            fiberae_channel_free(ch);
        }
    }

    #[test]
    fn mi_and_psd_entry_points() {
        unsafe {
            let s: Vec<u32> = (0..4096).map(|i| (i % 16) as u32).collect();
            let mut mi = 0.0f64;
            assert_eq!(
                fiberae_estimate_mi(s.as_ptr(), s.as_ptr(), s.len(), 16, &mut mi),
                FiberaeStatus::Ok
            );
            assert!((mi - 4.0).abs() < 1e-12);
            let bad: Vec<u32> = vec![99; 8];
            assert_eq!(
                fiberae_estimate_mi(bad.as_ptr(), bad.as_ptr(), 8, 16, &mut mi),
                FiberaeStatus::InvalidArgument
            );

            // Tone at fs/8 shows up at the right bin with 0 dB peak.
            let n = 4096usize;
            let fs = 1000.0;
            let mut iq = vec![0.0f64; 2 * n];
            for i in 0..n {
                let ph = 2.0 * std::f64::consts::PI * (i as f64) / 8.0;
                iq[2 * i] = ph.cos();
                iq[2 * i + 1] = ph.sin();
            }
            let seg = 256usize;
            let mut freqs = vec![0.0f64; seg];
            let mut dbs = vec![0.0f64; seg];
            assert_eq!(
                fiberae_welch_psd(
                    iq.as_ptr(),
                    n,
                    fs,
                    seg,
                    0.5,
                    freqs.as_mut_ptr(),
                    dbs.as_mut_ptr()
                ),
                FiberaeStatus::Ok
            );
            let (imax, _) = dbs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            assert_eq!(dbs[imax], 0.0);
            assert!((freqs[imax] - fs / 8.0).abs() < fs / seg as f64);
        }
    }
}
