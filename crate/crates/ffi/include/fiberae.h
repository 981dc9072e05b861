/* C interface for the fiberae fiber-link simulation library.
 *
 * Kept in sync with src/lib.rs; regenerate with
 * `cbindgen --config cbindgen.toml --crate fiberae-ffi --output include/fiberae.h`
 * where cbindgen is available.
 *
 * Complex buffers are interleaved re,im pairs of double: a signal of n
 * complex samples occupies 2*n doubles.
 */

#ifndef FIBERAE_H
#define FIBERAE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/* Result codes returned by every fallible entry point. */
typedef enum FiberaeStatus {
  FIBERAE_STATUS_OK = 0,
  FIBERAE_STATUS_INVALID_ARGUMENT = 1,
  FIBERAE_STATUS_DEGENERATE_INPUT = 2,
  FIBERAE_STATUS_DIVERGED = 3,
  FIBERAE_STATUS_INTERNAL = 4,
  FIBERAE_STATUS_NULL_POINTER = 5,
} FiberaeStatus;

/* Opaque channel-configuration handle. */
typedef struct FiberaeChannel FiberaeChannel;

#ifdef __cplusplus
extern "C" {
#endif

/* Static, NUL-terminated crate version string. */
const char *fiberae_version(void);

/* Human-readable name of a status code (static storage). */
const char *fiberae_status_name(FiberaeStatus status);

/* New channel at the full-scale default parameters (1 THz grid, 200
 * split steps, 1000 km, all impairments on). */
FiberaeChannel *fiberae_channel_new_full(void);

/* New channel at the reduced desk-scale grid (160 GHz, 50 split steps). */
FiberaeChannel *fiberae_channel_new_desk(void);

/* Release a channel handle. NULL is accepted and ignored. */
void fiberae_channel_free(FiberaeChannel *ch);

/* Toggle the three impairments (AWGN, chromatic dispersion, Kerr
 * nonlinearity). */
FiberaeStatus fiberae_channel_set_impairments(FiberaeChannel *ch,
                                              int awgn,
                                              int cd,
                                              int knl);

/* Set fiber length and split-step count. */
FiberaeStatus fiberae_channel_set_geometry(FiberaeChannel *ch,
                                           double length_km,
                                           size_t n_ssfm_steps);

/* Link SNR in dB at the given launch power. */
FiberaeStatus fiberae_snr_db(const FiberaeChannel *ch,
                             double p_dbm,
                             double *out_snr_db);

/* Propagate n complex samples (interleaved re/im, sampled at the channel's
 * simulation rate) through the fiber. out_iq receives 2*n doubles and may
 * alias iq. */
FiberaeStatus fiberae_ssfm_propagate(const FiberaeChannel *ch,
                                     const double *iq,
                                     size_t n,
                                     uint64_t seed,
                                     double *out_iq);

/* Run the conventional transceiver at one launch power: `blocks`
 * independent blocks of n_b square-QAM symbols from an alphabet of m
 * points. Output pointers may be NULL when a metric is not wanted. */
FiberaeStatus fiberae_conventional_point(const FiberaeChannel *ch,
                                         size_t m,
                                         size_t n_b,
                                         size_t blocks,
                                         double p_dbm,
                                         uint64_t seed,
                                         double *out_mi_bits,
                                         double *out_se,
                                         double *out_ser,
                                         double *out_snr_db);

/* Histogram mutual information between two index sequences over an
 * alphabet of m symbols, in bits. */
FiberaeStatus fiberae_estimate_mi(const uint32_t *s,
                                  const uint32_t *s_hat,
                                  size_t n,
                                  size_t m,
                                  double *out_bits);

/* Welch power spectral density of n complex samples: averaged
 * Hann-windowed periodograms, DC-centered, peak-normalized in dB.
 * out_freq_hz and out_db receive segment_len doubles each. */
FiberaeStatus fiberae_welch_psd(const double *iq,
                                size_t n,
                                double sample_rate_hz,
                                size_t segment_len,
                                double overlap,
                                double *out_freq_hz,
                                double *out_db);

#ifdef __cplusplus
}  /* extern "C" */
#endif

#endif  /* FIBERAE_H */
