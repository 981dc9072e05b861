//! Simulation of a coherent optical fiber link with a conventional DSP
//! baseline and an end-to-end trainable transceiver.
//!
//! The crate provides, bottom-up:
//!
//! * [`signal`]: complex-baseband primitives (unitary FFT, resampling,
//!   circular filtering, power normalization) and [`psd`] for Welch spectral
//!   estimates;
//! * [`channel`]: symmetric split-step propagation of the nonlinear fiber
//!   with togglable dispersion / nonlinearity / amplification noise, plus
//!   the ideal band-limited DAC/ADC front ends;
//! * [`dsp`]: the conventional transceiver: square-QAM mapping, sinc pulse
//!   shaping, dispersion-compensating FIR, nonlinear back-rotation and
//!   maximum-likelihood demapping;
//! * [`metrics`]: mutual information, spectral efficiency, SNR and
//!   capacity reference curves;
//! * [`autodiff`]: a small reverse-mode tape over real tensors with the
//!   primitives needed to backpropagate through the whole link;
//! * [`ae`]: the trainable transceiver (embedding mapper, FIR pulse
//!   shaper, windowed neural demapper) and its training loop;
//! * [`experiment`]: batch sweeps, CSV artifacts and the config file
//!   format behind the `fiberae` command-line tool;
//! * [`acceptance`]: the self-test suite run by `fiberae selftest`.
//!
//! A minimal end-to-end run of the conventional system:
//!
//! ```
//! use fiberae::channel::ChannelConfig;
//! use fiberae::dsp::{conventional_link, Constellation};
//! use fiberae::metrics::dbm_to_watts;
//! use fiberae::signal::SymbolBlock;
//!
//! // Dispersion-only desk-scale channel, no noise: decisions are exact.
//! let cfg = ChannelConfig { f_sim_hz: 160e9, n_ssfm_steps: 10, ..Default::default() }
//!     .with_impairments(false, true, false);
//! let qam = Constellation::square_qam(16)?;
//! let block = SymbolBlock::new((0..256).map(|i| i % 16).collect(), 16)?;
//! let decided = conventional_link(&block, &qam, &cfg, dbm_to_watts(-10.0), 64, 1)?;
//! assert_eq!(decided.indices, block.indices);
//! # Ok::<(), fiberae::Error>(())
//! ```

pub mod acceptance;
pub mod ae;
pub mod autodiff;
pub mod channel;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod psd;
pub mod signal;

pub use channel::{ChannelConfig, NoiseModel};
pub use error::{Error, Result};
pub use signal::{ComplexSignal, Spectrum, SymbolBlock};
