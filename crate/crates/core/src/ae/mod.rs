//! End-to-end trainable transceiver: an embedding-matrix mapper and a
//! complex FIR pulse shaper at the transmitter, a sliding-window dense
//! network demapper at the receiver, trained by exact backpropagation
//! through the differentiable fiber channel.
//!
//! The transmit pipeline is deliberately the same template as the
//! conventional system (lookup, normalize, upsample, filter, band-limit,
//! power-normalize), so a trained model can be compared block by block
//! against the baseline. The low-pass filter runs *before* the final power
//! normalization: only that ordering makes out-of-band energy cost real
//! launch power, which steers the optimizer away from parking energy
//! outside the transceiver bandwidth.

pub mod checkpoint;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{clip_global_norm, AdamState, Tape, Tensor, Var};
use crate::channel::{cd_phasors, step_noise, ChannelConfig};
use crate::dsp::sinc_taps;
use crate::error::{Error, Result};
use crate::metrics::{db, estimate_mi, snr, spectral_efficiency};
use crate::signal::{lowpass_mask, SymbolBlock};

/// Training configuration: channel, architecture and optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub channel: ChannelConfig,
    /// Alphabet size M.
    pub m: usize,
    /// Symbols per training block (batch size).
    pub n_b: usize,
    /// Single-sided receiver window: the demapper sees `2 n_adj + 1`
    /// symbol-rate samples.
    pub n_adj: usize,
    /// Launch power in watts.
    pub launch_power_w: f64,
    /// Shaper length in simulation-rate taps (odd).
    pub shaper_len: usize,
    /// Hidden layer widths of the receiver network (output is always M).
    pub rx_hidden: Vec<usize>,
    pub iterations: usize,
    /// Base Adam learning rate; halved at 25/50/75% of the iterations.
    pub lr: f64,
    pub seed: u64,
    /// Independent evaluation blocks for the post-training metrics.
    pub eval_blocks: usize,
}

impl TrainConfig {
    /// Small-footprint preset: M=16, 256-symbol blocks at 8 samples per
    /// symbol (160 GHz grid), 50 split steps over the full 1000 km.
    pub fn desk(channel: ChannelConfig, launch_power_w: f64) -> Self {
        let channel = ChannelConfig {
            f_sim_hz: 160e9,
            bw_hz: 20e9,
            n_ssfm_steps: 50,
            ..channel
        };
        let osf = channel.oversampling();
        Self {
            channel,
            m: 16,
            n_b: 256,
            n_adj: 0,
            launch_power_w,
            shaper_len: 64 * osf + 1,
            rx_hidden: vec![128, 64, 64],
            iterations: 20_000,
            lr: 1e-3,
            seed: 1,
            eval_blocks: 20,
        }
    }

    /// Full-scale preset: the reference channel grid (1 THz, 200 steps),
    /// M=256, 2048-symbol blocks and the wide receiver network
    /// (2048, then five 512-wide hidden layers). Intended for long runs,
    /// not for the test suite.
    pub fn full(channel: ChannelConfig, launch_power_w: f64, n_adj: usize) -> Self {
        let osf = channel.oversampling();
        Self {
            channel,
            m: 256,
            n_b: 2048,
            n_adj,
            launch_power_w,
            shaper_len: 64 * osf + 1,
            rx_hidden: vec![2048, 512, 512, 512, 512, 512],
            iterations: 100_000,
            lr: 1e-3,
            seed: 1,
            eval_blocks: 20,
        }
    }

    /// Receiver layer dimension chain `[input, hidden..., M]`.
    pub fn rx_dims(&self) -> Vec<usize> {
        let mut dims = vec![2 * (2 * self.n_adj + 1)];
        dims.extend_from_slice(&self.rx_hidden);
        dims.push(self.m);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.m < 2 {
            return Err(Error::invalid("alphabet must have at least two symbols"));
        }
        if self.shaper_len.is_multiple_of(2) {
            return Err(Error::invalid("shaper length must be odd"));
        }
        if 2 * self.n_adj + 1 > self.n_b {
            return Err(Error::invalid("receiver window exceeds block length"));
        }
        if self.shaper_len > self.n_b * self.channel.oversampling() {
            return Err(Error::invalid("shaper longer than the simulation block"));
        }
        Ok(())
    }

    /// Canonical flat text used for the checkpoint compatibility hash.
    pub fn canonical_string(&self) -> String {
        let c = &self.channel;
        format!(
            "alpha={} beta2={} bw={} cd={} f0={} f_sim={} gamma={} knl={} l={} n_sp={} \
             nssfm={} awgn={} | m={} n_b={} n_adj={} p={} lf={} rx={:?} iters={} lr={} seed={} \
             eval={}",
            c.alpha_per_km,
            c.beta2_s2_per_km,
            c.bw_hz,
            c.enable_cd,
            c.f0_hz,
            c.f_sim_hz,
            c.gamma_per_km_w,
            c.enable_knl,
            c.length_km,
            c.n_sp,
            c.n_ssfm_steps,
            c.enable_awgn,
            self.m,
            self.n_b,
            self.n_adj,
            self.launch_power_w,
            self.shaper_len,
            self.rx_hidden,
            self.iterations,
            self.lr,
            self.seed,
            self.eval_blocks,
        )
    }
}

/// All trainable tensors, flat for the optimizer with structured accessors.
/// Layout: `[embedding, shaper, w0, b0, w1, b1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub params: Vec<Tensor>,
    pub m: usize,
    pub n_adj: usize,
    pub rx_dims: Vec<usize>,
}

impl AeModel {
    /// Seeded initialization: uniform random embedding, truncated-sinc
    /// shaper (a working Nyquist system from step zero), He-style dense
    /// layers.
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX); // init stream, disjoint from data/noise

        // Embedding scaled to roughly unit mean power; the transmit chain
        // renormalizes exactly anyway.
        let a = 1.5f64.sqrt();
        let emb = Tensor::from_vec(
            (0..cfg.m * 2).map(|_| rng.random_range(-a..a)).collect(),
            cfg.m,
            2,
        );

        let osf = cfg.channel.oversampling();
        let span = (cfg.shaper_len - 1) / osf;
        let mut sinc = sinc_taps(osf, span);
        sinc.resize(cfg.shaper_len, Complex64::ZERO);
        let shaper = Tensor::from_complex(&sinc);

        let mut params = vec![emb, shaper];
        let dims = cfg.rx_dims();
        let n_layers = dims.len() - 1;
        for (li, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            // He-style hidden layers; zero output head so the untrained
            // demapper predicts the uniform distribution.
            let std = if li + 1 == n_layers {
                0.0
            } else {
                (2.0 / fan_in as f64).sqrt()
            };
            let weight = Tensor::from_vec(
                (0..fan_in * fan_out)
                    .map(|_| {
                        std * <StandardNormal as Distribution<f64>>::sample(
                            &StandardNormal,
                            &mut rng,
                        )
                    })
                    .collect(),
                fan_in,
                fan_out,
            );
            params.push(weight);
            params.push(Tensor::zeros(1, fan_out));
        }
        Ok(Self {
            params,
            m: cfg.m,
            n_adj: cfg.n_adj,
            rx_dims: dims,
        })
    }

    pub fn embedding(&self) -> &Tensor {
        &self.params[0]
    }

    pub fn shaper(&self) -> &Tensor {
        &self.params[1]
    }

    pub fn num_rx_layers(&self) -> usize {
        self.rx_dims.len() - 1
    }

    /// Learned constellation points (raw embedding rows).
    pub fn constellation_points(&self) -> Vec<Complex64> {
        self.embedding().to_complex()
    }

    /// Learned shaper taps.
    pub fn shaper_taps(&self) -> Vec<Complex64> {
        self.shaper().to_complex()
    }
}

/// Leaf handles for one recorded training step.
struct ModelVars {
    vars: Vec<Var>,
}

impl ModelVars {
    fn record(tape: &mut Tape, model: &AeModel) -> Self {
        Self {
            vars: model.params.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    fn embedding(&self) -> Var {
        self.vars[0]
    }

    fn shaper(&self) -> Var {
        self.vars[1]
    }

    fn rx_layer(&self, i: usize) -> (Var, Var) {
        (self.vars[2 + 2 * i], self.vars[3 + 2 * i])
    }
}

/// Differentiable transmit DSP: embed, normalize to unit power, upsample,
/// shape with the trainable FIR, brickwall low-pass, then normalize to the
/// launch power. Returns the launched block at the simulation rate.
fn ae_tx_tape(
    tape: &mut Tape,
    labels: &[usize],
    vars: &ModelVars,
    cfg: &TrainConfig,
) -> Result<Var> {
    let osf = cfg.channel.oversampling();
    let n = labels.len() * osf;
    let c_raw = tape.gather(vars.embedding(), labels);
    let c = tape.power_normalize(c_raw, 1.0)?;
    let up = tape.upsample(c, osf);
    let center = (cfg.shaper_len - 1) / 2;
    let shaped = tape.circular_fir_fft(up, vars.shaper(), center);
    let mask: Vec<Complex64> = lowpass_mask(n, cfg.channel.f_sim_hz, cfg.channel.bw_hz / 2.0)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    let xf = tape.fft(shaped);
    let xm = tape.cmul_const(xf, &mask);
    let xt = tape.ifft(xm);
    tape.power_normalize(xt, cfg.launch_power_w)
}

/// Differentiable symmetric split-step propagation. Noise enters as
/// parameter-independent constants drawn from the shared per-step streams,
/// so the recorded graph and [`crate::channel::ssfm_propagate`] see
/// identical realizations for the same seed.
fn ssfm_tape(tape: &mut Tape, x: Var, cfg: &ChannelConfig, seed: u64) -> Var {
    let n = tape.value(x).rows;
    let dz = cfg.dz_km();
    let half_cd = if cfg.enable_cd {
        Some(cd_phasors(n, cfg.f_sim_hz, cfg.beta2_s2_per_km, dz / 2.0))
    } else {
        None
    };
    let mut q = x;
    for step in 0..cfg.n_ssfm_steps {
        if let Some(ph) = &half_cd {
            let f = tape.fft(q);
            let m = tape.cmul_const(f, ph);
            q = tape.ifft(m);
        }
        if cfg.enable_knl {
            let p = tape.sq_mag(q);
            let theta = tape.scale(p, -cfg.gamma_per_km_w * dz);
            let rot = tape.exp_j(theta);
            q = tape.cmul(q, rot);
        }
        if let Some(ph) = &half_cd {
            let f = tape.fft(q);
            let m = tape.cmul_const(f, ph);
            q = tape.ifft(m);
        }
        if let Some(noise) = step_noise(cfg, seed, step, n) {
            let t = Tensor::from_complex(&noise);
            q = tape.add_const(q, &t);
        }
    }
    q
}

/// Brickwall DAC/ADC front end on the tape.
fn lowpass_tape(tape: &mut Tape, x: Var, cfg: &ChannelConfig) -> Var {
    let n = tape.value(x).rows;
    let mask: Vec<Complex64> = lowpass_mask(n, cfg.f_sim_hz, cfg.bw_hz / 2.0)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    let f = tape.fft(x);
    let m = tape.cmul_const(f, &mask);
    tape.ifft(m)
}

/// Differentiable receive DSP: downsample to symbol rate, gain-normalize by
/// the nominal launch power, slide the circular window, and run the dense
/// demapper. Returns per-symbol logits (softmax is fused into the loss; use
/// row-argmax for hard decisions).
fn ae_rx_tape(tape: &mut Tape, y: Var, vars: &ModelVars, cfg: &TrainConfig) -> Var {
    let osf = cfg.channel.oversampling();
    let y_sam = tape.downsample(y, osf, 0);
    // Fixed receive gain: physical launch powers are ~1e-4 W, far below the
    // scale dense layers are initialized for.
    let y_n = tape.scale(y_sam, cfg.launch_power_w.sqrt().recip());
    let mut h = tape.window(y_n, cfg.n_adj);
    let n_layers = vars.vars.len() / 2 - 1;
    for i in 0..n_layers {
        let (w, b) = vars.rx_layer(i);
        let z = tape.matmul(h, w);
        h = tape.bias_add(z, b);
        if i + 1 < n_layers {
            h = tape.elu(h);
        }
    }
    h
}

/// Forward pass of the full system for one block; returns the logits
/// variable together with the tape that recorded it.
fn forward(
    model: &AeModel,
    cfg: &TrainConfig,
    labels: &[usize],
    channel_seed: u64,
) -> Result<(Tape, ModelVars, Var, Var)> {
    let mut tape = Tape::new();
    let vars = ModelVars::record(&mut tape, model);
    let x = ae_tx_tape(&mut tape, labels, &vars, cfg)?;
    let x_o = lowpass_tape(&mut tape, x, &cfg.channel); // DAC
    let y_o = ssfm_tape(&mut tape, x_o, &cfg.channel, channel_seed);
    let y = lowpass_tape(&mut tape, y_o, &cfg.channel); // ADC
    let logits = ae_rx_tape(&mut tape, y, &vars, cfg);
    let loss = tape.softmax_cross_entropy(logits, labels);
    Ok((tape, vars, logits, loss))
}

/// Run the full differentiable system once and return per-symbol
/// probability rows (softmax of the logits). Used by tests and probes.
pub fn ae_probabilities(
    model: &AeModel,
    cfg: &TrainConfig,
    labels: &[usize],
    channel_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let (tape, _, logits, _) = forward(model, cfg, labels, channel_seed)?;
    let t = tape.value(logits);
    Ok(t.data
        .chunks_exact(t.cols)
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let s: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / s).collect()
        })
        .collect())
}

/// The launched transmit block for the given labels (forward TX only).
pub fn ae_tx_signal(
    model: &AeModel,
    cfg: &TrainConfig,
    labels: &[usize],
) -> Result<Vec<Complex64>> {
    let mut tape = Tape::new();
    let vars = ModelVars::record(&mut tape, model);
    let x = ae_tx_tape(&mut tape, labels, &vars, cfg)?;
    Ok(tape.value(x).to_complex())
}

fn fresh_labels(rng: &mut ChaCha12Rng, n: usize, m: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..m)).collect()
}

/// One optimizer step on a fresh random block. Returns the scalar training
/// loss in nats.
pub fn train_step(
    model: &mut AeModel,
    state: &mut AdamState,
    cfg: &TrainConfig,
    step: usize,
    lr: f64,
) -> Result<f64> {
    let mut data_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    data_rng.set_stream(u64::MAX - 1);
    data_rng.set_word_pos((step as u128) << 40);
    let labels = fresh_labels(&mut data_rng, cfg.n_b, cfg.m);
    let channel_seed = cfg.seed.wrapping_add(step as u64);

    let (tape, vars, _logits, loss) = forward(model, cfg, &labels, channel_seed)?;
    let loss_val = tape.value(loss).item();
    if !loss_val.is_finite() {
        return Err(Error::Diverged(format!("non-finite loss at step {step}")));
    }
    let grads = tape.backward(loss)?;
    let mut grad_tensors: Vec<Tensor> = vars
        .vars
        .iter()
        .zip(&model.params)
        .map(|(&v, p)| grads.get_or_zeros(v, p.rows, p.cols))
        .collect();
    clip_global_norm(&mut grad_tensors, 1.0);
    state.update(&mut model.params, &grad_tensors, lr)?;
    Ok(loss_val)
}

/// Post-training metrics over independent evaluation blocks with seeds
/// disjoint from the training streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mi_bits: f64,
    pub se: f64,
    pub ser: f64,
    pub snr_db: f64,
    pub n_symbols: usize,
}

pub fn evaluate(model: &AeModel, cfg: &TrainConfig) -> Result<EvalResult> {
    let mut sent = Vec::new();
    let mut decided = Vec::new();
    for b in 0..cfg.eval_blocks {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000_0000_0001);
        rng.set_stream(b as u64);
        let labels = fresh_labels(&mut rng, cfg.n_b, cfg.m);
        let channel_seed = (cfg.seed ^ 0xe7a1_0000).wrapping_add(0x1_0000_0000 + b as u64);
        let probs = ae_probabilities(model, cfg, &labels, channel_seed)?;
        for (row, &l) in probs.iter().zip(&labels) {
            let am = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            sent.push(l);
            decided.push(am);
        }
    }
    let n = sent.len();
    let s = SymbolBlock {
        indices: sent,
        alphabet_size: cfg.m,
    };
    let s_hat = SymbolBlock {
        indices: decided,
        alphabet_size: cfg.m,
    };
    let mi = estimate_mi(&s, &s_hat)?;
    let ser = s
        .indices
        .iter()
        .zip(&s_hat.indices)
        .filter(|(a, b)| a != b)
        .count() as f64
        / n as f64;
    let bw = cfg.channel.bw_hz;
    Ok(EvalResult {
        mi_bits: mi.mi_bits,
        se: spectral_efficiency(mi.mi_bits, 1.0 / bw, bw),
        ser,
        snr_db: db(snr(cfg.launch_power_w, &cfg.channel)),
        n_symbols: n,
    })
}

/// Full training run with the staircase learning-rate schedule.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AeModel,
    pub loss_history: Vec<f64>,
    pub eval: Option<EvalResult>,
    pub diverged: bool,
}

/// Learning rate at `step`: halved after each quarter of the run.
pub fn lr_at(cfg: &TrainConfig, step: usize) -> f64 {
    let quarter = (cfg.iterations / 4).max(1);
    cfg.lr * 0.5f64.powi((step / quarter).min(3) as i32)
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_callback(cfg, |_, _, _| true)
}

/// Training loop with an observer. The callback sees `(step, loss, model)`
/// after each step and may return `false` to stop early (the model is kept
/// as-is). Divergence aborts the loop and flags the outcome rather than
/// erroring, so partial histories remain inspectable.
pub fn train_with_callback<F>(cfg: &TrainConfig, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64, &AeModel) -> bool,
{
    cfg.validate()?;
    let mut model = AeModel::init(cfg)?;
    let mut state = AdamState::new(&model.params);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut diverged = false;

    for step in 0..cfg.iterations {
        match train_step(&mut model, &mut state, cfg, step, lr_at(cfg, step)) {
            Ok(loss) => {
                history.push(loss);
                if !observer(step, loss, &model) {
                    break;
                }
            }
            Err(Error::Diverged(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let eval = if diverged {
        None
    } else {
        Some(evaluate(&model, cfg)?)
    };
    Ok(TrainOutcome {
        model,
        loss_history: history,
        eval,
        diverged,
    })
}

/// Finite-difference check of the complete differentiable system (TX,
/// channel, RX, loss) against the tape gradients, over every parameter.
/// Returns the worst per-coordinate relative error.
pub fn gradcheck_composed(model: &AeModel, cfg: &TrainConfig, labels: &[usize]) -> f64 {
    let leaves = model.params.clone();
    let cfg = cfg.clone();
    let labels = labels.to_vec();
    crate::autodiff::grad_check(
        move |tape, vars| {
            let mv = ModelVars {
                vars: vars.to_vec(),
            };
            let x = ae_tx_tape(tape, &labels, &mv, &cfg).unwrap();
            let x_o = lowpass_tape(tape, x, &cfg.channel);
            let y_o = ssfm_tape(tape, x_o, &cfg.channel, 123);
            let y = lowpass_tape(tape, y_o, &cfg.channel);
            let logits = ae_rx_tape(tape, y, &mv, &cfg);
            tape.softmax_cross_entropy(logits, &labels)
        },
        &leaves,
        1e-5,
    )
}

/// Symbol-rate response of the learned transmit chain cascaded with the
/// *linear* part of the channel (Kerr and noise off): a single unit symbol
/// at the block center is shaped, band-limited, dispersed, band-limited
/// again and resampled. Residual off-center energy is the end-to-end ISI
/// the receiver window has to cope with.
pub fn combined_symbol_response(model: &AeModel, cfg: &TrainConfig) -> Result<Vec<Complex64>> {
    let mut tape = Tape::new();
    let shaper = tape.leaf(model.shaper().clone());
    let osf = cfg.channel.oversampling();
    let n = cfg.n_b * osf;
    let mut impulse = vec![Complex64::ZERO; cfg.n_b];
    impulse[cfg.n_b / 2] = Complex64::new(1.0, 0.0);
    let imp = tape.leaf(Tensor::from_complex(&impulse));
    let up = tape.upsample(imp, osf);
    let center = (cfg.shaper_len - 1) / 2;
    let shaped = tape.circular_fir_fft(up, shaper, center);
    let _ = n;
    let lp = lowpass_tape(&mut tape, shaped, &cfg.channel);
    let linear_channel = ChannelConfig {
        enable_knl: false,
        enable_awgn: false,
        ..cfg.channel.clone()
    };
    let out = ssfm_tape(&mut tape, lp, &linear_channel, 0);
    let y = lowpass_tape(&mut tape, out, &cfg.channel);
    let y_sam = tape.downsample(y, osf, 0);
    Ok(tape.value(y_sam).to_complex())
}

/// Fraction of the combined-response energy away from its strongest tap.
pub fn residual_isi_fraction(response: &[Complex64]) -> f64 {
    let total: f64 = response.iter().map(|v| v.norm_sqr()).sum();
    let main = response.iter().map(|v| v.norm_sqr()).fold(0.0f64, f64::max);
    if total <= 0.0 {
        return 1.0;
    }
    1.0 - main / total
}

/// Frequency response of the learned shaper on a dense grid: returns
/// `(frequency_hz, unwrapped_phase_rad)` over the band `|f| <= band_hz`,
/// ordered by increasing frequency with the phase unwrapped from the band
/// center outward.
pub fn shaper_band_phase(
    model: &AeModel,
    cfg: &TrainConfig,
    band_hz: f64,
    n_fft: usize,
) -> (Vec<f64>, Vec<f64>) {
    let taps = model.shaper_taps();
    let center = (taps.len() - 1) / 2;
    let fs = cfg.channel.f_sim_hz;
    let spacing = fs / n_fft as f64;
    // Frequencies in ascending order across the band of interest.
    let mut freqs = Vec::new();
    let half = (band_hz / spacing).floor() as i64;
    for k in -half..=half {
        freqs.push(k as f64 * spacing);
    }
    let raw_phase: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            let mut h = Complex64::ZERO;
            for (k, &t) in taps.iter().enumerate() {
                let delay = (k as f64 - center as f64) / fs;
                h += t * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * delay);
            }
            h.arg()
        })
        .collect();

    // Unwrap outward from the center bin.
    let mid = raw_phase.len() / 2;
    let mut phase = raw_phase.clone();
    for i in (mid + 1)..phase.len() {
        let mut d = phase[i] - phase[i - 1];
        while d > std::f64::consts::PI {
            phase[i] -= 2.0 * std::f64::consts::PI;
            d = phase[i] - phase[i - 1];
        }
        while d < -std::f64::consts::PI {
            phase[i] += 2.0 * std::f64::consts::PI;
            d = phase[i] - phase[i - 1];
        }
    }
    for i in (0..mid).rev() {
        let mut d = phase[i] - phase[i + 1];
        while d > std::f64::consts::PI {
            phase[i] -= 2.0 * std::f64::consts::PI;
            d = phase[i] - phase[i + 1];
        }
        while d < -std::f64::consts::PI {
            phase[i] += 2.0 * std::f64::consts::PI;
            d = phase[i] - phase[i + 1];
        }
    }
    (freqs, phase)
}
