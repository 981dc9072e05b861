//! Batch experiment front end: flat key-value configs, launch-power sweeps
//! over the channel variants for either transceiver, and the CSV artifacts
//! behind the performance and spectrum plots.
//!
//! Every run writes into `<out>/<run-id>/` where the run id is a hash of
//! the resolved configuration plus the seed, so identical configs land in
//! identical locations and byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::ae::checkpoint::{self, fnv1a64};
use crate::ae::{self, AeModel, TrainConfig};
use crate::channel::{adc, ssfm_propagate, ChannelConfig};
use crate::dsp::{conventional_rx, conventional_tx, sinc, Constellation};
use crate::error::{Error, Result};
use crate::metrics::{
    awgn_capacity, db, dbm_to_watts, estimate_mi, qam_symbolwise_capacity, snr, spectral_efficiency,
};
use crate::psd::welch_psd;
use crate::signal::{ComplexSignal, SymbolBlock};

/// Scale preset: `Desk` is sized for minutes-long runs, `Full` reproduces
/// the full reference grid (1 THz simulation rate, 256-ary alphabet) and is
/// meant for long unattended runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

/// Which impairments the channel applies: AWGN only, AWGN+CD, or
/// AWGN+CD+KNL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelVariant {
    A,
    Ad,
    Adn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Conventional,
    Ae,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub variant: ChannelVariant,
    pub system: System,
    pub seed: u64,
    pub out: PathBuf,
    pub powers_dbm: Vec<f64>,
    pub n_adj: usize,
    pub m: usize,
    pub n_b: usize,
    pub eval_blocks: usize,
    pub iterations: usize,
    pub lr: f64,
    pub span_symbols: usize,
    pub welch_segment: usize,
    pub channel: ChannelConfig,
}

fn default_powers(preset: Preset) -> Vec<f64> {
    let top = match preset {
        Preset::Desk => 0,
        Preset::Full => 10,
    };
    (-15..=top / 2).map(|k| (2 * k) as f64).collect()
}

impl ExperimentConfig {
    pub fn preset_defaults(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                preset,
                variant: ChannelVariant::Adn,
                system: System::Conventional,
                seed: 1,
                out: PathBuf::from("runs"),
                powers_dbm: default_powers(preset),
                n_adj: 0,
                m: 16,
                n_b: 256,
                eval_blocks: 20,
                iterations: 20_000,
                lr: 1e-3,
                span_symbols: 64,
                welch_segment: 512,
                channel: ChannelConfig {
                    f_sim_hz: 160e9,
                    n_ssfm_steps: 50,
                    ..Default::default()
                },
            },
            Preset::Full => Self {
                preset,
                variant: ChannelVariant::Adn,
                system: System::Conventional,
                seed: 1,
                out: PathBuf::from("runs"),
                powers_dbm: default_powers(preset),
                n_adj: 0,
                m: 256,
                n_b: 2048,
                eval_blocks: 20,
                iterations: 100_000,
                lr: 1e-3,
                span_symbols: 64,
                welch_segment: 2048,
                channel: ChannelConfig::default(),
            },
        }
    }

    /// Channel with the variant's impairment toggles applied.
    pub fn effective_channel(&self) -> ChannelConfig {
        let (a, d, n) = match self.variant {
            ChannelVariant::A => (true, false, false),
            ChannelVariant::Ad => (true, true, false),
            ChannelVariant::Adn => (true, true, true),
        };
        self.channel.clone().with_impairments(a, d, n)
    }

    /// Training configuration for one launch power.
    pub fn train_config(&self, launch_power_w: f64) -> TrainConfig {
        let rx_hidden = match self.preset {
            Preset::Desk => vec![128, 64, 64],
            Preset::Full => vec![2048, 512, 512, 512, 512, 512],
        };
        TrainConfig {
            channel: self.effective_channel(),
            m: self.m,
            n_b: self.n_b,
            n_adj: self.n_adj,
            launch_power_w,
            shaper_len: self.span_symbols * self.channel.oversampling() + 1,
            rx_hidden,
            iterations: self.iterations,
            lr: self.lr,
            seed: self.seed,
            eval_blocks: self.eval_blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.powers_dbm.is_empty() {
            return Err(Error::Config("power grid must be non-empty".into()));
        }
        if self.preset == Preset::Desk {
            if let Some(&p) = self.powers_dbm.iter().find(|&&p| p > 0.0) {
                return Err(Error::Config(format!(
                    "desk preset rejects launch powers above 0 dBm (got {p} dBm); \
                     the reduced simulation rate cannot carry the nonlinear bandwidth expansion"
                )));
            }
        }
        if !self.m.is_power_of_two() || self.m < 4 {
            return Err(Error::Config(
                "alphabet size must be a power of two >= 4".into(),
            ));
        }
        Ok(())
    }

    /// Canonical flat rendering of everything that affects results (the
    /// output directory is excluded). Used for `config.resolved` and the
    /// run id.
    pub fn resolved_text(&self) -> String {
        let c = &self.channel;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("alpha_per_km", format!("{}", c.alpha_per_km));
        kv("beta2_s2_per_km", format!("{}", c.beta2_s2_per_km));
        kv("bw_hz", format!("{}", c.bw_hz));
        kv(
            "channel",
            match self.variant {
                ChannelVariant::A => "a".into(),
                ChannelVariant::Ad => "ad".into(),
                ChannelVariant::Adn => "adn".into(),
            },
        );
        kv("eval_blocks", format!("{}", self.eval_blocks));
        kv("f0_hz", format!("{}", c.f0_hz));
        kv("f_sim_hz", format!("{}", c.f_sim_hz));
        kv("gamma_per_km_w", format!("{}", c.gamma_per_km_w));
        kv("iterations", format!("{}", self.iterations));
        kv("length_km", format!("{}", c.length_km));
        kv("lr", format!("{}", self.lr));
        kv("m", format!("{}", self.m));
        kv("n_adj", format!("{}", self.n_adj));
        kv("n_b", format!("{}", self.n_b));
        kv("n_sp", format!("{}", c.n_sp));
        kv("n_ssfm", format!("{}", c.n_ssfm_steps));
        kv(
            "powers_dbm",
            self.powers_dbm
                .iter()
                .map(|p| format!("{p}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "preset",
            match self.preset {
                Preset::Desk => "desk".into(),
                Preset::Full => "full".into(),
            },
        );
        kv("seed", format!("{}", self.seed));
        kv("span_symbols", format!("{}", self.span_symbols));
        kv(
            "system",
            match self.system {
                System::Conventional => "conv".into(),
                System::Ae => "ae".into(),
            },
        );
        kv("welch_segment", format!("{}", self.welch_segment));
        s
    }

    pub fn run_id(&self) -> String {
        format!(
            "{:016x}-s{}",
            fnv1a64(self.resolved_text().as_bytes()),
            self.seed
        )
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(self.run_id())
    }
}

/// Optional overrides collected from the command line; every field beats
/// the config file, which beats the preset defaults.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub preset: Option<Preset>,
    pub channel: Option<ChannelVariant>,
    pub system: Option<System>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub powers_dbm: Vec<f64>,
    pub n_adj: Option<usize>,
}

/// Parse the flat `key = value` config grammar. Lines starting with `#`
/// and blank lines are ignored; unknown keys are hard errors.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`",
                ln + 1
            )));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_preset(v: &str) -> Result<Preset> {
    match v {
        "desk" => Ok(Preset::Desk),
        "full" => Ok(Preset::Full),
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (expected desk|full)"
        ))),
    }
}

pub fn parse_variant(v: &str) -> Result<ChannelVariant> {
    match v {
        "a" => Ok(ChannelVariant::A),
        "ad" => Ok(ChannelVariant::Ad),
        "adn" => Ok(ChannelVariant::Adn),
        other => Err(Error::Config(format!(
            "unknown channel `{other}` (expected a|ad|adn)"
        ))),
    }
}

pub fn parse_system(v: &str) -> Result<System> {
    match v {
        "conv" => Ok(System::Conventional),
        "ae" => Ok(System::Ae),
        other => Err(Error::Config(format!(
            "unknown system `{other}` (expected conv|ae)"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("key `{k}`: cannot parse `{v}`")))
}

/// Resolve preset defaults, config file and CLI overrides into a full
/// configuration.
pub fn resolve_config(file_text: Option<&str>, cli: &CliOverrides) -> Result<ExperimentConfig> {
    let pairs = match file_text {
        Some(t) => parse_config_file(t)?,
        None => Vec::new(),
    };

    // The preset decides the defaults, so find it first: CLI beats file.
    let mut preset = Preset::Desk;
    if let Some((_, v)) = pairs.iter().find(|(k, _)| k == "preset") {
        preset = parse_preset(v)?;
    }
    if let Some(p) = cli.preset {
        preset = p;
    }
    let mut cfg = ExperimentConfig::preset_defaults(preset);

    for (k, v) in &pairs {
        match k.as_str() {
            "preset" => {}
            "channel" => cfg.variant = parse_variant(v)?,
            "system" => cfg.system = parse_system(v)?,
            "seed" => cfg.seed = parse_num(k, v)?,
            "out" => cfg.out = PathBuf::from(v),
            "powers_dbm" => {
                cfg.powers_dbm = v
                    .split(',')
                    .map(|p| parse_num::<f64>(k, p.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "n_adj" => cfg.n_adj = parse_num(k, v)?,
            "m" => cfg.m = parse_num(k, v)?,
            "n_b" => cfg.n_b = parse_num(k, v)?,
            "eval_blocks" => cfg.eval_blocks = parse_num(k, v)?,
            "iterations" => cfg.iterations = parse_num(k, v)?,
            "lr" => cfg.lr = parse_num(k, v)?,
            "span_symbols" => cfg.span_symbols = parse_num(k, v)?,
            "welch_segment" => cfg.welch_segment = parse_num(k, v)?,
            "f_sim_hz" => cfg.channel.f_sim_hz = parse_num(k, v)?,
            "bw_hz" => cfg.channel.bw_hz = parse_num(k, v)?,
            "n_ssfm" => cfg.channel.n_ssfm_steps = parse_num(k, v)?,
            "length_km" => cfg.channel.length_km = parse_num(k, v)?,
            "beta2_ps2_per_km" => {
                cfg.channel.beta2_s2_per_km = parse_num::<f64>(k, v)? * 1e-24;
            }
            "gamma_per_km_w" => cfg.channel.gamma_per_km_w = parse_num(k, v)?,
            "alpha_per_km" => cfg.channel.alpha_per_km = parse_num(k, v)?,
            "n_sp" => cfg.channel.n_sp = parse_num(k, v)?,
            "f0_hz" => cfg.channel.f0_hz = parse_num(k, v)?,
            other => {
                return Err(Error::Config(format!("unknown config key `{other}`")));
            }
        }
    }

    if let Some(v) = cli.channel {
        cfg.variant = v;
    }
    if let Some(v) = cli.system {
        cfg.system = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if !cli.powers_dbm.is_empty() {
        cfg.powers_dbm = cli.powers_dbm.clone();
    }
    if let Some(v) = cli.n_adj {
        cfg.n_adj = v;
    }

    cfg.validate()?;
    Ok(cfg)
}

/// One row of `se.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p_dbm: f64,
    pub snr_db: f64,
    pub mi_bits: f64,
    pub se: f64,
    pub ser: f64,
    pub cap_awgn: f64,
    pub cap_qam: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub run_dir: PathBuf,
}

/// Signals captured from one representative block, for the PSD report.
struct PsdSignals {
    x: ComplexSignal,
    y_o: ComplexSignal,
    y: ComplexSignal,
}

fn point_seed(seed: u64, power_index: usize, block: usize) -> u64 {
    fnv1a64(format!("{seed}/{power_index}/{block}").as_bytes())
}

/// Conventional transceiver at one launch power: runs `eval_blocks`
/// independent blocks and aggregates hard-decision statistics.
fn conventional_point(
    cfg: &ExperimentConfig,
    power_index: usize,
    p_w: f64,
) -> Result<(f64, f64, PsdSignals)> {
    let channel = cfg.effective_channel();
    let constellation = Constellation::square_qam(cfg.m)?;
    let mut sent = Vec::new();
    let mut decided = Vec::new();
    let mut psd_signals = None;

    for b in 0..cfg.eval_blocks {
        let seed = point_seed(cfg.seed, power_index, b);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let block = SymbolBlock {
            indices: (0..cfg.n_b).map(|_| rng.random_range(0..cfg.m)).collect(),
            alphabet_size: cfg.m,
        };
        let x = conventional_tx(&block, &constellation, &channel, p_w, cfg.span_symbols)?;
        let y_o = ssfm_propagate(&x, &channel, seed ^ 0x5a5a_5a5a)?;
        let s_hat = conventional_rx(&y_o, &constellation, &channel, p_w)?;
        if b == 0 {
            let y = adc(&y_o, &channel)?;
            psd_signals = Some(PsdSignals { x, y_o, y });
        }
        sent.extend_from_slice(&block.indices);
        decided.extend_from_slice(&s_hat.indices);
    }

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
        / s.len() as f64;
    Ok((mi.mi_bits, ser, psd_signals.expect("at least one block")))
}

fn format_power(p_dbm: f64) -> String {
    if p_dbm.fract() == 0.0 {
        format!("{}", p_dbm as i64)
    } else {
        format!("{p_dbm:.1}")
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(())
}

fn psd_csv(sig: &ComplexSignal, segment: usize) -> Result<String> {
    let est = welch_psd(sig, segment.min(sig.len()), 0.5)?;
    let mut out = String::from("freq_hz,psd_db\n");
    for (f, d) in est.freq_hz.iter().zip(&est.db) {
        let _ = writeln!(out, "{f},{d}");
    }
    Ok(out)
}

fn emit_psd_report(dir: &Path, tag: &str, signals: &PsdSignals, segment: usize) -> Result<()> {
    write_file(
        &dir.join(format!("psd_tx_{tag}dbm.csv")),
        &psd_csv(&signals.x, segment)?,
    )?;
    write_file(
        &dir.join(format!("psd_chan_{tag}dbm.csv")),
        &psd_csv(&signals.y_o, segment)?,
    )?;
    write_file(
        &dir.join(format!("psd_rx_{tag}dbm.csv")),
        &psd_csv(&signals.y, segment)?,
    )?;
    Ok(())
}

/// Learned-model artifacts: raw constellation, single-pulse waveforms
/// before and after the (noise-free) channel, and the PSD report for one
/// modulated block.
pub fn export_learned_artifacts(
    model: &AeModel,
    tcfg: &TrainConfig,
    dir: &Path,
    tag: &str,
    welch_segment: usize,
) -> Result<()> {
    // Constellation: raw embedding rows.
    let mut emb = String::from("index,re,im\n");
    for (i, p) in model.constellation_points().iter().enumerate() {
        let _ = writeln!(emb, "{i},{},{}", p.re, p.im);
    }
    write_file(&dir.join("emb.csv"), &emb)?;

    // Single-pulse probe: one active symbol in an otherwise empty block,
    // scaled so one symbol period carries the launch power, propagated
    // without noise for a clean trace.
    let osf = tcfg.channel.oversampling();
    let n = tcfg.n_b * osf;
    let mut impulse = vec![Complex64::ZERO; tcfg.n_b];
    impulse[tcfg.n_b / 2] = Complex64::new(1.0, 0.0);
    let up = crate::signal::upsample(&impulse, osf)?;
    let taps = model.shaper_taps();
    let center = (taps.len() - 1) / 2;
    let shaped = crate::signal::fir_filter_centered(&up, &taps, center)?;
    let shaped = ComplexSignal::new(shaped, tcfg.channel.f_sim_hz)?;
    let band = crate::channel::dac(&shaped, &tcfg.channel)?;
    let energy: f64 = band.energy();
    let scale = (tcfg.launch_power_w * osf as f64 / energy).sqrt();
    let tx_pulse = ComplexSignal::new(
        band.samples.iter().map(|&v| v * scale).collect(),
        tcfg.channel.f_sim_hz,
    )?;
    let quiet = ChannelConfig {
        enable_awgn: false,
        ..tcfg.channel.clone()
    };
    let y_o = ssfm_propagate(&tx_pulse, &quiet, 0)?;
    let rx_pulse = adc(&y_o, &quiet)?;

    let pulse_csv = |sig: &ComplexSignal| -> String {
        let peak = sig
            .samples
            .iter()
            .map(|v| v.norm_sqr())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut out = String::from("t_symbols,power_norm,phase_rad,nyquist_power_ref\n");
        for (i, v) in sig.samples.iter().enumerate() {
            let t = (i as f64 - (n / 2) as f64) / osf as f64;
            let nyq = sinc(t);
            let _ = writeln!(out, "{t},{},{},{}", v.norm_sqr() / peak, v.arg(), nyq * nyq);
        }
        out
    };
    write_file(
        &dir.join(format!("pulse_tx_{tag}dbm.csv")),
        &pulse_csv(&tx_pulse),
    )?;
    write_file(
        &dir.join(format!("pulse_rx_{tag}dbm.csv")),
        &pulse_csv(&rx_pulse),
    )?;

    // PSD of a representative modulated block through the real channel.
    let mut rng = ChaCha12Rng::seed_from_u64(tcfg.seed ^ 0x9d5d);
    let labels: Vec<usize> = (0..tcfg.n_b).map(|_| rng.random_range(0..tcfg.m)).collect();
    let x = ComplexSignal::new(
        ae::ae_tx_signal(model, tcfg, &labels)?,
        tcfg.channel.f_sim_hz,
    )?;
    let y_o = ssfm_propagate(&x, &tcfg.channel, tcfg.seed ^ 0x77)?;
    let y = adc(&y_o, &tcfg.channel)?;
    emit_psd_report(dir, tag, &PsdSignals { x, y_o, y }, welch_segment)?;
    Ok(())
}

/// Run the configured sweep and write all artifacts. Conventional points
/// run in a small worker pool; trainable-system points train sequentially
/// (each training is already the unit of work).
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir)?;
    write_file(&run_dir.join("config.resolved"), &cfg.resolved_text())?;
    let mut log = String::new();

    let channel = cfg.effective_channel();
    let powers_w: Vec<f64> = cfg.powers_dbm.iter().map(|&p| dbm_to_watts(p)).collect();

    // Reference curves at each grid SNR.
    let caps: Vec<(f64, f64)> = powers_w
        .iter()
        .map(|&p| {
            let s = snr(p, &channel);
            let qam =
                qam_symbolwise_capacity(s, cfg.m, 200_000, cfg.seed ^ 0xca95).map(|(c, _)| c)?;
            Ok::<(f64, f64), Error>((awgn_capacity(s), qam))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<Option<SweepRow>> = vec![None; powers_w.len()];

    match cfg.system {
        System::Conventional => {
            let workers = std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1);
            let results: Vec<Result<(f64, f64, PsdSignals)>> =
                run_indexed_pool(powers_w.len(), workers, |i| {
                    conventional_point(cfg, i, powers_w[i])
                });
            for (i, res) in results.into_iter().enumerate() {
                let (mi, ser, signals) = res?;
                let p_w = powers_w[i];
                let s = snr(p_w, &channel);
                emit_psd_report(
                    &run_dir,
                    &format_power(cfg.powers_dbm[i]),
                    &signals,
                    cfg.welch_segment,
                )?;
                rows[i] = Some(SweepRow {
                    p_dbm: cfg.powers_dbm[i],
                    snr_db: db(s),
                    mi_bits: mi,
                    se: spectral_efficiency(mi, 1.0 / channel.bw_hz, channel.bw_hz),
                    ser,
                    cap_awgn: caps[i].0,
                    cap_qam: caps[i].1,
                    diverged: false,
                });
                let _ = writeln!(
                    log,
                    "power {} dBm: mi {:.4} bits, ser {:.3e}",
                    cfg.powers_dbm[i], mi, ser
                );
            }
        }
        System::Ae => {
            for (i, &p_w) in powers_w.iter().enumerate() {
                let tag = format_power(cfg.powers_dbm[i]);
                let tcfg = cfg.train_config(p_w);
                let outcome = ae::train(&tcfg)?;
                let mut history = String::from("step,loss_nats,lr\n");
                for (step, loss) in outcome.loss_history.iter().enumerate() {
                    let _ = writeln!(history, "{step},{loss},{}", ae::lr_at(&tcfg, step));
                }
                write_file(&run_dir.join(format!("history_{tag}dbm.csv")), &history)?;
                checkpoint::save(
                    &run_dir.join(format!("model_{tag}dbm.ckpt")),
                    &tcfg,
                    &outcome.model,
                    None,
                )?;

                let row = if let Some(eval) = outcome.eval {
                    export_learned_artifacts(
                        &outcome.model,
                        &tcfg,
                        &run_dir,
                        &tag,
                        cfg.welch_segment,
                    )?;
                    let _ = writeln!(
                        log,
                        "power {} dBm: trained {} steps, mi {:.4} bits, ser {:.3e}",
                        cfg.powers_dbm[i],
                        outcome.loss_history.len(),
                        eval.mi_bits,
                        eval.ser
                    );
                    SweepRow {
                        p_dbm: cfg.powers_dbm[i],
                        snr_db: eval.snr_db,
                        mi_bits: eval.mi_bits,
                        se: eval.se,
                        ser: eval.ser,
                        cap_awgn: caps[i].0,
                        cap_qam: caps[i].1,
                        diverged: false,
                    }
                } else {
                    let _ = writeln!(
                        log,
                        "power {} dBm: diverged after {} steps",
                        cfg.powers_dbm[i],
                        outcome.loss_history.len()
                    );
                    SweepRow {
                        p_dbm: cfg.powers_dbm[i],
                        snr_db: db(snr(p_w, &channel)),
                        mi_bits: f64::NAN,
                        se: f64::NAN,
                        ser: f64::NAN,
                        cap_awgn: caps[i].0,
                        cap_qam: caps[i].1,
                        diverged: true,
                    }
                };
                rows[i] = Some(row);
            }
        }
    }

    let rows: Vec<SweepRow> = rows
        .into_iter()
        .map(|r| r.expect("all points filled"))
        .collect();
    let mut se_csv = String::from(
        "p_dbm,snr_db,mi_bits,se_bits_per_s_hz,ser,seed,cap_awgn_bits,cap_qam_bits,status\n",
    );
    for r in &rows {
        let _ = writeln!(
            se_csv,
            "{},{},{},{},{},{},{},{},{}",
            r.p_dbm,
            r.snr_db,
            r.mi_bits,
            r.se,
            r.ser,
            cfg.seed,
            r.cap_awgn,
            r.cap_qam,
            if r.diverged { "diverged" } else { "ok" }
        );
    }
    write_file(&run_dir.join("se.csv"), &se_csv)?;
    write_file(&run_dir.join("log.txt"), &log)?;

    Ok(SweepOutput { rows, run_dir })
}

/// Train at the first grid power only and write checkpoint plus artifacts.
pub fn run_train(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let mut single = cfg.clone();
    single.powers_dbm.truncate(1);
    single.system = System::Ae;
    run_sweep(&single)
}

/// Regenerate the learned-model report from a checkpoint. The resolved
/// config must match the one the checkpoint was trained with.
pub fn run_report(cfg: &ExperimentConfig, ckpt: &Path) -> Result<PathBuf> {
    let p_w = dbm_to_watts(cfg.powers_dbm[0]);
    let tcfg = cfg.train_config(p_w);
    let (model, _) = checkpoint::load(ckpt, &tcfg)?;
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir)?;
    write_file(&run_dir.join("config.resolved"), &cfg.resolved_text())?;
    export_learned_artifacts(
        &model,
        &tcfg,
        &run_dir,
        &format_power(cfg.powers_dbm[0]),
        cfg.welch_segment,
    )?;
    Ok(run_dir)
}

/// Dispatch `jobs` indexed tasks onto up to `workers` threads, returning
/// results in index order regardless of scheduling.
pub(crate) fn run_indexed_pool<T, F>(jobs: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<T>>> = (0..jobs).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(jobs) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let out = f(i);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("job completed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip_and_unknown_keys() {
        let text = "# comment\npreset = desk\nchannel = ad\nseed = 9\npowers_dbm = -10, -6\n";
        let cfg = resolve_config(Some(text), &CliOverrides::default()).unwrap();
        assert_eq!(cfg.preset, Preset::Desk);
        assert_eq!(cfg.variant, ChannelVariant::Ad);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.powers_dbm, vec![-10.0, -6.0]);

        let bad = "presett = desk\n";
        assert!(matches!(
            resolve_config(Some(bad), &CliOverrides::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cli_overrides_beat_file() {
        let text = "seed = 9\nchannel = a\n";
        let cli = CliOverrides {
            seed: Some(12),
            channel: Some(ChannelVariant::Adn),
            powers_dbm: vec![-4.0],
            ..Default::default()
        };
        let cfg = resolve_config(Some(text), &cli).unwrap();
        assert_eq!(cfg.seed, 12);
        assert_eq!(cfg.variant, ChannelVariant::Adn);
        assert_eq!(cfg.powers_dbm, vec![-4.0]);
    }

    #[test]
    fn desk_preset_rejects_high_power() {
        let cli = CliOverrides {
            powers_dbm: vec![-10.0, 4.0],
            ..Default::default()
        };
        assert!(matches!(resolve_config(None, &cli), Err(Error::Config(_))));
    }

    #[test]
    fn empty_power_grid_rejected() {
        let text = "powers_dbm = \n";
        assert!(resolve_config(Some(text), &CliOverrides::default()).is_err());
    }

    #[test]
    fn run_id_is_stable_and_seed_scoped() {
        let a = resolve_config(None, &CliOverrides::default()).unwrap();
        let b = resolve_config(None, &CliOverrides::default()).unwrap();
        assert_eq!(a.run_id(), b.run_id());
        let c = resolve_config(
            None,
            &CliOverrides {
                seed: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.run_id(), c.run_id());
    }

    #[test]
    fn indexed_pool_preserves_order() {
        let out = run_indexed_pool(17, 4, |i| i * i);
        assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn conventional_sweep_writes_artifacts() {
        let dir = std::env::temp_dir().join(format!("fiberae_sweep_{}", std::process::id()));
        let cli = CliOverrides {
            out: Some(dir.clone()),
            powers_dbm: vec![-10.0, -4.0],
            channel: Some(ChannelVariant::Ad),
            ..Default::default()
        };
        let mut cfg = resolve_config(None, &cli).unwrap();
        cfg.eval_blocks = 3;
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        // SNR rises with power; SE equals MI at unit time-bandwidth
        // product.
        assert!(out.rows[1].snr_db > out.rows[0].snr_db);
        for r in &out.rows {
            assert!((r.se - r.mi_bits).abs() < 1e-12);
        }
        assert!(out.run_dir.join("se.csv").exists());
        assert!(out.run_dir.join("config.resolved").exists());
        assert!(out.run_dir.join("psd_tx_-10dbm.csv").exists());
        assert!(out.run_dir.join("psd_chan_-4dbm.csv").exists());
        std::fs::remove_dir_all(&dir).ok();
    }
}
