//! End-to-end checks of the command-line interface: exit codes, artifact
//! layout and config handling.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fiberae"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fiberae_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_channel_is_a_usage_error() {
    let out = bin().args(["sweep", "--channel", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin().args(["sweep", "--does-not-exist"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_a_hard_error() {
    let dir = temp_dir("badkey");
    let cfg = dir.join("exp.cfg");
    std::fs::write(&cfg, "powres_dbm = -10\n").unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("powres_dbm"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn desk_sweep_writes_expected_layout() {
    let dir = temp_dir("sweep");
    let cfg = dir.join("exp.cfg");
    std::fs::write(&cfg, "eval_blocks = 2\nwelch_segment = 256\n").unwrap();
    let out = bin()
        .args([
            "sweep",
            "--channel",
            "ad",
            "--system",
            "conv",
            "--seed",
            "3",
        ])
        .args(["--power-dbm", "-12", "--power-dbm", "-6"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let runs: Vec<_> = std::fs::read_dir(dir.join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run_dir = runs[0].as_ref().unwrap().path();
    for f in [
        "se.csv",
        "config.resolved",
        "log.txt",
        "psd_tx_-12dbm.csv",
        "psd_rx_-6dbm.csv",
    ] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }

    let se = std::fs::read_to_string(run_dir.join("se.csv")).unwrap();
    let mut lines = se.lines();
    assert_eq!(
        lines.next().unwrap(),
        "p_dbm,snr_db,mi_bits,se_bits_per_s_hz,ser,seed,cap_awgn_bits,cap_qam_bits,status"
    );
    assert_eq!(lines.count(), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_and_report_round_trip() {
    // A deliberately tiny training run: the point is the artifact flow,
    // not the learned quality.
    let dir = temp_dir("train");
    let cfg = dir.join("exp.cfg");
    std::fs::write(
        &cfg,
        "system = ae\nchannel = a\nn_b = 64\nspan_symbols = 16\neval_blocks = 2\niterations = 40\nwelch_segment = 128\n",
    )
    .unwrap();
    let out = bin()
        .args(["train", "--seed", "5", "--power-dbm", "-10"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let runs: Vec<_> = std::fs::read_dir(dir.join("runs")).unwrap().collect();
    let run_dir = runs[0].as_ref().unwrap().path();
    for f in [
        "model_-10dbm.ckpt",
        "history_-10dbm.csv",
        "emb.csv",
        "pulse_tx_-10dbm.csv",
        "pulse_rx_-10dbm.csv",
        "se.csv",
    ] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }

    // emb.csv round-trips through text exactly (shortest-round-trip float
    // formatting).
    let emb = std::fs::read_to_string(run_dir.join("emb.csv")).unwrap();
    for line in emb.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        let re: f64 = fields[1].parse().unwrap();
        assert_eq!(format!("{re}"), fields[1]);
    }

    // The report subcommand regenerates artifacts from the checkpoint.
    let report_out = bin()
        .args(["report", "--seed", "5", "--power-dbm", "-10"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("report"))
        .arg("--checkpoint")
        .arg(run_dir.join("model_-10dbm.ckpt"))
        .output()
        .unwrap();
    assert_eq!(
        report_out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&report_out.stderr)
    );
    let reports: Vec<_> = std::fs::read_dir(dir.join("report")).unwrap().collect();
    let report_dir = reports[0].as_ref().unwrap().path();
    assert!(report_dir.join("emb.csv").exists());

    // Mismatched config is refused.
    let bad = bin()
        .args(["report", "--seed", "6", "--power-dbm", "-10"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("report2"))
        .arg("--checkpoint")
        .arg(run_dir.join("model_-10dbm.ckpt"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(3));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn gradcheck_exits_clean() {
    let out = bin().arg("gradcheck").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "output: {stdout}");
    assert!(stdout.contains("PASS"), "output: {stdout}");
}

#[test]
fn selftest_fast_passes() {
    let dir = temp_dir("selftest");
    let out = bin()
        .args(["selftest", "--fast"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "output: {stdout}");
    assert!(
        stdout.lines().filter(|l| l.contains("[PASS]")).count() >= 7,
        "output: {stdout}"
    );
    std::fs::remove_dir_all(&dir).ok();
}
