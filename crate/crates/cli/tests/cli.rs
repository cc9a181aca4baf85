use std::path::Path;
use std::process::{Command, Output};

use vnlnet::metrics::psnr;
use vnlnet::network::{save_weights, Network, NetworkConfig};
use vnlnet::video::{read_sequence_dir, write_sequence, Video};

fn vnlnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnlnet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = vnlnet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Mid-gray texture that stays clear of the 8-bit limits under σ=20 noise.
fn gray_clip(frames: usize, rows: usize, cols: usize, moving: bool) -> Video {
    Video::from_fn(frames, 1, rows, cols, |t, _, y, x| {
        let s = if moving { t as f32 } else { 0.0 };
        (128.0 + 30.0 * ((x as f32 + s) * 0.3).sin() * (y as f32 * 0.2).cos()).round()
    })
    .unwrap()
}

/// Static high-contrast pattern: every misaligned patch is far away, so a
/// one-per-frame search finds the aligned pixel in every frame.
fn static_pattern(frames: usize, rows: usize, cols: usize) -> Video {
    Video::from_fn(frames, 1, rows, cols, |_, _, y, x| {
        let h = (x as u64 * 0x9e37_79b9 + y as u64 * 0x85eb_ca6b).wrapping_mul(0xc2b2_ae35) >> 7;
        (60 + h % 136) as f32
    })
    .unwrap()
}

fn assert_single_line_failure(out: &Output) {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn add_noise_is_reproducible_and_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    write_sequence(&gray_clip(3, 20, 24, true), &clean).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["add-noise", p(&clean), p(out), "--noise", "awgn", "--sigma", "20", "--seed", "1"]);
    }
    assert_eq!(read_sequence_dir(&a).unwrap(), read_sequence_dir(&b).unwrap());
    let sidecar = std::fs::read_to_string(a.join("noise.txt")).unwrap();
    assert!(sidecar.contains("noise=awgn") && sidecar.contains("sigma=20") && sidecar.contains("seed=1"), "{sidecar}");
}

#[test]
fn salt_and_pepper_alters_a_quarter_of_the_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    let v = Video::filled(4, 1, 100, 100, 77.0).unwrap();
    write_sequence(&v, &clean).unwrap();
    let noisy = dir.path().join("noisy");
    ok(&["add-noise", p(&clean), p(&noisy), "--noise", "sp", "--fraction", "0.25", "--seed", "3"]);
    let n = read_sequence_dir(&noisy).unwrap();
    let changed = n.data().iter().filter(|&&x| x != 77.0).count() as f64 / n.data().len() as f64;
    // a replacement can land on the original value, about 1/256 of the time
    assert!((changed - 0.25 * 255.0 / 256.0).abs() < 0.01, "{changed}");
}

#[test]
fn invalid_flags_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = vnlnet(&["add-noise", p(dir.path()), p(&dir.path().join("o")), "--sigma", "-1"]);
    assert_single_line_failure(&out);
    assert_single_line_failure(&vnlnet(&["denoise", "a", "b"]));
    assert_single_line_failure(&vnlnet(&["eval", p(&dir.path().join("missing")), p(dir.path())]));
    assert_single_line_failure(&vnlnet(&["search", p(dir.path()), "t.bin", "--patch-size", "4"]));
}

#[test]
fn eval_reports_inf_for_identical_and_sigma_twenty_for_noise() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    write_sequence(&gray_clip(3, 64, 64, true), &clean).unwrap();
    let out = ok(&["eval", p(&clean), p(&clean)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("inf"));

    let noisy = dir.path().join("noisy");
    ok(&["add-noise", p(&clean), p(&noisy), "--sigma", "20", "--seed", "5"]);
    let csv = dir.path().join("m.csv");
    ok(&["eval", p(&clean), p(&noisy), "--csv", p(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let mean = rows.iter().sum::<f64>() / rows.len() as f64;
    assert!((mean - 22.11).abs() < 0.3, "{mean}");
}

#[test]
fn zero_weights_reproduce_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let noisy = dir.path().join("noisy");
    write_sequence(&gray_clip(3, 16, 18, true), &noisy).unwrap();
    let weights = dir.path().join("zero.vnlw");
    save_weights(&Network::<f32>::zeros(NetworkConfig::tiny(3, 1, 1, 1, 4)).unwrap(), &weights).unwrap();
    let out = dir.path().join("out");
    let flags = ["--patch-size", "3", "--spatial-window", "5", "--temporal-window", "3"];
    let mut args = vec!["denoise", p(&noisy), p(&out), "--weights", p(&weights)];
    args.extend(flags);
    ok(&args);
    assert_eq!(read_sequence_dir(&out).unwrap(), read_sequence_dir(&noisy).unwrap());

    // a network built for 5 matches cannot consume 3
    save_weights(&Network::<f32>::zeros(NetworkConfig::tiny(5, 1, 1, 1, 4)).unwrap(), &weights).unwrap();
    let out = vnlnet(&args);
    assert_single_line_failure(&out);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('5') && err.contains('3'), "{err}");
}

#[test]
fn nl_mean_baseline_averages_static_noise() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    let v = static_pattern(15, 40, 40);
    write_sequence(&v, &clean).unwrap();
    let noisy = dir.path().join("noisy");
    ok(&["add-noise", p(&clean), p(&noisy), "--sigma", "20", "--seed", "9"]);
    let out = dir.path().join("mean");
    let flags = ["--patch-size", "9", "--spatial-window", "9", "--temporal-window", "15"];
    let mut args = vec!["denoise", p(&noisy), p(&out), "--baseline", "nl-mean"];
    args.extend(flags);
    ok(&args);
    let (n, m) = (read_sequence_dir(&noisy).unwrap(), read_sequence_dir(&out).unwrap());
    let t = 7;
    let gain = psnr(v.frame(t), m.frame(t)).unwrap() - psnr(v.frame(t), n.frame(t)).unwrap();
    // averaging 15 independent realizations: 10·log10(15)
    assert!((gain - 11.76).abs() < 1.5, "gain {gain}");

    // worker count does not change the result
    let out1 = dir.path().join("mean1");
    let mut args1 = vec!["--threads", "1", "denoise", p(&noisy), p(&out1), "--baseline", "nl-mean"];
    args1.extend(flags);
    ok(&args1);
    assert_eq!(read_sequence_dir(&out1).unwrap(), m);
}

#[test]
fn search_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("clip");
    write_sequence(&gray_clip(3, 12, 12, true), &clip).unwrap();
    let (fast, naive) = (dir.path().join("fast.bin"), dir.path().join("naive.bin"));
    let flags = ["--patch-size", "3", "--spatial-window", "5", "--temporal-window", "3", "--mode", "free", "--neighbors", "4"];
    for (file, extra) in [(&fast, None), (&naive, Some("--naive"))] {
        let mut args = vec!["search", p(&clip), p(file)];
        args.extend(flags);
        args.extend(extra);
        ok(&args);
    }
    let (a, b) = (vnlnet::search::read_match_table(&fast).unwrap(), vnlnet::search::read_match_table(&naive).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.num_neighbors(), 4);
}

#[test]
fn bench_single_point_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = ok(&[
        "bench", "--size", "24", "--frames", "3", "--patch-sizes", "5", "--spatial-window", "7",
        "--temporal-window", "3", "--only", "fast", "--csv", p(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.starts_with("implementation,patch_size"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope fast n/a"));
}

#[test]
fn train_with_toy_config_writes_weights_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("toy.toml");
    std::fs::write(
        &config,
        "crop_size = 16\nbatch_size = 4\nbatches_per_epoch = 5\nepochs = 2\nlr_schedule = \"0:1e-3,1:1e-4\"\n\
         patch_size = 5\nspatial_window = 5\ntemporal_window = 3\n\
         stage1_depth = 2\nwidth_stage1 = 4\nwidth_trunk = 4\ntrunk_depth = 2\n\
         synthetic_train = 2\nsynthetic_val = 1\nsynthetic_frames = 4\nsynthetic_rows = 32\nsynthetic_cols = 32\n\
         weights = \"out/w.vnlw\"\nlog = \"out/log.csv\"\n",
    )
    .unwrap();
    ok(&["train", p(&config)]);
    let net = vnlnet::network::load_weights(dir.path().join("out/w.vnlw")).unwrap();
    assert_eq!(net.config().n_channels_in, 3);
    let log = std::fs::read_to_string(dir.path().join("out/log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,lr,train_loss,val_psnr");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("1,1e-4,"), "{log}");
}
