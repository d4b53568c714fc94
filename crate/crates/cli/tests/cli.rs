use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_cutin");

fn cutin(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cutin")
}

fn cutin_stdin(dir: &Path, args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn cutin");
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstderr: {}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Sorted (name, bytes) of every file in `dir`.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

const QUICK: &str = "[train]\nepochs = 6\nhidden_units = 16\n[grid]\nhidden_units = [8, 16]\nbatch_size = [16, 32]\noptimizer = [\"adam\"]\nactivation = [\"tanh\"]\ndropout = [0.0]\n";

/// Temp dir with `quick.toml`, a dataset `d` (n per class-side) and a
/// model trained on it in `m`.
fn fixture(n: usize) -> (TempDir, PathBuf) {
    let t = TempDir::new().unwrap();
    let p = t.path().to_path_buf();
    fs::write(p.join("quick.toml"), QUICK).unwrap();
    ok(&cutin(
        &p,
        &[
            "simulate",
            "--n",
            &n.to_string(),
            "--seed",
            "7",
            "--out",
            "d",
            "--detections",
        ],
    ));
    ok(&cutin(
        &p,
        &[
            "--config",
            "quick.toml",
            "train",
            "--data",
            "d",
            "--strategy",
            "baseline",
            "--out",
            "m",
        ],
    ));
    (t, p)
}

/// Observation table of clip 0 repeated to `frames` frames, header included.
fn replay(dir: &Path, frames: usize) -> String {
    let text = fs::read_to_string(dir.join("d/clip_00000.csv")).unwrap();
    let mut lines = text.lines();
    let mut s = format!("{}\n", lines.next().unwrap());
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    for k in 0..frames {
        let mut r = rows[k % rows.len()].clone();
        r[0] = k.to_string();
        r[1] = ((k as f64) * 1000.0 / 30.0).round().to_string();
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

#[test]
fn simulate_writes_four_clips_per_n_and_is_byte_identical() {
    let t = TempDir::new().unwrap();
    let p = t.path();
    let out = ok(&cutin(
        p,
        &["simulate", "--n", "5", "--seed", "7", "--out", "a"],
    ));
    assert_eq!(out.trim(), "wrote 20 clips to a");
    ok(&cutin(
        p,
        &["simulate", "--n", "5", "--seed", "7", "--out", "b"],
    ));
    let (a, b) = (snapshot(&p.join("a")), snapshot(&p.join("b")));
    assert_eq!(a.len(), 2 * 20 + 1);
    assert_eq!(a, b);
    ok(&cutin(
        p,
        &["simulate", "--n", "5", "--seed", "8", "--out", "c"],
    ));
    assert_ne!(a, snapshot(&p.join("c")));
    let index = fs::read_to_string(p.join("a/index.csv")).unwrap();
    assert_eq!(index.lines().count(), 21);
    assert_eq!(
        index.lines().next().unwrap(),
        "clip_id,label,class_set,side,manifest,observations"
    );
}

#[test]
fn exit_statuses() {
    let t = TempDir::new().unwrap();
    let p = t.path();
    fs::write(p.join("bad.toml"), "[synth]\nnoise_sigma = -1\n").unwrap();
    let o = cutin(p, &["--config", "bad.toml", "simulate", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("synth.noise_sigma"));

    fs::write(p.join("typo.toml"), "[synth]\nnoise_sgima = 1\n").unwrap();
    let o = cutin(p, &["--config", "typo.toml", "simulate", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise_sgima"));

    assert_eq!(code(&cutin(p, &["simulate"])), 2, "missing --out");
    assert_eq!(code(&cutin(p, &["frobnicate"])), 2);
    assert_eq!(
        code(&cutin(p, &["train", "--data", "nowhere", "--out", "m"])),
        2
    );
    assert_eq!(
        code(&cutin(
            p,
            &["simulate", "--n", "1", "--fps", "-3", "--out", "x"]
        )),
        2
    );

    // An output directory that cannot be created is a runtime failure.
    fs::write(p.join("file"), "").unwrap();
    assert_eq!(
        code(&cutin(p, &["simulate", "--n", "1", "--out", "file/sub"])),
        1
    );
}

#[test]
fn train_eval_classify_and_determinism() {
    let (_t, p) = fixture(12);
    let model = fs::read(p.join("m/model.json")).unwrap();
    let history = fs::read_to_string(p.join("m/history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "model,epoch,train_loss,val_accuracy"
    );
    assert!(history.lines().count() > 1);
    assert!(fs::read_to_string(p.join("m/split.csv"))
        .unwrap()
        .starts_with("clip_id,part\n"));

    ok(&cutin(
        &p,
        &[
            "--config",
            "quick.toml",
            "train",
            "--data",
            "d",
            "--strategy",
            "baseline",
            "--out",
            "m2",
        ],
    ));
    assert_eq!(snapshot(&p.join("m")), snapshot(&p.join("m2")));
    assert_eq!(model, fs::read(p.join("m2/model.json")).unwrap());

    let e1 = ok(&cutin(
        &p,
        &[
            "eval",
            "--model",
            "m/model.json",
            "--data",
            "d",
            "--part",
            "all",
        ],
    ));
    let e2 = ok(&cutin(
        &p,
        &[
            "eval",
            "--model",
            "m/model.json",
            "--data",
            "d",
            "--part",
            "all",
        ],
    ));
    assert_eq!(e1, e2);
    assert!(e1.starts_with("accuracy "));
    assert!(e1.contains("class,precision,recall,support\nCutIn,"));

    let line = ok(&cutin(
        &p,
        &[
            "classify",
            "--model",
            "m/model.json",
            "--clip",
            "d/clip_00000.toml",
        ],
    ));
    let line = line.trim();
    let (class, probs) = line.split_once(" p=").unwrap();
    assert!(class == "CutIn" || class == "LanePass", "{line}");
    let ps: Vec<f64> = probs.split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(ps.len(), 2);
    assert!(probs
        .split(',')
        .all(|v| v.split_once('.').unwrap().1.len() == 4));
    assert!((ps.iter().sum::<f64>() - 1.0).abs() <= 1e-4 + 1e-12);

    // Observation tables use the configured scene.
    let csv = ok(&cutin(
        &p,
        &[
            "classify",
            "--model",
            "m/model.json",
            "--clip",
            "d/clip_00000.csv",
        ],
    ));
    assert_eq!(csv.trim(), line);
}

#[test]
fn classify_short_clip_is_a_usage_error() {
    let (_t, p) = fixture(3);
    let text = fs::read_to_string(p.join("d/clip_00000.csv")).unwrap();
    let short: String = text.lines().take(21).map(|l| format!("{l}\n")).collect();
    fs::write(p.join("short.csv"), short).unwrap();
    let o = cutin(
        &p,
        &["classify", "--model", "m/model.json", "--clip", "short.csv"],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sequence too short"));
}

#[test]
fn stream_emits_one_decision_per_two_seconds() {
    let (_t, p) = fixture(3);
    let args = ["stream", "--model", "m/model.json", "--fps", "30"];
    let out = ok(&cutin_stdin(&p, &args, replay(&p, 180).as_bytes()));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3, "{out}");
    for (i, l) in lines.iter().enumerate() {
        let want = format!("window {}-{} ", 60 * i, 60 * i + 59);
        assert!(l.starts_with(&want), "{l}");
        let ms: f64 = l.rsplit_once(" ms=").unwrap().1.parse().unwrap();
        assert!(ms >= 0.0);
    }

    assert_eq!(ok(&cutin_stdin(&p, &args, replay(&p, 59).as_bytes())), "");

    // Without timing the output is reproducible byte for byte.
    let quiet = ["stream", "--model", "m/model.json", "--no-timing"];
    let a = ok(&cutin_stdin(&p, &quiet, replay(&p, 300).as_bytes()));
    let b = ok(&cutin_stdin(&p, &quiet, replay(&p, 300).as_bytes()));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);
    assert!(!a.contains("ms="));

    let o = cutin_stdin(
        &p,
        &args,
        b"frame_idx,timestamp_ms,target_id,cx,cy,w,h,confidence\n0,0,1,abc,1,1,1,1\n",
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn stream_follows_one_target() {
    let (_t, p) = fixture(3);
    let base = replay(&p, 120);
    let mut mixed = String::new();
    for (i, l) in base.lines().enumerate() {
        mixed.push_str(l);
        mixed.push('\n');
        if i > 0 {
            // A second target far to the right, interleaved.
            let mut f: Vec<&str> = l.split(',').collect();
            f[2] = "9";
            f[3] = "1100.00";
            mixed.push_str(&f.join(","));
            mixed.push('\n');
        }
    }
    let q = ["stream", "--model", "m/model.json", "--no-timing"];
    let plain = ok(&cutin_stdin(&p, &q, base.as_bytes()));
    assert_eq!(ok(&cutin_stdin(&p, &q, mixed.as_bytes())), plain);
    let other = ok(&cutin_stdin(
        &p,
        &[
            "stream",
            "--model",
            "m/model.json",
            "--no-timing",
            "--target",
            "9",
        ],
        mixed.as_bytes(),
    ));
    assert_eq!(other.lines().count(), 2);
}

#[test]
fn track_files() {
    let t = TempDir::new().unwrap();
    let p = t.path();
    let header = "frame_idx,timestamp_ms,target_id,cx,cy,w,h,confidence\n";

    fs::write(p.join("empty.csv"), header).unwrap();
    let o = cutin(p, &["track", "--detections", "empty.csv", "--out", "e"]);
    assert_eq!(ok(&o).trim(), "tracks 0");
    assert!(String::from_utf8_lossy(&o.stderr).contains("no detections"));

    // One noiseless object moving at constant velocity.
    let truth = |k: u64| {
        (
            200.0 + 3.5 * k as f64,
            300.0 - 0.75 * k as f64,
            80.0 + 0.25 * k as f64,
            60.0,
        )
    };
    let mut s = String::from(header);
    for k in 0..40u64 {
        let (cx, cy, w, h) = truth(k);
        s.push_str(&format!(
            "{k},{},1,{cx:.2},{cy:.2},{w:.2},{h:.2},0.9\n",
            k * 33
        ));
    }
    fs::write(p.join("one.csv"), &s).unwrap();
    assert_eq!(
        ok(&cutin(
            p,
            &["track", "--detections", "one.csv", "--out", "o"]
        ))
        .trim(),
        "tracks 1"
    );
    let text = fs::read_to_string(p.join("o/track_1.csv")).unwrap();
    for l in text.lines().skip(1) {
        let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        let (cx, cy, w, h) = truth(f[0] as u64);
        for (got, want) in [(f[3], cx), (f[4], cy), (f[5], w), (f[6], h)] {
            assert!((got - want).abs() < 1e-6, "{l}");
        }
    }
}

#[test]
fn track_separates_simulated_objects() {
    let t = TempDir::new().unwrap();
    let p = t.path();
    ok(&cutin(
        p,
        &[
            "simulate",
            "--n",
            "1",
            "--out",
            "d",
            "--detections",
            "--distractors",
            "1",
        ],
    ));
    let out = ok(&cutin(
        p,
        &[
            "track",
            "--detections",
            "d/clip_00000.detections.csv",
            "--out",
            "t",
        ],
    ));
    assert_eq!(out.trim(), "tracks 2");
    // Each output track follows the object whose rows are nearest.
    let rows = fs::read_to_string(p.join("d/clip_00000.detections.csv")).unwrap();
    let truth: Vec<Vec<f64>> = rows
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    for id in [1, 2] {
        let text = fs::read_to_string(p.join(format!("t/track_{id}.csv"))).unwrap();
        let mut owners = std::collections::BTreeSet::new();
        for l in text.lines().skip(1) {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            let nearest = truth
                .iter()
                .filter(|r| r[0] == f[0])
                .min_by(|a, b| ((a[3] - f[3]).abs()).total_cmp(&(b[3] - f[3]).abs()))
                .unwrap();
            owners.insert(nearest[2] as u64);
        }
        assert_eq!(owners.len(), 1, "track {id} switched objects");
    }
}

#[test]
fn gridsearch_featurize_sweep_timing() {
    let (_t, p) = fixture(10);
    let g = [
        "--config",
        "quick.toml",
        "gridsearch",
        "--data",
        "d",
        "--strategy",
        "baseline",
    ];
    let a = ok(&cutin(
        &p,
        &[&g[..], &["--out", "g1", "--workers", "1"]].concat(),
    ));
    ok(&cutin(
        &p,
        &[&g[..], &["--out", "g2", "--workers", "3"]].concat(),
    ));
    assert!(a.starts_with("candidates 4 best "), "{a}");
    assert_eq!(snapshot(&p.join("g1")), snapshot(&p.join("g2")));
    let board = fs::read_to_string(p.join("g1/leaderboard.csv")).unwrap();
    assert_eq!(board.lines().count(), 5);

    let f = ok(&cutin(&p, &["featurize", "--data", "d", "--length", "15"]));
    assert_eq!(f.lines().count(), 1 + 40 * 15);
    assert!(f.starts_with("clip_id,label,step,cx,cy,w,h\nclip_00000,CutIn,0,"));
    assert_eq!(
        code(&cutin(&p, &["featurize", "--data", "d", "--length", "20"])),
        2
    );

    let s = ok(&cutin(
        &p,
        &[
            "--config",
            "quick.toml",
            "sweep",
            "--data",
            "d",
            "--lengths",
            "15,30",
            "--no-grid",
            "--out",
            "s",
        ],
    ));
    assert_eq!(s.lines().count(), 3);
    assert!(s.lines().nth(1).unwrap().starts_with("15,0,0,16,"), "{s}");

    let tm = ok(&cutin(
        &p,
        &[
            "timing",
            "--model",
            "m/model.json",
            "--data",
            "d",
            "--repetitions",
            "2",
        ],
    ));
    assert!(tm.starts_with("stage,ms_per_sequence\ntracking,"));
}

/// Peak resident set of a finished child, in kilobytes.
fn wait_max_rss_kb(child: &mut std::process::Child) -> i64 {
    let mut status = 0;
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let pid = child.id() as libc::pid_t;
    let r = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
    assert_eq!(r, pid);
    assert!(
        libc::WIFEXITED(status) && libc::WEXITSTATUS(status) == 0,
        "status {status}"
    );
    usage.ru_maxrss
}

fn stream_rss(dir: &Path, frames: usize) -> (usize, i64) {
    let mut child = Command::new(BIN)
        .current_dir(dir)
        .args(["stream", "--model", "m/model.json", "--no-timing"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let writer = std::thread::spawn(move || {
        let mut w = std::io::BufWriter::new(&mut stdin);
        writeln!(w, "frame_idx,timestamp_ms,target_id,cx,cy,w,h,confidence").unwrap();
        for k in 0..frames {
            let cx = 400.0 + 100.0 * ((k % 60) as f64 / 60.0);
            writeln!(
                w,
                "{k},{},1,{cx:.2},420.00,90.00,75.00,0.9",
                (k as f64 * 1000.0 / 30.0).round()
            )
            .unwrap();
        }
    });
    let mut stdout = child.stdout.take().unwrap();
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut stdout, &mut s).unwrap();
        s.lines().count()
    });
    writer.join().unwrap();
    let lines = reader.join().unwrap();
    (lines, wait_max_rss_kb(&mut child))
}

#[test]
fn stream_memory_is_bounded_over_a_million_frames() {
    let (_t, p) = fixture(3);
    let (small_lines, small) = stream_rss(&p, 10_000);
    let (big_lines, big) = stream_rss(&p, 1_000_000);
    assert_eq!(small_lines, 10_000 / 60);
    assert_eq!(big_lines, 1_000_000 / 60);
    // 100x the input must not grow the peak beyond allocator noise.
    assert!(big - small < 4 * 1024, "peak RSS {small} kB -> {big} kB");
}
