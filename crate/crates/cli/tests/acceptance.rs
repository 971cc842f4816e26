//! One PASS/FAIL line per acceptance criterion. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 2 3`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gazedrive::diffcore::gradcheck::{run_suite, MAX_REL_ERR};
use gazedrive::diffcore::{action_mse, attention_sparsity, cosine_loss, SparsityVariant, Tensor};
use gazedrive::evalreport::{compare_models, constant_baseline, evaluate_mse};
use gazedrive::gazeprep::{
    align_gaze_to_frame, build_dataset, central_bias_augment, gaussian_saliency_map, AlignConfig, DatasetConfig,
    Provenance, DEFAULT_SIGMA, REFERENCE_WIDTH,
};
use gazedrive::nets::{
    load_checkpoint, roadsal_forward, save_checkpoint, AgentSpec, ArchSpec, Net, Net1Spec, RoadSalSpec,
};
use gazedrive::simworld::{run_session, GazeSample, SessionConfig, SessionLog};
use gazedrive::trainer::{
    train_agents, train_attention_unsupervised, train_driver, train_roadsal, DriveData, PipelineKind, TrainConfig,
};
use gazedrive::Error;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let outcomes = ok(run_suite(10, 1))?;
    let elapsed = t.elapsed();
    let worst = outcomes.iter().map(|o| o.max_rel_err).fold(0.0, f64::max);
    for o in &outcomes {
        ensure!(o.instances >= 10, "{} ran {} instances", o.name, o.instances);
        ensure!(o.passed(), "{} max rel err {:.3e} >= {MAX_REL_ERR:e}", o.name, o.max_rel_err);
    }
    ensure!(elapsed < Duration::from_secs(60), "took {}", secs(elapsed));
    Ok(format!("{} operators x 10 instances, worst rel err {worst:.2e}, {}", outcomes.len(), secs(elapsed)))
}

fn loss_oracles() -> Outcome {
    let v = [0.3f64, -1.2, 2.5, 0.01, -0.7];
    let c = ok(cosine_loss(&v, &v))?.value;
    ensure!((c + 1.0).abs() <= 1e-12, "cosine(v, v) = {c}");
    let c = ok(cosine_loss(&[1.0f64, 0.0], &[1.0, 1.0]))?.value;
    ensure!((c + 1.0 / 2f64.sqrt()).abs() <= 1e-9, "cosine([1,0],[1,1]) = {c}");
    let half = vec![0.5f64; 64];
    let sq = ok(attention_sparsity(&half, SparsityVariant::Squared))?.value;
    let lin = ok(attention_sparsity(&half, SparsityVariant::Linear))?.value;
    ensure!((sq - 0.25).abs() <= 1e-12, "squared sparsity {sq}");
    ensure!((lin - 0.5).abs() <= 1e-12, "linear sparsity {lin}");
    let m = action_mse(&[0.3f64, 0.0, 0.0], &[0.0, 0.0, 0.0]).value;
    ensure!((m - 0.03).abs() <= 1e-12, "action mse {m}");
    Ok(format!("cosine {c:.12}, sparsity {sq} / {lin}, mse {m:.15}"))
}

fn gaussian_values() -> Outcome {
    ensure!(DEFAULT_SIGMA == 20.0 && REFERENCE_WIDTH == 227.0, "defaults {DEFAULT_SIGMA} / {REFERENCE_WIDTH}");
    ensure!(DatasetConfig::default().sigma == 20.0, "dataset sigma default");
    ensure!(SessionConfig::default().resolution == 227, "frame width default");
    let sigma = DEFAULT_SIGMA;
    let map = ok(gaussian_saliency_map(100.0, 80.0, sigma, 227, 227))?;
    ensure!(map.value(100, 80) == 1.0, "peak {}", map.value(100, 80));
    ensure!(map.argmax() == (100, 80), "argmax {:?}", map.argmax());
    // (20, 20) away: squared distance 800 = 2 sigma^2.
    let e = map.value(120, 100);
    ensure!((e - (-1f64).exp()).abs() <= 1e-9, "value at 2 sigma^2: {e}");
    let e2 = map.value(100 - 20, 80 + 20);
    ensure!((e2 - (-1f64).exp()).abs() <= 1e-9, "value at 2 sigma^2: {e2}");
    Ok(format!("peak 1 at gaze pixel, {e:.12} at squared distance 2 sigma^2, sigma 20 at width 227"))
}

fn central_session(frames: usize, seed: u64) -> Result<SessionLog, String> {
    let cfg = SessionConfig {
        n_frames: frames,
        seed,
        ..SessionConfig::default()
    };
    let mut log = ok(run_session(&cfg))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = log.meta.width as f64 / 2.0;
    let end = log.frames.last().expect("frames").t_ms;
    log.gaze = (0..=end / 20)
        .map(|k| GazeSample {
            t_ms: k * 20,
            x: c + rng.random_range(-10.0..10.0),
            y: c + rng.random_range(-10.0..10.0),
        })
        .collect();
    Ok(log)
}

fn debias() -> Outcome {
    let log = central_session(30, 3)?;
    let ds = ok(build_dataset(std::slice::from_ref(&log), &DatasetConfig::default()))?;
    let central = ds.samples.iter().filter(|s| s.is_central(DEFAULT_SIGMA)).count();
    ensure!(ds.counts.originals == 30, "originals {}", ds.counts.originals);
    ensure!(5 * central == ds.samples.len(), "{central} central of {}", ds.samples.len());
    for s in &ds.samples {
        ensure!(
            s.is_central(DEFAULT_SIGMA) == (s.info.provenance == Provenance::Original),
            "sample {} ({}) breaks the pattern",
            s.info.id,
            s.info.provenance
        );
    }
    let mut worst = 0.0f64;
    let mut crops = 0;
    for (i, frame) in log.frames.iter().enumerate() {
        let a = ok(align_gaze_to_frame(i, frame.t_ms, &log.gaze, frame.width, &AlignConfig::default()))?;
        for s in ok(central_bias_augment(frame, (a.x, a.y), DEFAULT_SIGMA, 4.0))? {
            let (px, py) = s.target.argmax();
            let (bx, by) = s.crop.inverse(px as f64, py as f64);
            worst = worst.max((bx - a.x).hypot(by - a.y));
            crops += 1;
        }
    }
    ensure!(crops == 4 * log.frames.len(), "{crops} crops");
    ensure!(worst <= 0.5, "round trip error {worst} px");
    Ok(format!(
        "central fraction {central}/{} = 1/5, {crops} crop peaks round-trip within {worst:.3} px",
        ds.samples.len()
    ))
}

fn brute_force(frame_t: u64, gaze: &[GazeSample], width: usize, weights: &[f64], threshold: f64) -> Option<(f64, f64)> {
    let seen: Vec<GazeSample> = gaze.iter().filter(|g| g.t_ms <= frame_t).copied().collect();
    let reference = *seen.last()?;
    let radius = threshold * width as f64 / 227.0;
    let (mut nx, mut ny, mut den) = (0.0, 0.0, 0.0);
    for (k, w) in weights.iter().enumerate().take(seen.len()) {
        let c = seen[seen.len() - 1 - k];
        if k == 0 || (c.x - reference.x).powi(2) + (c.y - reference.y).powi(2) <= radius * radius {
            nx += w * c.x;
            ny += w * c.y;
            den += w;
        }
    }
    Some((nx / den, ny / den))
}

fn alignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    let mut frames = 0;
    for _ in 0..1000 {
        let width = [96, 227, 320][rng.random_range(0..3)];
        let n = rng.random_range(1..50);
        let mut t = rng.random_range(0..30);
        let (mut x, mut y) = (width as f64 / 2.0, width as f64 / 2.0);
        let mut gaze = Vec::with_capacity(n);
        for _ in 0..n {
            t += rng.random_range(1..35);
            if rng.random_bool(0.15) {
                x = rng.random_range(0.0..width as f64);
                y = rng.random_range(0.0..width as f64);
            } else {
                x = (x + rng.random_range(-9.0..9.0)).clamp(0.0, width as f64 - 1.0);
                y = (y + rng.random_range(-9.0..9.0)).clamp(0.0, width as f64 - 1.0);
            }
            gaze.push(GazeSample { t_ms: t, x, y });
        }
        let cfg = AlignConfig::default();
        for i in 0..8 {
            let ft = rng.random_range(0..t + 30);
            let got = align_gaze_to_frame(i, ft, &gaze, width, &cfg);
            match (brute_force(ft, &gaze, width, &cfg.weights, cfg.threshold), got) {
                (None, Err(Error::FrameDropped { .. })) => {}
                (Some((ex, ey)), Ok(a)) => {
                    worst = worst.max((a.x - ex).abs()).max((a.y - ey).abs());
                    frames += 1;
                }
                (want, got) => return Err(format!("frame at {ft}: expected {want:?}, got {got:?}")),
            }
        }
    }
    ensure!(worst <= 1e-9, "max coordinate difference {worst:e}");
    Ok(format!("1000 sessions, {frames} aligned frames, max difference {worst:.1e}"))
}

fn roadsal_architecture() -> Outcome {
    let spec = RoadSalSpec::default();
    let net = ok(Net::new(ArchSpec::RoadSal(spec.clone())))?;
    let chain = net.shape_chain();
    let want: Vec<Vec<usize>> = vec![
        vec![96, 96, 16],
        vec![48, 48, 16],
        vec![48, 48, 24],
        vec![24, 24, 24],
        vec![24, 24, 32],
        vec![12, 12, 32],
        vec![4608],
        vec![2304],
        vec![2304],
    ];
    ensure!(chain == want, "shape chain {chain:?}");
    let params = net.init_params(0);
    let out = ok(roadsal_forward(&net, &params, &Tensor::<f32>::zeros([96, 96, 3])))?;
    ensure!(out.shape() == [48, 48], "output {:?}", out.shape());

    let t = Instant::now();
    let session = ok(run_session(&SessionConfig {
        n_frames: 40,
        seed: 3,
        ..SessionConfig::default()
    }))?;
    let dcfg = DatasetConfig {
        augment: false,
        ..DatasetConfig::default()
    };
    let mut ds = ok(build_dataset(&[session], &dcfg))?;
    ds.train = (0..20).collect();
    ds.test.clear();
    let mut cfg = TrainConfig {
        epochs: 300,
        ..TrainConfig::default()
    };
    cfg.sgd.learning_rate = 1e-3;
    cfg.sgd.batch_size = 5;
    let out = ok(train_roadsal(&ds, &spec, &cfg))?;
    let curve = &out.report.train_loss;
    let hit = curve.iter().position(|&l| l <= -0.95);
    let elapsed = t.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "overfit probe took {}", secs(elapsed));
    match hit {
        Some(e) => Ok(format!(
            "96>48>24>12, 4608 > 2304 > 2304 > 48x48; overfit reaches {:.4} at epoch {}, {}",
            curve[e],
            e + 1,
            secs(elapsed)
        )),
        None => Err(format!(
            "overfit probe best {:.4} after {} epochs",
            curve.iter().copied().fold(f64::INFINITY, f64::min),
            curve.len()
        )),
    }
}

fn checkpoint_bytes(ckpt: &gazedrive::nets::Checkpoint, dir: &Path) -> Result<Vec<u8>, String> {
    ok(save_checkpoint(dir, ckpt))?;
    let mut bytes = ok(fs::read(dir.join("manifest.json")))?;
    bytes.extend(ok(fs::read(dir.join("params.bin")))?);
    Ok(bytes)
}

fn autotasksal() -> Outcome {
    let t = Instant::now();
    let tmp = ok(tempfile::tempdir())?;
    let session = ok(run_session(&SessionConfig {
        n_frames: 16,
        seed: 1,
        ..SessionConfig::default()
    }))?;
    let data = ok(DriveData::from_sessions(&[session], 96))?;
    let agent = AgentSpec::default();
    let net1 = Net1Spec::default();
    let mut dcfg = TrainConfig {
        epochs: 60,
        ..TrainConfig::default()
    };
    dcfg.sgd.learning_rate = 3e-3;
    dcfg.sgd.batch_size = 8;
    let driver = ok(train_driver(&data, None, &agent, &dcfg, "net2"))?;
    let step1 = driver.report.final_train_loss;
    let net2 = driver.checkpoint;
    let before = checkpoint_bytes(&net2, &tmp.path().join("before"))?;

    let step2 = |lambda1: f64, lambda2: f64, epochs: usize| {
        let mut cfg = TrainConfig {
            epochs,
            lambda1,
            lambda2,
            ..TrainConfig::default()
        };
        cfg.sgd.learning_rate = 1e-2;
        cfg.sgd.decay = 0.0;
        cfg.sgd.batch_size = 4;
        train_attention_unsupervised(&net2, &data, None, &net1, &cfg).map_err(|e| e.to_string())
    };

    let mut finals = Vec::new();
    let mut loss2_at_zero = 0.0;
    for l1 in [0.0, 0.05, 0.5] {
        let out = step2(l1, 1.0, 100)?;
        finals.push(out.report.final_metrics["mean_attention"]);
        if l1 == 0.0 {
            loss2_at_zero = out.report.final_metrics["loss2"];
        }
    }
    let sparse = step2(0.1, 0.0, 200)?;
    let ma = &sparse.report.series["mean_attention"];
    let below = ma.iter().position(|&m| m < 0.05);
    let after = checkpoint_bytes(&net2, &tmp.path().join("after"))?;

    ensure!(before == after, "net2 changed during step 2");
    let Some(below) = below else {
        return Err(format!("lambda2 = 0 leaves mean attention at {:.4} after 200 epochs", ma[ma.len() - 1]));
    };
    ensure!(
        finals[0] >= finals[1] && finals[1] >= finals[2],
        "mean attention across lambda1 0, 0.05, 0.5: {finals:?}"
    );
    let ratio = loss2_at_zero / step1;
    ensure!(ratio <= 1.5, "lambda1 = 0 loss2 {loss2_at_zero:.6} is {ratio:.2}x the driver loss {step1:.6}");
    Ok(format!(
        "net2 bytes unchanged; lambda2=0 below 0.05 at epoch {}; mean attention {:.4} >= {:.4} >= {:.4}; loss2/driver {ratio:.2}; {}",
        below + 1,
        finals[0],
        finals[1],
        finals[2],
        secs(t.elapsed())
    ))
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let side = 96;
    let train_log = ok(run_session(&SessionConfig {
        n_frames: 2000,
        seed: 21,
        ..SessionConfig::default()
    }))?;
    let test_log = ok(run_session(&SessionConfig {
        n_frames: 400,
        seed: 22,
        ..SessionConfig::default()
    }))?;
    let train = ok(DriveData::from_sessions(std::slice::from_ref(&train_log), side))?;
    let test = ok(DriveData::from_sessions(&[test_log], side))?;

    let mut ds = ok(build_dataset(&[train_log], &DatasetConfig::default()))?;
    ds.train.truncate(240);
    ds.test.clear();
    let mut rcfg = TrainConfig {
        epochs: 4,
        ..TrainConfig::default()
    };
    rcfg.sgd.learning_rate = 1e-3;
    rcfg.sgd.batch_size = 8;
    let roadsal = ok(train_roadsal(&ds, &RoadSalSpec::default(), &rcfg))?.checkpoint;

    let spec = AgentSpec::default();
    let few: Vec<usize> = (0..train.len()).step_by(10).collect();
    let sub = train.subset(&few);
    let mut dcfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    dcfg.sgd.learning_rate = 3e-3;
    dcfg.sgd.batch_size = 8;
    let net2 = ok(train_driver(&sub, None, &spec, &dcfg, "net2"))?.checkpoint;
    let mut acfg = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    acfg.sgd.learning_rate = 1e-2;
    acfg.sgd.decay = 0.0;
    acfg.sgd.batch_size = 4;
    let net1 = ok(train_attention_unsupervised(&net2, &sub, None, &Net1Spec::default(), &acfg))?.checkpoint;

    let mut cfg = TrainConfig {
        epochs: 10,
        seed: 3,
        ..TrainConfig::default()
    };
    cfg.sgd.learning_rate = 3e-3;
    cfg.sgd.batch_size = 32;
    let agents = ok(train_agents(&roadsal, &net1, &train, None, &spec, &cfg))?;

    let mut rows = Vec::new();
    for (name, kind, o) in agents.iter() {
        let att = match kind {
            PipelineKind::Raw => None,
            PipelineKind::RoadSal => Some(&roadsal),
            PipelineKind::Net1 => Some(&net1),
        };
        rows.push(ok(evaluate_mse(name, &o.checkpoint, kind, att, &test))?);
    }
    let mut cmp = ok(compare_models(&rows))?;
    let baseline = ok(constant_baseline(train.mean_action(), &test))?;
    cmp.baseline = Some(baseline.clone());
    for line in cmp.table().lines() {
        println!("    {line}");
    }
    for r in &rows {
        ensure!(
            r.clamped.combined < baseline.combined,
            "{} held-out MSE {:.5} is not below the baseline {:.5}",
            r.model,
            r.clamped.combined,
            baseline.combined
        );
    }
    Ok(format!(
        "all three below baseline {:.5}; ordering {} ({}, informational); {}",
        baseline.combined,
        cmp.ordering,
        cmp.flag.as_str(),
        secs(t.elapsed())
    ))
}

fn run_in(cwd: &Path, args: &[&str]) -> Result<std::process::Output, String> {
    ok(Command::new(env!("CARGO_BIN_EXE_gazedrive")).current_dir(cwd).args(args).output())
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(bytes) = fs::read(&p) {
                out.insert(p.strip_prefix(root).unwrap_or(&p).to_path_buf(), bytes);
            }
        }
    }
    out
}

/// Runs every seeded command once, inside `root`, with relative paths.
fn pipeline(root: &Path) -> Result<(), String> {
    ok(fs::create_dir_all(root))?;
    let small = ["--seed", "4", "--epochs", "2", "--batch-size", "4"];
    let steps: Vec<Vec<&str>> = vec![
        vec!["simulate", "--seed", "5", "--frames", "24", "--resolution", "64", "--out", "train"],
        vec!["simulate", "--seed", "6", "--frames", "24", "--resolution", "64", "--out", "test"],
        vec!["gaze-prep", "--seed", "4", "--sessions", "train", "--input-size", "32", "--target-size", "16", "--out", "ds"],
        vec!["train-roadsal", "--dataset", "ds", "--out", "roadsal"],
        vec!["train-driver", "--sessions", "train", "--input", "32", "--out", "net2"],
        vec!["train-attn", "--sessions", "train", "--input", "32", "--net2", "net2", "--out", "net1"],
        vec![
            "train-agents", "--sessions", "train", "--input", "32", "--roadsal", "roadsal", "--net1", "net1", "--out",
            "agents",
        ],
        vec!["evaluate", "--agents", "agents", "--test-session", "test", "--out", "eval"],
        vec!["export-pairs", "--ckpt", "net1", "--session", "test", "--out", "pairs"],
    ];
    for mut args in steps {
        if args[0].starts_with("train") {
            args.extend(small);
        }
        let o = run_in(root, &args)?;
        ensure!(o.status.success(), "{} failed: {}", args[0], String::from_utf8_lossy(&o.stderr).trim());
    }
    Ok(())
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let tmp = ok(tempfile::tempdir())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let (ta, tb) = (tree(&a), tree(&b));
    for (path, bytes) in &ta {
        ensure!(tb.get(path) == Some(bytes), "{} differs between reruns", path.display());
    }
    ensure!(ta.len() == tb.len(), "file sets differ: {} vs {}", ta.len(), tb.len());

    let ckpt_dir = a.join("agents/model3/checkpoint");
    let ckpt = ok(load_checkpoint(&ckpt_dir))?;
    let again = tmp.path().join("resaved");
    ok(save_checkpoint(&again, &ckpt))?;
    for f in ["manifest.json", "params.bin"] {
        ensure!(
            fs::read(ckpt_dir.join(f)).ok() == fs::read(again.join(f)).ok(),
            "{f} changed after load and save"
        );
    }

    let params = ok(fs::read(again.join("params.bin")))?;
    let manifest = ok(fs::read(again.join("manifest.json")))?;
    let mut flipped = params.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    let mut bad_magic = params.clone();
    bad_magic[0] = b'X';
    let cases: Vec<(&str, Vec<u8>, Vec<u8>)> = vec![
        ("flipped payload byte", manifest.clone(), flipped),
        ("truncated payload", manifest.clone(), params[..params.len() - 7].to_vec()),
        ("bad magic", manifest.clone(), bad_magic),
        ("garbled manifest", manifest[..manifest.len() / 2].to_vec(), params.clone()),
        ("empty files", Vec::new(), Vec::new()),
    ];
    for (what, m, p) in &cases {
        let dir = tmp.path().join("corrupt");
        let _ = fs::remove_dir_all(&dir);
        ok(fs::create_dir_all(&dir))?;
        ok(fs::write(dir.join("manifest.json"), m))?;
        ok(fs::write(dir.join("params.bin"), p))?;
        let loaded = catch_unwind(|| load_checkpoint(&dir)).map_err(|_| format!("{what}: load panicked"))?;
        match loaded {
            Err(e) => ensure!(e.kind() == "corrupt-checkpoint", "{what}: error kind {}", e.kind()),
            Ok(_) => return Err(format!("{what}: loaded without complaint")),
        }
        let o = run_in(&a, &["export-pairs", "--ckpt", &dir.display().to_string(), "--session", "test", "--out", "x"])?;
        let err = String::from_utf8_lossy(&o.stderr);
        ensure!(
            o.status.code() == Some(1) && err.starts_with("ERROR corrupt-checkpoint:") && err.lines().count() == 1,
            "{what}: binary said {:?} with {:?}",
            err.trim(),
            o.status
        );
    }
    Ok(format!(
        "{} files identical across reruns of every command; checkpoint re-save identical; {} corruptions diagnosed; {}",
        ta.len(),
        cases.len(),
        secs(t.elapsed())
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", gradient_suite),
        ("loss oracles", loss_oracles),
        ("gaussian saliency values", gaussian_values),
        ("de-bias property", debias),
        ("alignment heuristic", alignment),
        ("roadsal architecture", roadsal_architecture),
        ("autotasksal properties", autotasksal),
        ("end-to-end", end_to_end),
        ("determinism and persistence", determinism),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
