use std::path::Path;
use std::process::{Command, Output};

fn mmgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmgan"))
        .args(args)
        .env_remove("MMGAN_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn train(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--steps", "60", "--eval-every", "20", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    mmgan(&args)
}

fn metrics(dir: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(dir.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn train_writes_the_documented_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let o = train(&dir, &["--dataset", "ring8", "--kernel", "rbf", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let rows = metrics(&dir);
    assert_eq!(
        rows[0].join(","),
        "step,loss_g,loss_d,l_orig,manifold_term,radius_term,r_g,modes_covered,hq_fraction,centroid_gap,radius_gap"
    );
    assert_eq!(rows.len(), 1 + 3);
    assert_eq!(rows[3][0], "60");
    for step in [20, 40, 60] {
        assert!(dir.join(format!("samples_{step}.csv")).exists());
        let svg = std::fs::read_to_string(dir.join(format!("scatter_{step}.svg"))).unwrap();
        assert!(svg.contains("#999999") && svg.contains("#d62728"));
    }
    let samples = std::fs::read_to_string(dir.join("samples_20.csv")).unwrap();
    assert!(samples.starts_with("x0,x1\n") && !samples.contains('\r'));
    assert_eq!(samples.lines().count(), 1 + 2000);

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["status"], "completed");
    assert_eq!(manifest["config"]["kernel"], "rbf");
    mmgan_cli::output::verify_manifest(&dir).unwrap();
}

#[test]
fn zero_beta_reports_but_excludes_the_penalty() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train(tmp.path(), &["--beta", "0"]);
    assert_eq!(code(&o), 0);
    for row in &metrics(tmp.path())[1..] {
        let v: Vec<f64> = row[1..7].iter().map(|s| s.parse().unwrap()).collect();
        let (loss_g, manifold, radius, rg) = (v[0], v[3], v[4], v[5]);
        assert!(rg > 0.0);
        assert!((loss_g - (manifold + radius)).abs() < 1e-12);
    }
}

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&train(&a, &["--seed", "3"])), 0);
    let manifest = a.join("run.json");
    let o = mmgan(&["train", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["metrics.csv", "generator.bin", "discriminator.bin", "samples_60.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn eval_prints_one_row_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&train(tmp.path(), &[])), 0);
    let run = tmp.path().to_str().unwrap();
    let first = mmgan(&["eval", "--run", run]);
    assert_eq!(code(&first), 0);
    let text = String::from_utf8(first.stdout.clone()).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "step,modes_covered,coverage_fraction,hq_fraction,centroid_gap,radius_gap,r_g_value"
    );
    assert_eq!(lines[1].split(',').count(), 7);
    assert_eq!(mmgan(&["eval", "--run", run]).stdout, first.stdout);

    let empty = mmgan(&["eval", "--run", run, "--samples", "0"]);
    assert_eq!(code(&empty), 1);
    assert!(String::from_utf8_lossy(&empty.stderr).contains("empty evaluation"));
}

#[test]
fn eval_rejects_missing_or_corrupt_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().to_str().unwrap();
    assert_eq!(code(&mmgan(&["eval", "--run", run])), 2);
    std::fs::write(tmp.path().join("generator.bin"), b"MMGN\x01\x00garbage").unwrap();
    assert_eq!(code(&mmgan(&["eval", "--run", run])), 2);
}

#[test]
fn gradcheck_table_filter_and_fault() {
    let all = mmgan(&["gradcheck"]);
    assert_eq!(code(&all), 0);
    let table = String::from_utf8(all.stdout).unwrap();
    assert_eq!(table.lines().count(), 1 + 8);
    assert!(table.lines().skip(1).all(|l| l.ends_with("pass")));

    let one = mmgan(&["gradcheck", "--kernel", "linear", "--alpha", "0", "--beta", "0"]);
    assert_eq!(code(&one), 0);
    assert_eq!(String::from_utf8(one.stdout).unwrap().lines().count(), 2);

    let fault = mmgan(&["gradcheck", "--kernel", "exp", "--inject-fault"]);
    assert_eq!(code(&fault), 4);
    assert!(String::from_utf8_lossy(&fault.stderr).contains("exp"));
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    for args in [
        vec!["train", "--kernel", "sigmoid", "--out", out],
        vec!["train", "--delta", "1.5", "--out", out],
        vec!["train", "--set", "colour=red", "--out", out],
        vec!["train", "--dataset", "idx", "--out", out],
        vec!["train", "--no-such-flag"],
    ] {
        assert_eq!(code(&mmgan(&args)), 1, "{args:?}");
    }
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "steps = 10\nwhat = ever\n").unwrap();
    assert_eq!(code(&mmgan(&["train", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn config_file_then_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# short run\nsteps = 40\neval_every = 20\nkernel = exp\nseed = 5\n").unwrap();
    let dir = tmp.path().join("out");
    let o = mmgan(&["train", "--config", cfg.to_str().unwrap(), "--seed", "6", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!((m["config"]["kernel"].as_str(), m["seed"].as_u64()), (Some("exp"), Some(6)));
    assert_eq!(metrics(&dir).len(), 3);
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mmgan"))
        .args(["train", "--steps", "10", "--eval-every", "10", "--baseline", "--seed", "4"])
        .env("MMGAN_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("ring8_baseline_seed4").join("generator.bin").exists());
}

#[test]
fn unwritable_output_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let o = mmgan(&["train", "--steps", "5", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_three_and_records_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train(tmp.path(), &["--set", "lr_g=1e300"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "aborted");
    assert!(m["aborted_at_step"].as_u64().is_some_and(|s| (1..=60).contains(&s)));
    mmgan_cli::output::verify_manifest(tmp.path()).unwrap();
}

#[test]
fn trains_on_gzipped_idx_images() {
    use std::io::Write;
    let tmp = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..32 * 64).map(|i| (i * 37 % 256) as u8).collect();
    let raw = mmgan_core::data::encode_idx_images(32, 8, 8, &pixels);
    let path = tmp.path().join("tiny-images.gz");
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(&raw).unwrap();
    std::fs::write(&path, gz.finish().unwrap()).unwrap();

    let dir = tmp.path().join("run");
    let o = train(
        &dir,
        &["--dataset", "idx", "--idx-images", path.to_str().unwrap(), "--batch", "16", "--set", "eval_samples=32"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.join("scatter_20.svg").exists());
    assert_eq!(std::fs::read_to_string(dir.join("samples_20.csv")).unwrap().lines().next().unwrap().split(',').count(), 64);
}
