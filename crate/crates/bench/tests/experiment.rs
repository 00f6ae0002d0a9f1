use std::process::Command;

use rbds_bench::experiment::sweep;
use rbds_bench::{run_experiment, ExperimentConfig, ExperimentReport};
use rbds_core::Error;

fn small(extra: &str) -> ExperimentConfig {
    let text = format!(
        "seed=3\nrepetitions=2\ndata.classes=3\ndata.ambient_dim=20\ndata.subspace_rank=2\ndata.samples_per_class=10\n\
         methods=rbds,lrrs\noutput.traces=false\nsolver.max_iters=300\n{extra}"
    );
    ExperimentConfig::parse(&text).unwrap()
}

#[test]
fn same_seed_same_report() {
    let cfg = small("corrupt.both.kind=pixel_uniform\ncorrupt.both.fraction=0.1\n");
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.runs_csv(), b.runs_csv());
    assert_eq!(a.summary_csv(), b.summary_csv());
    let mut other = cfg.clone();
    other.seed = 4;
    assert_ne!(run_experiment(&other).unwrap().runs_csv(), a.runs_csv());
}

#[test]
fn empty_method_list_is_a_config_error() {
    let mut cfg = small("");
    cfg.methods.clear();
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    assert!(ExperimentConfig::parse("methods=\n")
        .and_then(|c| run_experiment(&c))
        .is_err());
}

#[test]
fn clean_separated_data_is_classified() {
    let cfg = ExperimentConfig::parse(
        "seed=1\nrepetitions=3\ndata.classes=5\ndata.subspace_rank=2\ndata.noise_sigma=0\nmethods=rbds\noutput.traces=false\n",
    )
    .unwrap();
    let report = run_experiment(&cfg).unwrap();
    let acc = report.mean_accuracy("rbds").unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn sweep_returns_one_report_per_value_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("methods=lrrs\nrepetitions=1\ncorrupt.both.kind=pixel_uniform\n");
    cfg.output_dir = Some(dir.path().to_path_buf());
    let values = [0.0, 0.1, 0.2];
    let reports = sweep(&cfg, "corrupt.both.fraction", &values).unwrap();
    assert_eq!(reports.len(), 3);
    for (r, v) in reports.iter().zip(values) {
        assert!(
            r.config_text
                .contains(&format!("corrupt.test.fraction={v}")),
            "{}",
            r.config_text
        );
    }
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("point_02/report.csv").exists());

    assert!(matches!(
        sweep(&cfg, "corrupt.both.fraction", &[]),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        sweep(&cfg, "no.such.key", &[1.0]),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        sweep(&cfg, "methods", &[1.0]),
        Err(Error::Config(_))
    ));
}

#[test]
fn accuracy_falls_as_pixel_corruption_grows() {
    let cfg = ExperimentConfig::parse(
        "seed=11\nrepetitions=10\ndata.classes=3\ndata.ambient_dim=30\ndata.subspace_rank=2\ndata.samples_per_class=12\n\
         methods=lrrs\noutput.traces=false\ncorrupt.both.kind=pixel_uniform\n",
    )
    .unwrap();
    let values = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let reports = sweep(&cfg, "corrupt.both.fraction", &values).unwrap();
    let acc: Vec<f64> = reports
        .iter()
        .map(|r| r.mean_accuracy("lrrs").unwrap())
        .collect();
    for w in acc.windows(2) {
        assert!(w[1] <= w[0] + 0.05, "{acc:?}");
    }
    assert!(acc[5] < acc[0], "{acc:?}");
}

#[test]
fn report_csv_round_trips() {
    let report = run_experiment(&small("")).unwrap();
    let back = ExperimentReport::from_runs_csv(&report.runs_csv()).unwrap();
    assert_eq!(back.runs.len(), report.runs.len());
    assert_eq!(back.config_hash, report.config_hash);
    for (a, b) in report.runs.iter().zip(&back.runs) {
        assert_eq!(a.method, b.method);
        assert_eq!(
            (a.rep, a.seed, a.iterations, a.converged),
            (b.rep, b.seed, b.iterations, b.converged)
        );
        assert!((a.accuracy - b.accuracy).abs() <= 1e-12);
        assert!(
            (a.offblock_ratio - b.offblock_ratio).abs() <= 1e-12 * a.offblock_ratio.abs().max(1.0)
        );
    }
}

#[test]
fn every_row_carries_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("");
    cfg.output_dir = Some(dir.path().to_path_buf());
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.config_hash.len(), 64);
    for file in ["report.csv", "summary.csv"] {
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        for line in text.lines().skip(1) {
            assert!(line.ends_with(&report.config_hash), "{file}: {line}");
        }
    }
}

#[test]
fn cli_reports_bad_input() {
    let bin = env!("CARGO_BIN_EXE_rbds");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "repetitions=2\nno_such_key=1\n").unwrap();
    let out = Command::new(bin)
        .arg("--config")
        .arg(&cfg)
        .arg("eval")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("line 2"), "{err}");

    let out = Command::new(bin)
        .args(["--method", "nope", "--out"])
        .arg(dir.path().join("o"))
        .arg("eval")
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn cli_gen_train_code() {
    let bin = env!("CARGO_BIN_EXE_rbds");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(
        &cfg,
        "data.classes=2\ndata.ambient_dim=12\ndata.samples_per_class=12\ndata.subspace_rank=2\n",
    )
    .unwrap();
    let run = |args: &[&str], out: &str| {
        let status = Command::new(bin)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .arg("--quiet")
            .args(args)
            .status()
            .unwrap();
        assert!(status.success(), "{args:?}");
    };
    run(&["gen"], "g");
    assert!(dir.path().join("g/data.csv").exists());
    run(&["train"], "t");
    for f in [
        "dictionary.csv",
        "z_train.csv",
        "trace.csv",
        "model.txt",
        "test.csv",
    ] {
        assert!(dir.path().join("t").join(f).exists(), "{f}");
    }
    let model = dir.path().join("t");
    let input = model.join("test.csv");
    run(
        &[
            "code",
            "--model",
            model.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
        ],
        "c",
    );
    assert!(dir.path().join("c/z_hat.csv").exists());
    assert!(dir.path().join("c/e_hat.csv").exists());
}
