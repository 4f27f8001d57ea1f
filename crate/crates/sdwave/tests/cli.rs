//! End-to-end checks of the command-line harness: artifact layout, pinned
//! CSV schemas, the exit-status contract per subcommand, thread fan-out and
//! reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sdwave::report;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_string_lossy()
        .to_string()
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sdwave"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).to_string(),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )
}

fn header_of(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap_or_else(|_| panic!("missing {}", path.display()));
    text.lines().next().unwrap_or_default().to_string()
}

/// Small configuration reused by the artifact tests; kept tiny so every
/// subcommand finishes in seconds.
fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        r#"
[domain]
lx = 3.14159265358979312
ly = 3.14159265358979312

[discretization]
modes = 8

[damping]
family = "exp_power"
params = [0.5]

[source]
family = "exp_source"
params = [1.0, 1.0]

[forcing]
modes = [[1, 1, 0.25]]

[initial]
w0 = { profile = "modes", modes = [[1, 1, 0.4]] }
w1 = { profile = "zero" }

[time]
dt = 2e-3
horizon = 2.0
output_stride = 10

[tolerances]
balance = 1e-4

[ensemble]
members = 2

[equilibrium]
starts = 2

[experiment]
seed = 11
tag = "small"
"#,
    )
    .unwrap();
    path.to_string_lossy().to_string()
}

#[test]
fn all_subcommands_emit_documented_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cases: &[(&str, &[(&str, &str)])] = &[
        ("simulate", &[("ledger.csv", report::LEDGER_HEADER)]),
        ("check-hypotheses", &[("hypotheses.csv", report::HYPOTHESES_HEADER)]),
        (
            "decompose",
            &[
                ("ledger.csv", report::LEDGER_HEADER),
                ("decomposition.csv", report::DECOMPOSITION_HEADER),
                ("drift.csv", report::DRIFT_HEADER),
                ("smoothing.csv", report::SMOOTHING_HEADER),
            ],
        ),
        (
            "kernel-check",
            &[("kernel.csv", report::KERNEL_HEADER), ("linf_bound.csv", report::LINF_BOUND_HEADER)],
        ),
        ("equilibrium", &[("equilibrium.csv", report::EQUILIBRIUM_HEADER)]),
        (
            "sweep",
            &[("sweep.csv", report::SWEEP_HEADER), ("iteration.csv", report::ITERATION_HEADER)],
        ),
        (
            "attractor",
            &[("attractor.csv", report::ATTRACTOR_HEADER), ("ledger.csv", report::LEDGER_HEADER)],
        ),
    ];
    for (sub, artifacts) in cases {
        let out = tmp.path().join(sub);
        let (code, _, err) =
            run(&[sub, "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
        assert!(code == 0 || code == 2, "{sub} exited {code}: {err}");
        let report_txt = fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(report_txt.contains("VERDICT"), "{sub} report lacks verdicts");
        assert!(report_txt.trim_end().ends_with(&format!("EXIT {code}")), "{sub} report/exit mismatch");
        assert!(report_txt.contains("rng: chacha12 seed=11"), "{sub} must document the PRNG");
        for (file, header) in *artifacts {
            assert_eq!(&header_of(&out.join(file)), header, "{sub}/{file} header drifted");
        }
    }
}

#[test]
fn decompose_attractor_kernel_verdicts_pass_on_small_fixture() {
    // the small fixture is coarsely sampled, so only the subcommands whose
    // tolerances it meets are asserted to exit 0 here
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for sub in ["check-hypotheses", "equilibrium", "kernel-check", "sweep"] {
        let out = tmp.path().join(format!("z-{sub}"));
        let (code, _, err) = run(&[sub, "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
        assert_eq!(code, 0, "{sub} failed: {err}");
    }
}

#[test]
fn threads_flag_and_env_are_accepted_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out1 = tmp.path().join("t1");
    let out2 = tmp.path().join("t2");
    let out3 = tmp.path().join("t3");
    let (c1, _, _) = run(&["sweep", "--config", &cfg, "--out", out1.to_str().unwrap()], &[]);
    let (c2, _, _) = run(
        &["sweep", "--config", &cfg, "--out", out2.to_str().unwrap(), "--threads", "2"],
        &[],
    );
    let (c3, _, _) = run(
        &["sweep", "--config", &cfg, "--out", out3.to_str().unwrap()],
        &[("SDWAVE_THREADS", "2")],
    );
    assert_eq!((c1, c2, c3), (0, 0, 0));
    let a = fs::read(out1.join("sweep.csv")).unwrap();
    let b = fs::read(out2.join("sweep.csv")).unwrap();
    let c = fs::read(out3.join("sweep.csv")).unwrap();
    assert_eq!(a, b, "thread count changed sweep output");
    assert_eq!(a, c, "env-configured threads changed sweep output");
}

#[test]
fn reruns_are_byte_identical_across_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out1 = tmp.path().join("r1");
    let out2 = tmp.path().join("r2");
    for out in [&out1, &out2] {
        let (code, _, err) =
            run(&["decompose", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
        assert!(code == 0 || code == 2, "{err}");
    }
    for file in ["report.txt", "ledger.csv", "decomposition.csv", "drift.csv", "smoothing.csv"] {
        assert_eq!(
            fs::read(out1.join(file)).unwrap(),
            fs::read(out2.join(file)).unwrap(),
            "{file} differs between reruns"
        );
    }
}

#[test]
fn config_errors_name_key_and_constraint() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| -> String {
        let p: PathBuf = tmp.path().join(name);
        fs::write(&p, body).unwrap();
        p.to_string_lossy().to_string()
    };
    let base = fs::read_to_string(fixture("minimal.toml")).unwrap();

    let bad_gamma = write(
        "gamma.toml",
        &base.replace(
            "family = \"linear\"\nparams = [1.0]",
            "family = \"exp_source\"\nparams = [1.0, 2.0]",
        ),
    );
    let (code, _, err) = run(&["simulate", "--config", &bad_gamma, "--out", "/tmp/x1"], &[]);
    assert_eq!(code, 1);
    assert!(err.contains("gamma must lie in [1, 2)"), "{err}");

    let unknown = write("unknown.toml", &base.replace("dt = 1e-3", "dt = 1e-3\nmystery = 1"));
    let (code, _, err) = run(&["simulate", "--config", &unknown, "--out", "/tmp/x2"], &[]);
    assert_eq!(code, 1);
    assert!(err.contains("mystery"), "unknown key not named: {err}");

    let (code, _, _) = run(&["simulate", "--config", "/nonexistent.toml", "--out", "/tmp/x3"], &[]);
    assert_eq!(code, 1);

    let (code, _, _) = run(&["not-a-subcommand"], &[]);
    assert_eq!(code, 1);
}

#[test]
fn skip_flag_reaches_the_integrator_on_inadmissible_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("skip");
    // without the flag: the admissibility verdict fails and no run happens
    let (code, _, _) = run(
        &["simulate", "--config", &fixture("antidamping.toml"), "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(code, 2);
    assert!(!out.join("ledger.csv").exists(), "run must not start on a failing gate");
    // with the flag the run proceeds (and fails its Lyapunov verdict)
    let out2 = tmp.path().join("skip2");
    let (code, _, _) = run(
        &[
            "simulate",
            "--config",
            &fixture("antidamping.toml"),
            "--out",
            out2.to_str().unwrap(),
            "--skip-hypothesis-check",
        ],
        &[],
    );
    assert_eq!(code, 2);
    assert!(out2.join("ledger.csv").exists());
    let report_txt = fs::read_to_string(out2.join("report.txt")).unwrap();
    assert!(report_txt.contains("VERDICT lyapunov-monotone: FAIL"), "{report_txt}");
}
