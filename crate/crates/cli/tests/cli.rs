use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .env_remove("FORGE_DATA_DIR")
        .env_remove("FORGE_PORT")
        .env_remove("FORGE_TOKEN")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Set UPDATE_GOLDEN=1 to rewrite the files after an intended change.
#[test]
fn help_matches_golden_files() {
    for sub in ["", "gen", "serve", "eval", "replay", "report"] {
        let mut args: Vec<&str> = Vec::new();
        if !sub.is_empty() {
            args.push(sub);
        }
        args.push("--help");
        let o = forge(&args);
        assert_eq!(code(&o), 0);
        let name = if sub.is_empty() { "forge" } else { sub };
        let path = golden_dir().join(format!("{name}.help.txt"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(&path, &o.stdout).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap();
        assert_eq!(stdout(&o), want, "{name} --help drifted from {}", path.display());
    }
}

#[test]
fn help_lists_every_documented_flag() {
    let gen = stdout(&forge(&["gen", "--help"]));
    for flag in [
        "--box",
        "--mode",
        "--count",
        "--seed",
        "--out",
        "--require-assembly",
        "--removability",
        "--workers",
    ] {
        assert!(gen.contains(flag), "gen --help lacks {flag}");
    }
    let eval = stdout(&forge(&["eval", "--help"]));
    for flag in [
        "--suite",
        "--agent",
        "--mode",
        "--k",
        "--budget",
        "--history-window",
        "--seed",
    ] {
        assert!(eval.contains(flag), "eval --help lacks {flag}");
    }
}

#[test]
fn usage_errors() {
    assert_eq!(code(&forge(&["gen", "--bogus"])), 64);
    assert_eq!(code(&forge(&["gen", "--box", "2x2x3"])), 64);
    assert_eq!(
        code(&forge(&[
            "gen", "--box", "2y2", "--mode", "easy", "--count", "1", "--out", "x"
        ])),
        64
    );
    assert_eq!(
        code(&forge(&["eval", "--suite", "x", "--agent", "nope.toml"])),
        64
    );
    assert_eq!(code(&forge(&["--config", "/nonexistent.toml", "report"])), 64);
}

#[test]
fn gen_then_rerun_adds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let args = [
        "gen",
        "--box",
        "2x3x3",
        "--mode",
        "mid",
        "--count",
        "4",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ];
    let first = forge(&args);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("accepted 4 "));
    assert!(
        String::from_utf8_lossy(&first.stderr).contains("seed = 7"),
        "resolved config is printed"
    );
    let manifests = |p: &Path| {
        std::fs::read_dir(p)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().join("manifest.json").is_file())
            .count()
    };
    assert_eq!(manifests(&out), 4);
    let second = forge(&args);
    assert_eq!(code(&second), 0);
    assert!(stdout(&second).contains("total accepted 0"));
    assert_eq!(manifests(&out), 4);
}

#[test]
fn gen_shortfall_exits_2() {
    // The small easy box admits only a handful of distinct puzzles.
    let dir = tempfile::tempdir().unwrap();
    let o = forge(&[
        "gen",
        "--box",
        "2x2x3",
        "--mode",
        "easy",
        "--count",
        "10",
        "--seed",
        "7",
        "--max-calls-factor",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("forge.toml");
    let data = dir.path().join("data");
    std::fs::write(
        &cfg,
        format!(
            "[gen]\nbox = [\"2x3x3\"]\nmode = [\"mid\"]\ncount = 5\nseed = 3\nout = {:?}\n",
            data.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = forge(&["--config", cfg.to_str().unwrap(), "gen", "--count", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("count = 2") && err.contains("seed = 3"), "{err}");
    assert!(stdout(&o).contains("accepted 2 "));

    std::fs::write(&cfg, "[gen]\ncolour = 1\n").unwrap();
    assert_eq!(code(&forge(&["--config", cfg.to_str().unwrap(), "gen"])), 64);
}

#[test]
fn eval_replay_report_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let runs = dir.path().join("runs");
    let d = data.to_str().unwrap();
    assert_eq!(
        code(&forge(&[
            "gen", "--box", "2x3x3", "--mode", "mid", "--count", "3", "--seed", "1", "--out", d
        ])),
        0
    );

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(code(&forge(&["report", "--runs", empty.to_str().unwrap()])), 2);
    assert_eq!(
        code(&forge(&[
            "eval",
            "--suite",
            empty.to_str().unwrap(),
            "--agent",
            "oracle"
        ])),
        2
    );

    let run = runs.join("random");
    let o = forge(&[
        "eval",
        "--suite",
        d,
        "--agent",
        "random",
        "--k",
        "2",
        "--seed",
        "4",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // A second eval into the same directory is refused rather than mixed in.
    assert_eq!(
        code(&forge(&[
            "eval",
            "--suite",
            d,
            "--agent",
            "random",
            "--out",
            run.to_str().unwrap()
        ])),
        1
    );

    let traj = run.join("trajectories.jsonl");
    assert_eq!(
        code(&forge(&[
            "replay",
            "--trajectory",
            traj.to_str().unwrap(),
            "--suite",
            d
        ])),
        0
    );

    // Edit one recorded action: the replay must notice.
    let text = std::fs::read_to_string(&traj).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let rec = lines
        .iter_mut()
        .find(|r| r["actions"].as_array().unwrap().len() > 2)
        .unwrap();
    rec["actions"][1]["action"] = serde_json::json!({ "kind": "done" });
    let edited = dir.path().join("edited.jsonl");
    let body: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    std::fs::write(&edited, body.join("\n") + "\n").unwrap();
    let o = forge(&["replay", "--trajectory", edited.to_str().unwrap(), "--suite", d]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("diverges at step 1"), "{}", stdout(&o));

    let o = forge(&[
        "eval",
        "--suite",
        d,
        "--agent",
        "oracle",
        "--out",
        runs.join("oracle").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = forge(&["report", "--runs", runs.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(runs.join("report.csv")).unwrap();
    let oracle_row = csv.lines().find(|l| l.starts_with("oracle,")).unwrap();
    let cols: Vec<&str> = oracle_row.split(',').collect();
    assert_eq!(&cols[..5], ["oracle", "interactive", "3", "100.0", "3"]);
    assert_eq!(cols[10], "0.00");
    assert_eq!(cols[11], "0.00");
}
