use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "subjects = 1\nrepetitions = 2\ntotal_slots = 15\n\
[network]\nmax_epochs_train = 100\nmax_steps_fgrep = 20\nhidden_units = 8\n\
[generator]\nvoxel_dim = 20\n";

fn cerebra(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("config.toml");
    if !config.exists() {
        std::fs::write(&config, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_cerebra"))
        .arg("--config")
        .arg(&config)
        .args(args)
        .env("CEREBRA_KIT_OUT", dir.join("out"))
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn all_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cerebra(dir.path(), &["run", "all"]));
    let out = dir.path().join("out");
    for f in ["measures.csv", "questionnaires.json", "consensus.csv", "evaluation.json", "report.json", "report.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("HUMAN RESPONSES DISTRIBUTION"));

    let first = std::fs::read(out.join("report.json")).unwrap();
    ok(&cerebra(dir.path(), &["run", "report"]));
    assert_eq!(first, std::fs::read(out.join("report.json")).unwrap());
}

#[test]
fn fit_without_measures_is_a_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cerebra(dir.path(), &["gen-data"]));
    let o = cerebra(dir.path(), &["run", "fit"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("measures.csv"));
}

#[test]
fn gen_data_depends_only_on_the_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&cerebra(a.path(), &["gen-data"]));
    ok(&cerebra(b.path(), &["gen-data"]));
    let read = |d: &Path| std::fs::read(d.join("out/fmri/S1.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    ok(&cerebra(b.path(), &["--seed", "2", "gen-data"]));
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn unknown_stage_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cerebra(dir.path(), &["run", "nonsense"]).status.code(), Some(1));
}

#[test]
fn help_lists_the_stages() {
    let dir = tempfile::tempdir().unwrap();
    let o = cerebra(dir.path(), &["run", "--help"]);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    for stage in ["synth", "train", "contextualize", "analyze", "measures", "survey-gen", "ingest", "fit", "report", "all"] {
        assert!(text.contains(stage), "{stage} not in help");
    }
}
