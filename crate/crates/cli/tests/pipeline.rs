use std::path::Path;
use std::process::{Command, Output};

fn dmval(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmval"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth_corpus(dir: &Path) {
    let out = dmval(dir, &["synth", "--data", "data", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn full_run_writes_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_corpus(dir);
    let out = dmval(
        dir,
        &["run", "--data", "data", "--out", "out", "--jobs", "2"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let manifest = read_json(&dir.join("out/extract/manifest.json"));
    let excluded = manifest["excluded_recordings"].as_array().unwrap();
    assert_eq!(excluded.len(), 1);
    assert_eq!(excluded[0]["recording_id"], 3);
    let total = manifest["total_demos"].as_u64().unwrap() as usize;
    assert_eq!(total, manifest["demos"].as_array().unwrap().len());

    let lines = std::fs::read_to_string(dir.join("out/train/results.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), total);
    let summary = read_json(&dir.join("out/train/summary.json"));
    assert_eq!(summary["total"].as_u64().unwrap() as usize, total);

    let report = read_json(&dir.join("out/validate/report.json"));
    let converged = summary["converged"].as_u64().unwrap();
    assert_eq!(report["demos_converged"].as_u64().unwrap(), converged);
    assert_eq!(report["rollouts"].as_u64().unwrap(), converged);
    for stage in ["extract", "train", "validate"] {
        assert!(dir.join("out").join(stage).join("config.json").exists());
    }
    if converged > 0 {
        assert!(dir.join("out/validate/tactical_table.csv").exists());
        let first = report["labels"][0]["demo_id"].as_str().unwrap();
        let csv = std::fs::read_to_string(dir.join(format!("out/validate/rollouts/{first}.csv")))
            .unwrap();
        assert!(csv.lines().count() > 2);
    }
    for file in report["phase_data"]["files"].as_array().unwrap() {
        assert!(dir
            .join("out/validate")
            .join(file["path"].as_str().unwrap())
            .exists());
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.json"), r#"{"not_a_key": 1}"#).unwrap();
    let out = dmval(dir, &["extract", "--config", "bad.json"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("not_a_key"));

    let out = dmval(dir, &["extract", "--sigma-x", "-1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = dmval(dir, &["extract", "--ax-bounds", "3,-3"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn data_errors_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dmval(dir, &["extract", "--data", "missing"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = dmval(dir, &["train", "--out", "nowhere"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn validation_names_demos_missing_from_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_corpus(dir);
    let out = dmval(dir, &["extract", "--data", "data", "--out", "out"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    std::fs::create_dir_all(dir.join("out/train")).unwrap();
    let record = serde_json::json!({
        "demo_id": "99-00042",
        "result": {
            "demo_id": "99-00042",
            "status": "converged",
            "weights": {"vel": -1.0, "lane": 3.0, "bounds": -3.0, "collision": -20.0},
            "iterations": 5,
            "final_nll": 1.0,
            "failed_segment": null
        }
    });
    std::fs::write(dir.join("out/train/results.jsonl"), format!("{record}\n")).unwrap();
    let out = dmval(dir, &["validate", "--data", "data", "--out", "out"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("99-00042"), "{}", stderr(&out));
}

#[test]
fn rollout_failures_are_reported_and_exit_with_four() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_corpus(dir);
    assert_eq!(
        code(&dmval(dir, &["extract", "--data", "data", "--out", "out"])),
        0
    );
    let manifest = read_json(&dir.join("out/extract/manifest.json"));
    let id = manifest["demos"][0]["demo_id"].as_str().unwrap();
    // Finite but huge weights overflow the planner objective.
    let record = serde_json::json!({
        "demo_id": id,
        "result": {
            "demo_id": id,
            "status": "converged",
            "weights": {"vel": 1e308, "lane": 1e308, "bounds": 1e308, "collision": 1e308},
            "iterations": 1,
            "final_nll": 0.0,
            "failed_segment": null
        }
    });
    std::fs::create_dir_all(dir.join("out/train")).unwrap();
    std::fs::write(dir.join("out/train/results.jsonl"), format!("{record}\n")).unwrap();
    let out = dmval(dir, &["validate", "--data", "data", "--out", "out"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let report = read_json(&dir.join("out/validate/report.json"));
    assert_eq!(report["rollout_failures"][0]["demo_id"], id);
    assert_eq!(report["rollouts"], 0);
}

#[test]
fn gridsearch_ranks_every_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_corpus(dir);
    assert_eq!(
        code(&dmval(dir, &["extract", "--data", "data", "--out", "out"])),
        0
    );
    let config = serde_json::json!({
        "data_dir": "data",
        "out_dir": "out",
        "gridsearch_demos": 2,
        "grid": {"c": [0.14, 0.2], "sigma_x": [15.0], "sigma_y": [1.4], "preferred": {"c": 0.14, "sigma_x": 15.0, "sigma_y": 1.4}}
    });
    std::fs::write(dir.join("grid.json"), config.to_string()).unwrap();
    let out = dmval(dir, &["gridsearch", "--config", "grid.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ranking = read_json(&dir.join("out/gridsearch/ranking.json"));
    let ranking = ranking.as_array().unwrap();
    assert_eq!(ranking.len(), 2);
    assert_eq!(ranking[0]["rank"], 1);
    assert!(ranking.iter().all(|r| r["score"]["evaluated"] == 2));
    let csv = std::fs::read_to_string(dir.join("out/gridsearch/ranking.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    if ranking[0]["score"]["desirable"] == ranking[1]["score"]["desirable"] {
        assert_eq!(ranking[0]["score"]["constants"]["c"], 0.14);
        assert_eq!(ranking[0]["tied_for_best"], true);
    }
}

#[test]
fn synthetic_corpus_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (sub, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = dmval(dir, &["synth", "--data", sub, "--seed", seed]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let tracks = |sub: &str| std::fs::read(dir.join(sub).join("01_tracks.csv")).unwrap();
    assert_eq!(tracks("a"), tracks("b"));
    assert_ne!(tracks("a"), tracks("c"));
}
