use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn perfit(args: &[&str]) -> Output {
    perfit_env(args, &[])
}

fn perfit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_perfit"));
    cmd.args(args).env_remove("PERFIT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const RAW: &str = "respondent_id,source,q1,q2,q3\n\
s1,human,A,B,C\n\
s2,human,A,,D\n\
g1,agent:gpt,B,B,C\n";

#[test]
fn score_writes_the_scored_matrix() {
    let tmp = TempDir::new().unwrap();
    let raw = write(tmp.path(), "raw.csv", RAW);
    let key = write(tmp.path(), "key.csv", "item_id,correct_option\nq1,A\nq2,B\nq3,C\n");
    let out = tmp.path().join("scored.csv");
    let res = perfit(&["score", "--raw", s(&raw), "--key", s(&key), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "respondent_id,source,q1,q2,q3\ns1,human,1,1,1\ns2,human,1,0,0\ng1,agent:gpt,0,1,1\n"
    );
}

#[test]
fn score_rejects_an_incomplete_key() {
    let tmp = TempDir::new().unwrap();
    let raw = write(tmp.path(), "raw.csv", RAW);
    let key = write(tmp.path(), "key.csv", "item_id,correct_option\nq1,A\nq3,C\n");
    let out = tmp.path().join("scored.csv");
    let res = perfit(&["score", "--raw", s(&raw), "--key", s(&key), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("q2"), "{}", stderr(&res));
    assert!(!out.exists());
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let tmp = TempDir::new().unwrap();
    let raw = write(tmp.path(), "raw.csv", RAW);
    let key = write(tmp.path(), "key.csv", "item_id,correct_option\nq1,A\nq2,B\nq3,C\n");
    // a regular file cannot act as a directory
    let blocker = write(tmp.path(), "blocker", "");
    let out = blocker.join("scored.csv");
    let res = perfit(&["score", "--raw", s(&raw), "--key", s(&key), "--out", s(&out)]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));

    let missing = tmp.path().join("absent.csv");
    let res = perfit(&["score", "--raw", s(&missing), "--key", s(&key), "--out", s(&tmp.path().join("x.csv"))]);
    assert_eq!(code(&res), 3);
}

const SCORED: &str = "respondent_id,source,q1,q2,q3,q4\n\
p1,human,1,1,0,1\n\
p2,human,1,0,1,0\n\
p3,human,1,0,0,0\n\
p4,human,1,1,1,0\n\
p5,agent:gpt,1,0,0,1\n\
p6,agent:gpt,1,1,0,1\n";

#[test]
fn pfs_reports_every_respondent_and_drops_constant_items() {
    let tmp = TempDir::new().unwrap();
    let input = write(tmp.path(), "scored.csv", SCORED);
    let out = tmp.path().join("pfs.csv");
    let res = perfit(&["pfs", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(stderr(&res).contains("q1"), "{}", stderr(&res));

    let rows = csv_rows(&out);
    assert_eq!(rows[0].join(","), "respondent_id,source,r,G,G_star,U3,ZU3,valid");
    assert_eq!(rows.len(), 7);
    // p3 answers only the dropped item, so it scores 0 on the rest
    let p3 = rows.iter().find(|r| r[0] == "p3").unwrap();
    assert_eq!(p3[2], "0");
    assert_eq!(p3[3], "0");
    assert!(p3[4].is_empty() && p3[5].is_empty() && p3[6].is_empty());
    assert_eq!(p3[7], "false");

    let quiet = perfit(&["--quiet", "pfs", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&quiet), 0);
    assert!(stderr(&quiet).is_empty());
}

#[test]
fn flag_lists_respondents_above_the_threshold() {
    let tmp = TempDir::new().unwrap();
    let input = write(tmp.path(), "scored.csv", SCORED);
    let res = perfit(&["--quiet", "flag", "--input", s(&input), "--measure", "u3", "--threshold", "0.5"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("respondent_id,source,U3"));
    for line in lines {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v > 0.5);
    }
    let bad = perfit(&["flag", "--input", s(&input), "--measure", "lz", "--threshold", "1"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn simulate_defaults_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    assert_eq!(code(&perfit(&["simulate", "--out", s(&a), "--seed", "7"])), 0);
    assert_eq!(code(&perfit(&["simulate", "--out", s(&b), "--seed", "7"])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let rows = csv_rows(&a);
    assert_eq!(rows.len(), 401);
    assert_eq!(rows[0].len(), 22);
    assert_eq!(rows.iter().filter(|r| r[1] == "agent:sim").count(), 20);

    let res = perfit(&["simulate", "--out", s(&tmp.path().join("c.csv"))]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("seed"), "{}", stderr(&res));
}

fn simulate(dir: &Path, name: &str, cfg: &str, seed: u64) -> PathBuf {
    let c = write(dir, &format!("{name}.json"), cfg);
    let out = dir.join(format!("{name}.csv"));
    let res = perfit(&["--quiet", "simulate", "--config", s(&c), "--out", s(&out), "--seed", &seed.to_string()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    out
}

#[test]
fn compare_writes_one_rank_sum_test_per_measure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "compare.json",
        r#"{"humans": {"n_human": 380, "n_aberrant": 0},
            "agents": [{"n_human": 0, "n_aberrant": 20}],
            "levels": [0.05], "seeds": [3]}"#,
    );
    let out = tmp.path().join("out");
    let res = perfit(&["--quiet", "compare", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let doc = read_json(&out.join("compare_all_0.05.json"));
    assert_eq!(doc["command"], "compare");
    let groups: Vec<u64> = doc["report"]["groups"].as_array().unwrap().iter().map(|g| g["n"].as_u64().unwrap()).collect();
    assert_eq!(groups, [380, 20]);
    let tests = doc["report"]["tests"].as_array().unwrap();
    assert_eq!(tests.len(), 4);
    for t in tests {
        assert_eq!(t["test"], "wilcoxon_rank_sum");
        assert_eq!(t["alternative"], "less");
        // sizes count records with a defined statistic
        let sizes: Vec<u64> = t["group_sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert!(sizes[0] > 350 && sizes[0] <= 380 && sizes[1] <= 20, "{sizes:?}");
        assert_eq!(t["group_labels"], serde_json::json!(["human", "agent"]));
    }
    for m in ["g", "gstar", "u3", "zu3"] {
        assert!(out.join(format!("compare_{m}_0.05.json")).is_file());
        assert!(out.join(format!("compare_{m}_0.05.csv")).is_file());
    }

    let sub = tmp.path().join("sub");
    let res = perfit(&["--quiet", "compare", "--config", s(&cfg), "--out", s(&sub), "--measures", "u3,zu3", "--alternative", "greater"]);
    assert_eq!(code(&res), 0);
    let doc = read_json(&sub.join("compare_all_0.05.json"));
    let tests = doc["report"]["tests"].as_array().unwrap();
    assert_eq!(tests.len(), 2);
    assert!(tests.iter().all(|t| t["alternative"] == "greater"));
}

#[test]
fn multigroup_runs_kruskal_wallis_over_agent_files() {
    let tmp = TempDir::new().unwrap();
    let agent_cfg = r#"{"n_human": 0, "n_aberrant": 15, "bank_seed": 4}"#;
    let a = simulate(tmp.path(), "alpha", agent_cfg, 1);
    let b = simulate(tmp.path(), "beta", agent_cfg, 2);
    let cfg = write(
        tmp.path(),
        "multi.json",
        &format!(
            r#"{{"humans": {{"n_human": 300, "n_aberrant": 0, "bank_seed": 4}},
                "agents": [{:?}, {:?}], "seeds": [5]}}"#,
            a.file_name().unwrap().to_str().unwrap(),
            b.file_name().unwrap().to_str().unwrap()
        ),
    );
    let out = tmp.path().join("out");
    let res = perfit(&["--quiet", "multigroup", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let file = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("multigroup_all_"))
        .unwrap();
    let doc = read_json(&file);
    let kw: Vec<&Value> = doc["report"]["tests"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|t| t["test"] == "kruskal_wallis")
        .collect();
    assert_eq!(kw.len(), 4);
    for t in kw {
        assert_eq!(t["group_labels"], serde_json::json!(["alpha", "beta"]));
        assert_eq!(t["group_sizes"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn sensitivity_covers_every_level() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "sens.json",
        r#"{"humans": {"n_human": 400, "n_aberrant": 0},
            "agents": [{"n_human": 0, "n_aberrant": 20}],
            "levels": [0.05, 0.10, 0.25], "seeds": [1, 2]}"#,
    );
    let out = tmp.path().join("out");
    let res = perfit_env(&["--quiet", "sensitivity", "--config", s(&cfg), "--out", s(&out)], &[("PERFIT_THREADS", "2")]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let doc = read_json(&out.join("sensitivity_summary.json"));
    let levels = doc["report"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    let n_human: Vec<u64> = levels.iter().map(|l| l["n_human"].as_u64().unwrap()).collect();
    assert_eq!(n_human, [380, 180, 60]);
    for token in ["0.05", "0.1", "0.25"] {
        assert!(out.join(format!("sensitivity_u3_{token}.json")).is_file());
        assert!(out.join(format!("sensitivity_u3_{token}.csv")).is_file());
    }
}

#[test]
fn thread_count_is_validated() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("a.csv");
    let res = perfit_env(&["simulate", "--out", s(&out), "--seed", "1"], &[("PERFIT_THREADS", "many")]);
    assert_eq!(code(&res), 2);
    let one = tmp.path().join("one.csv");
    let res = perfit_env(&["simulate", "--out", s(&one), "--seed", "1"], &[("PERFIT_THREADS", "1")]);
    assert_eq!(code(&res), 0);
    let four = tmp.path().join("four.csv");
    let res = perfit_env(&["simulate", "--out", s(&four), "--seed", "1"], &[("PERFIT_THREADS", "4")]);
    assert_eq!(code(&res), 0);
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&four).unwrap());
}

#[test]
fn empty_group_after_filtering_exits_untestable() {
    let tmp = TempDir::new().unwrap();
    // every agent answers every item, so no agent has a defined statistic
    let mut text = String::from("respondent_id,source");
    for j in 1..=20 {
        text.push_str(&format!(",item{j:02}"));
    }
    text.push('\n');
    for k in 1..=5 {
        text.push_str(&format!("x{k},agent:perfect"));
        text.push_str(&",1".repeat(20));
        text.push('\n');
    }
    write(tmp.path(), "perfect.csv", &text);
    let cfg = write(
        tmp.path(),
        "cfg.json",
        r#"{"humans": {"n_human": 200, "n_aberrant": 0}, "agents": ["perfect.csv"], "seeds": [2]}"#,
    );
    let out = tmp.path().join("out");
    let res = perfit(&["compare", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&res), 4, "{}", stderr(&res));
    let file = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("compare_all_"))
        .unwrap();
    let doc = read_json(&file);
    assert!(!doc["report"]["untestable"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let bad_level = write(
        tmp.path(),
        "bad.json",
        r#"{"humans": {"n_human": 100, "n_aberrant": 0}, "agents": [{"n_human": 0}], "levels": [1.5], "seeds": [1]}"#,
    );
    assert_eq!(code(&perfit(&["compare", "--config", s(&bad_level), "--out", s(&out)])), 2);
    let no_seed = write(
        tmp.path(),
        "noseed.json",
        r#"{"humans": {"n_human": 100, "n_aberrant": 0}, "agents": [{"n_human": 0}]}"#,
    );
    assert_eq!(code(&perfit(&["compare", "--config", s(&no_seed), "--out", s(&out)])), 2);
    let missing_file = write(
        tmp.path(),
        "missing.json",
        r#"{"humans": "nowhere.csv", "agents": [{"n_human": 0}], "seeds": [1]}"#,
    );
    assert_eq!(code(&perfit(&["compare", "--config", s(&missing_file), "--out", s(&out)])), 3);
    assert_eq!(code(&perfit(&["compare", "--out", s(&out)])), 2);
    assert_eq!(code(&perfit(&["--help"])), 0);
}
