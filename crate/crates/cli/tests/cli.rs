use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_CSV: &str = "x1,x2,sex,y
0.1,1.0,F,0
0.4,0.0,M,1
0.9,1.0,F,1
0.3,0.0,M,0
0.7,1.0,F,1
0.2,0.0,M,0
0.8,1.0,F,0
0.6,0.0,M,1
0.5,1.0,F,1
0.05,0.0,M,0
";

const TINY_SCHEMA: &str = "group=sex\noutcome=y\ntask=binary\npositive=1\n";

fn fairaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairaudit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny(dir: &Path) -> (String, String) {
    let (d, s) = (dir.join("tiny.csv"), dir.join("tiny.schema"));
    fs::write(&d, TINY_CSV).unwrap();
    fs::write(&s, TINY_SCHEMA).unwrap();
    (d.to_str().unwrap().into(), s.to_str().unwrap().into())
}

/// Discrete synthetic data written by the `synth` subcommand.
fn synth(dir: &Path, n: usize) -> (String, String) {
    let out = dir.join("synth");
    let o = fairaudit(&[
        "synth",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--set",
        &format!("synth_n={n}"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = |f: &str| out.join(f).to_str().unwrap().to_string();
    (p("synth.csv"), p("synth.schema"))
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn audit_on_tiny_dataset_reports_each_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = tiny(tmp.path());
    let out = tmp.path().join("out");
    let o = fairaudit(&[
        "audit",
        "--data",
        &d,
        "--schema",
        &s,
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "analyses=costs",
        "--set",
        "test_fraction=0.5",
        "--set",
        "learner=logistic",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(out.join("report.json"));
    let blocks = r["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0]["analysis"], "costs");
    let kinds: Vec<&str> = blocks[0]["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds.len(), 3);
    assert_eq!(r["dataset"]["rows"], 10);
}

#[test]
fn stdout_report_without_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = tiny(tmp.path());
    let o = fairaudit(&[
        "audit",
        "--data",
        &d,
        "--schema",
        &s,
        "--seed",
        "1",
        "--set",
        "analyses=costs",
        "--set",
        "test_fraction=0.5",
    ]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["command"], "audit");
}

#[test]
fn missing_schema_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, _) = tiny(tmp.path());
    let missing = tmp.path().join("nope.schema");
    let o = fairaudit(&[
        "audit",
        "--data",
        &d,
        "--schema",
        missing.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.schema"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = tiny(tmp.path());
    for args in [
        vec!["audit", "--data", d.as_str(), "--schema", s.as_str()],
        vec![
            "audit",
            "--data",
            d.as_str(),
            "--schema",
            s.as_str(),
            "--seed",
            "1",
            "--set",
            "bogus=1",
        ],
        vec![
            "audit",
            "--data",
            d.as_str(),
            "--schema",
            s.as_str(),
            "--seed",
            "1",
            "--level",
            "1.5",
        ],
        vec![
            "audit",
            "--data",
            d.as_str(),
            "--schema",
            s.as_str(),
            "--seed",
            "1",
            "--format",
            "csv",
        ],
        vec!["frobnicate"],
    ] {
        let o = fairaudit(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn malformed_data_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = tiny(tmp.path());
    fs::write(&d, "x1,x2,sex,y\n0.1,1.0,F,0\n0.2,oops,M,1\n").unwrap();
    let o = fairaudit(&["audit", "--data", &d, "--schema", &s, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_analysis_exits_4_and_keeps_other_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = synth(tmp.path(), 600);
    let out = tmp.path().join("out");
    // squared error is undefined for a binary outcome
    let o = fairaudit(&[
        "audit",
        "--data",
        &d,
        "--schema",
        &s,
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "analyses=costs,noise",
        "--kind",
        "mse",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(out.join("report.json"));
    let names: Vec<&str> = r["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["analysis"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["error", "noise"]);
}

#[test]
fn empty_analysis_set_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = tiny(tmp.path());
    let out = tmp.path().join("out");
    let o = fairaudit(&[
        "audit",
        "--data",
        &d,
        "--schema",
        &s,
        "--seed",
        "8",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "analyses=",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(out.join("report.json"));
    assert!(r["blocks"].as_array().unwrap().is_empty());
    assert_eq!(r["config"]["seed"], 8);
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = synth(tmp.path(), 600);
    let out = tmp.path().join("out");
    let run = || {
        let o = fairaudit(&[
            "audit",
            "--data",
            &d,
            "--schema",
            &s,
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
            "--reps",
            "100",
            "--set",
            "trees=5",
            "--set",
            "depth=4",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("report.json")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn parallel_and_sequential_reports_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = synth(tmp.path(), 600);
    let run = |parallel: &str| {
        let o = fairaudit(&[
            "test",
            "--data",
            &d,
            "--schema",
            &s,
            "--seed",
            "4",
            "--reps",
            "100",
            "--set",
            "trees=5",
            "--set",
            "depth=4",
            "--set",
            &format!("parallel={parallel}"),
        ]);
        assert!(o.status.success());
        let mut r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        r["config"]["parallel"] = serde_json::Value::Null;
        r
    };
    assert_eq!(run("true"), run("false"));
}

#[test]
fn curves_write_plot_table() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = synth(tmp.path(), 1500);
    let out = tmp.path().join("out");
    let o = fairaudit(&[
        "curves",
        "--data",
        &d,
        "--schema",
        &s,
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--trials",
        "3",
        "--grid",
        "50,100,200,400",
        "--kind",
        "zo",
        "--set",
        "learner=tree",
        "--set",
        "depth=3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plot = fs::read_to_string(out.join("curves_plot.csv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("n,group,cost_kind,mean,stderr,fitted_value"));
    // four sizes for each of two groups
    assert_eq!(lines.count(), 8);
}

#[test]
fn report_reemits_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = synth(tmp.path(), 600);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = fairaudit(&[
        "audit",
        "--data",
        &d,
        "--schema",
        &s,
        "--seed",
        "5",
        "--out",
        a.to_str().unwrap(),
        "--set",
        "analyses=costs,tests,noise",
        "--reps",
        "100",
        "--set",
        "learner=tree",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let input = a.join("report.json");
    let o = fairaudit(&[
        "report",
        "--input",
        input.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&input).unwrap(), fs::read(b.join("report.json")).unwrap());
}

#[test]
fn csv_format_writes_flat_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = synth(tmp.path(), 600);
    let out = tmp.path().join("out");
    let o = fairaudit(&[
        "audit",
        "--data",
        &d,
        "--schema",
        &s,
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
        "--reps",
        "100",
        "--set",
        "learner=tree",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["01_costs.csv", "02_tests.csv", "report.csv"]);
    for n in &names {
        let text = fs::read_to_string(out.join(n)).unwrap();
        assert!(text.starts_with("path,value\n"), "{n}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = tiny(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("# run\ndata={d}\nschema={s}\nseed=7\nanalyses=costs\ntest_fraction=0.5\nlevel=0.01\n"),
    )
    .unwrap();
    let o = fairaudit(&["audit", "--config", cfg.to_str().unwrap(), "--level", "0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(r["config"]["level"], 0.1);
}

#[test]
fn synth_writes_loadable_data() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, s) = synth(tmp.path(), 300);
    let loaded = fairaudit::data::load_with_schema_file(Path::new(&d), Path::new(&s)).unwrap();
    assert_eq!(loaded.len(), 300);
    assert_eq!(loaded.n_groups(), 2);
    let r = json(Path::new(&d).with_file_name("report.json"));
    assert_eq!(r["blocks"][0]["analysis"], "synth");
}
