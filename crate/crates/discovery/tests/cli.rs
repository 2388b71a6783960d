//! End-to-end runs of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_discovery"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("discovery-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn small_abm(out: &Path) -> Vec<String> {
    [
        "replications=2",
        "timesteps=200",
        "burnIn=20",
        "sigma=0.5",
        "trueModel=x1 + x2",
        "population=all-equal, mave-dominant",
        "modelCompare=AIC",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("output={}", out.display())])
    .flat_map(|s| ["--set".to_string(), s])
    .collect()
}

#[test]
fn enumerate_prints_the_space() {
    let out = run(bin().args(["enumerate", "--k", "3"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,model,terms,max_order");
    assert_eq!(lines.len(), 15);
    assert_eq!(lines[1], "0,x1,1,1");
    assert!(lines[14].starts_with("13,x1 + x2 + x3 + x1x2 + x1x3 + x2x3 + x1x2x3,"));
}

#[test]
fn abm_writes_results_and_resumes() {
    let dir = scratch("abm");
    let args = small_abm(&dir);
    let first = run(bin().arg("abm").args(&args));
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let csv = std::fs::read(dir.join("results.csv")).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.starts_with("true_model,sigma,population,statistic,mode,replication,seed,"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("abm.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "abm");
    assert_eq!(meta["seed"], 20191016);
    assert_eq!(meta["config"]["timesteps"], "200");
    assert!(meta["quantile_rule"].as_str().unwrap().contains("interpolation"));

    // a rerun computes nothing and leaves the bytes alone
    let again = run(bin().arg("abm").args(&args));
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("0 computed"));
    assert_eq!(std::fs::read(dir.join("results.csv")).unwrap(), csv);

    // more replications extend the file
    let mut more = args.clone();
    more.extend(["--set".into(), "replications=3".into()]);
    let extended = run(bin().arg("abm").args(&more));
    assert!(extended.status.success());
    let text = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);

    // a changed design refuses to mix with the old rows
    let mut other = args.clone();
    other.extend(["--set".into(), "seed=5".into()]);
    let refused = run(bin().arg("abm").args(&other));
    assert_eq!(refused.status.code(), Some(1));

    let summary = run(bin().args(["summarize", "--by", "population", "--metrics", "first_passage,time_at_true"]).arg(dir.join("results.csv")));
    assert!(summary.status.success());
    let text = String::from_utf8(summary.stdout).unwrap();
    assert!(text.starts_with("group,metric,count,missing,median,q1,q3,iqr,mean,censored"), "{text}");
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    assert!(run(bin().args(["abm", "--threads", "1"]).args(small_abm(&a))).status.success());
    assert!(run(bin().args(["abm", "--threads", "3"]).args(small_abm(&b))).status.success());
    assert_eq!(
        std::fs::read(a.join("results.csv")).unwrap(),
        std::fs::read(b.join("results.csv")).unwrap()
    );
    std::fs::remove_dir_all(a).unwrap();
    std::fs::remove_dir_all(b).unwrap();
}

#[test]
fn config_file_and_overrides() {
    let dir = scratch("cfg");
    let file = dir.join("run.cfg");
    std::fs::write(
        &file,
        format!(
            "# tiny sweep\nreplications = 1\ntimesteps = 100\nburnIn = 10\nsigma = 0.2\n\
             trueModel = x1\nnRey = 0\nnTess = 1\nnMave = 1\nnBo = 1\nmodelCompare = BIC\noutput = {}\n",
            dir.join("out").display()
        ),
    )
    .unwrap();
    let out = run(bin().args(["abm", "--config"]).arg(&file).args(["--set", "mode=soft"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("x1,0.2,0:1:1:1,SC,Soft,0,"), "{row}");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn chain_report_for_two_factors() {
    let dir = scratch("chain");
    let out = run(bin().args([
        "chain",
        "--set",
        "k=2",
        "--set",
        "V=1000",
        "--set",
        "sigma=0.2",
        "--set",
        "population=mave-dominant",
        "--set",
        &format!("output={}", dir.display()),
        "--set",
        &format!("cacheDir={}", dir.join("cache").display()),
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("chain_summary.csv")).unwrap();
    // 3 true models x 1 population x 2 statistics
    assert_eq!(summary.lines().count(), 1 + 6);
    assert!(dir.join("chain.json").exists());
    let cached = std::fs::read_dir(dir.join("cache")).unwrap().count();
    assert_eq!(cached, 6);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn exit_codes() {
    // validation: unknown key, bad value, replicator in chain analysis
    assert_eq!(run(bin().args(["abm", "--set", "colour=blue"])).status.code(), Some(1));
    assert_eq!(run(bin().args(["abm", "--set", "sigma=1.5"])).status.code(), Some(1));
    assert_eq!(run(bin().args(["chain", "--set", "k=2", "--set", "population=rey-dominant"])).status.code(), Some(1));
    assert_eq!(run(bin().args(["enumerate", "--k", "9"])).status.code(), Some(1));
    assert_eq!(run(bin().args(["summarize", "/nonexistent/results.csv"])).status.code(), Some(1));
    assert_eq!(run(bin().arg("bogus")).status.code(), Some(1));

    // runtime: output path is an existing file
    let dir = scratch("exit");
    let blocker = dir.join("file");
    std::fs::write(&blocker, "x").unwrap();
    let mut args = small_abm(&blocker);
    args.extend(["--set".into(), "replications=1".into()]);
    assert_eq!(run(bin().arg("abm").args(&args)).status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}
