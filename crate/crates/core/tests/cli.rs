use std::path::Path;
use std::process::{Command, Output};

fn mixclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixclust"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_platform_is_a_usage_error() {
    let o = mixclust(&["hcluster"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("ERROR[1]:"));
    assert!(err.contains("Usage"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(mixclust(&["cluster-everything"]).status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let o = mixclust(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("hcluster"));
}

#[test]
fn oracle_refuses_ten_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"n_per_cluster":[5,5],"platforms":[{"id":"m","g":40,"mu_low":[-2,-1],"mu_high":[1,2],"var_low":[0.3,0.3],"var_high":[0.3,0.3]}],"w_overlap":0.5}"#,
    )
    .unwrap();
    let sim = dir.path().join("sim");
    assert!(mixclust(&["simulate", "--spec", &p(&spec), "--out", &p(&sim)])
        .status
        .success());
    let o = mixclust(&[
        "oracle",
        "--platform",
        &format!("m={}", p(&sim.join("m.csv"))),
        "--out",
        &p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n = 10"));
}

#[test]
fn na_cell_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.csv");
    std::fs::write(&f, "probe,a,b\np1,1,2\np2,NA,3\n").unwrap();
    let o = mixclust(&[
        "fit-subjects",
        "--platform",
        &format!("x={}", p(&f)),
        "--out",
        &p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("ERROR[2]:") && err.contains("row 3, column 2"), "{err}");
}

#[test]
fn constant_profile_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.csv");
    let mut text = String::from("probe,a,b\n");
    for j in 0..20 {
        text.push_str(&format!("p{j},1.0,{}\n", (j as f64 * 0.37).sin()));
    }
    std::fs::write(&f, text).unwrap();
    let o = mixclust(&[
        "fit-subjects",
        "--platform",
        &format!("x={}", p(&f)),
        "--out",
        &p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("ERROR[3]:"));
}

#[test]
fn filter_for_unknown_platform_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(mixclust(&["simulate", "--out", &p(&sim)]).status.success());
    let o = mixclust(&[
        "fit-subjects",
        "--platform",
        &format!("meth={}", p(&sim.join("meth.csv"))),
        "--sd-threshold",
        "expr=1",
        "--out",
        &p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn hcluster_recovers_simulated_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(
        mixclust(&["simulate", "--seed", "5", "--format", "tsv", "--out", &p(&sim)])
            .status
            .success()
    );
    let out = dir.path().join("h");
    let o = mixclust(&[
        "hcluster",
        "--platform",
        &format!("meth={}", p(&sim.join("meth.tsv"))),
        "--top",
        "meth=400",
        "--truth",
        &p(&sim.join("partition.json")),
        "--out",
        &p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let part: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("partition.json")).unwrap()).unwrap();
    assert_eq!(part["k"], 3);
    assert_eq!(part["ari"], 1.0);
    for name in [
        "dendrogram.newick",
        "merges.csv",
        "loglik_trace.csv",
        "gamma_2_meth.csv",
        "heatmap_order_meth.csv",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let trace = std::fs::read_to_string(out.join("loglik_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 16);
    let newick = std::fs::read_to_string(out.join("dendrogram.newick")).unwrap();
    assert!(newick.trim_end().ends_with(';'));
    let gamma = std::fs::read_to_string(out.join("gamma_0_meth.csv")).unwrap();
    assert_eq!(gamma.lines().count(), 401);
}
