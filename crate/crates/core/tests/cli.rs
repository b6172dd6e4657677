mod common;

use common::write_study;
use std::path::Path;
use std::process::{Command, Output};

fn robkat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robkat"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn test_command_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_study(dir.path(), 60, 21, false);
    let out = dir.path().join("out.tsv");
    let o = robkat(&[
        "test", "--pheno", s(&f.pheno), "--covar", s(&f.covar), "--geno", s(&f.geno), "--sets",
        s(&f.sets), "--kernel", "linear,quadratic,ibs", "--loss", "huber", "--alpha", "0.05",
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 37);
    assert!(text.lines().nth(1).unwrap().starts_with("G01\tlinear\thuber\t60\t3\t"));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_study(dir.path(), 50, 22, false);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "pheno = {:?}\ncovar = {:?}\ngeno = {:?}\nsets = {:?}\nloss = \"ls\"\nkernel = [\"ibs\"]\n",
            s(&f.pheno),
            s(&f.covar),
            s(&f.geno),
            s(&f.sets)
        ),
    )
    .unwrap();
    let out = dir.path().join("out.tsv");
    let o = robkat(&["test", "--config", s(&cfg), "--loss", "bisquare", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(1).all(|l| l.contains("\tibs\tbisquare\t")));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_study(dir.path(), 40, 23, false);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = robkat(&[
            "test", "--pheno", s(&f.pheno), "--geno", s(&f.geno), "--sets", s(&f.sets), "--method",
            "mc", "--mc-reps", "300", "--seed", "5", "--out", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.tsv"), run("b.tsv"));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_study(dir.path(), 30, 24, false);
    let o = robkat(&["test", "--pheno", s(&f.pheno), "--geno", s(&f.geno)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--sets"));
    let o = robkat(&[
        "test", "--pheno", s(&f.pheno), "--geno", s(&f.geno), "--sets", s(&f.sets), "--loss", "l2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = robkat(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two_and_still_write() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_study(dir.path(), 30, 25, false);
    // a constant phenotype leaves nothing to fit
    let text: String = std::fs::read_to_string(&f.pheno)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                l.to_string()
            } else {
                format!("{}\t1", l.split('\t').next().unwrap())
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&f.pheno, text).unwrap();
    let out = dir.path().join("out.tsv");
    let o = robkat(&[
        "test", "--pheno", s(&f.pheno), "--geno", s(&f.geno), "--sets", s(&f.sets), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let report = std::fs::read_to_string(&out).unwrap();
    assert_eq!(report.lines().count(), 13);
    assert!(report.lines().nth(1).unwrap().contains("null fit failed"));
}

#[test]
fn sim_command_writes_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        "n = 40\nerror_dist = \"t3\"\nc_grid = [0.0, 0.5]\nlosses = [\"huber\", \"ls\"]\nreplications = 20\nalpha_levels = [0.05]\nseed = 3\n",
    )
    .unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    for out in [&a, &b] {
        let o = robkat(&["sim", "--config", s(&cfg), "--out", s(out), "--threads", "1"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text.lines().next().unwrap(), "loss\tkernel\terror_dist\th_form\tc\talpha\trate\tse\tn_converged");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
