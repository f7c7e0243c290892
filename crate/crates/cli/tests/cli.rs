use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dyadic_cz::dyadic::io::{load_field, save_field};
use dyadic_cz::dyadic::{field_lp_norm, Boundary, DyadicGrid, MatrixField};
use dyadic_cz::spectral::Mat;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyadic-cz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn scalar_field(dim: usize, levels: u32, values: &[f64]) -> MatrixField {
    let g = DyadicGrid::new(dim, levels, 1, Boundary::Torus).unwrap();
    let cells = values.iter().map(|&v| Mat::identity(1, 1).scale(v)).collect();
    MatrixField::from_cells(g, cells).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["gen", "--seed", "1", "--count", "2", "--dim", "1", "--levels", "3", "--matdim", "2", "--out", p(dir)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let fa = sorted_files(&a);
    assert_eq!(fa.len(), 2);
    for (x, y) in fa.iter().zip(sorted_files(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let f = load_field(&fa[0]).unwrap();
    assert_eq!((f.grid().dim(), f.grid().finest_level(), f.matdim()), (1, 3, 2));
}

#[test]
fn gen_with_zero_count_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("none");
    let o = run(&["gen", "--count", "0", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn gen_rejects_three_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--dim", "3", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid configuration"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&run(&["gen", "--bogus"])), 2);
    assert_eq!(code(&run(&["verify", "--out", "x", "--claims", "nonsense"])), 2);
}

#[test]
fn decompose_large_lambda_has_no_bad_part() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("f.dyf");
    let f = scalar_field(1, 3, &[1.0, 2.0, 0.5, 0.0, 3.0, 1.0, 1.0, 2.0]);
    save_field(&input, &f).unwrap();
    let out = tmp.path().join("dec");
    let o = run(&["decompose", "--input", p(&input), "--lambda", "10", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["bad_part_zero"], Value::Bool(true));
    assert_eq!(m["pass"], Value::Bool(true));
    assert_eq!(load_field(&out.join("g.dyf")).unwrap(), f);
}

#[test]
fn decompose_matches_worked_example() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("spike.dyf");
    save_field(&input, &scalar_field(1, 2, &[4.0, 0.0, 0.0, 0.0])).unwrap();
    let out = tmp.path().join("dec");
    let o = run(&["decompose", "--input", p(&input), "--lambda", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["m_lambda"], 0);
    assert_eq!(m["nontrivial_levels"], serde_json::json!([1]));
    let scalars = |name: &str| -> Vec<f64> {
        let f = load_field(&out.join(name)).unwrap();
        (0..4).map(|c| f.cell(c)[(0, 0)].re).collect()
    };
    assert_eq!(scalars("g.dyf"), vec![2.0, 2.0, 0.0, 0.0]);
    assert_eq!(scalars("b_01.dyf"), vec![2.0, -2.0, 0.0, 0.0]);
    assert_eq!(scalars("zeta.dyf"), vec![0.0; 4]);
    let bad_mass = m["residuals"]["cuculescu"]["bad_mass"].as_f64().unwrap();
    assert!((bad_mass - 0.5).abs() < 1e-15);
}

#[test]
fn decompose_rejects_non_psd_input() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("neg.dyf");
    save_field(&input, &scalar_field(1, 2, &[1.0, -1.0, 0.0, 0.0])).unwrap();
    let o = run(&["decompose", "--input", p(&input), "--lambda", "1", "--out", p(&tmp.path().join("d"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("positive semidefinite"));
}

#[test]
fn decompose_dump_reloads_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    assert_eq!(code(&run(&["gen", "--count", "1", "--levels", "4", "--matdim", "3", "--generator", "random-psd", "--out", p(&gen)])), 0);
    let input = sorted_files(&gen).remove(0);
    let f = load_field(&input).unwrap();
    let lambda = format!("{}", 0.5 * f.max_operator_norm());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["decompose", "--input", p(&input), "--lambda", &lambda, "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
    let m = manifest(&a);
    let mut recon = &f - &load_field(&a.join("g.dyf")).unwrap();
    let mut b_total = MatrixField::zeros(*f.grid());
    for n in m["nontrivial_levels"].as_array().unwrap() {
        let bn = load_field(&a.join(format!("b_{:02}.dyf", n.as_u64().unwrap()))).unwrap();
        b_total = &b_total + &bn;
    }
    recon.add_scaled(&b_total, -1.0);
    let residual = field_lp_norm(&recon, 1.0).unwrap() / field_lp_norm(&f, 1.0).unwrap();
    assert_eq!(
        residual,
        m["residuals"]["decomposition"]["reconstruction"].as_f64().unwrap()
    );
}

#[test]
fn transform_of_constant_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("c.dyf");
    save_field(&input, &scalar_field(1, 3, &[2.0; 8])).unwrap();
    for kind in ["t", "d"] {
        let out = tmp.path().join(kind);
        let o = run(&["transform", "--input", p(&input), "--kind", kind, "--signs", "random-signs", "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(load_field(&out.join("transformed.dyf")).unwrap().max_abs() < 1e-14);
        let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("transform.json")).unwrap()).unwrap();
        assert_eq!(summary["kind"], kind);
    }
}

const SMALL: [&str; 8] = ["--count", "2", "--levels", "3", "--matdim", "2", "--seed", "5"];

#[test]
fn verify_trivial_selection_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let mut args = vec!["verify", "--claims", "reconstruction", "--out", p(&out)];
    args.extend(SMALL);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert!(table.starts_with("claim,instance,levels,lambda,group,ratio,flagged,pass\n"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn verify_zero_ceiling_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let mut args = vec!["verify", "--claims", "weak11", "--tolerance", "ceiling=0", "--out", p(&out)];
    args.extend(SMALL);
    assert_eq!(code(&run(&args)), 1);
    let mut args = vec!["verify", "--claims", "weak11", "--tolerance", "ceiling.weak11=0", "--out", p(&out)];
    args.extend(SMALL);
    assert_eq!(code(&run(&args)), 1);
    let mut args = vec!["verify", "--claims", "weak11", "--tolerance", "ceiling.nope=0", "--out", p(&out)];
    args.extend(SMALL);
    assert_eq!(code(&run(&args)), 2);
}

#[test]
fn verify_report_header_and_report_command() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let mut args = vec!["verify", "--claims", "reconstruction,zeta,weak11", "--out", p(&out)];
    args.extend(SMALL);
    assert_eq!(code(&run(&args)), 0);
    let text = fs::read_to_string(out.join("report.jsonl")).unwrap();
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["kind"], "header");
    assert_eq!(header["config"]["spec"]["seed"], 5);
    assert_eq!(header["config"]["claims"], serde_json::json!(["reconstruction", "zeta", "weak11"]));
    assert_eq!(header["config_hash"].as_str().unwrap().len(), 64);
    let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["kind"], "result");

    let summary = tmp.path().join("s");
    let o = run(&["report", "--input", p(&out.join("report.jsonl")), "--out", p(&summary)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("weak11"));
    assert_eq!(
        fs::read(summary.join("table.csv")).unwrap(),
        fs::read(out.join("table.csv")).unwrap()
    );
    assert!(fs::read_to_string(summary.join("summary.csv")).unwrap().starts_with("claim,levels,max"));
}

#[test]
fn report_io_and_format_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["report", "--input", p(&tmp.path().join("missing.jsonl"))])), 3);
    let junk = tmp.path().join("junk.jsonl");
    fs::write(&junk, "not json\n").unwrap();
    assert_eq!(code(&run(&["report", "--input", p(&junk)])), 3);
}
