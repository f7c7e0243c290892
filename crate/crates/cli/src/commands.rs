use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use dyadic_cz::czd::{
    cancellation_check, cuculescu_residuals, cz_decompose, decomposition_residuals, MLambda,
};
use dyadic_cz::dyadic::io::{encode_field, load_field, save_field, write_atomic};
use dyadic_cz::dyadic::{field_lp_norm, MatrixField};
use dyadic_cz::transforms::{differential_transform, transform_t, LevelRange};
use dyadic_cz::verify::{lp_ratio, run_suite, weak11_ratio, LambdaPolicy, SignPolicy};
use dyadic_cz::{Error, Result};

use crate::config::{
    DecomposeArgs, GenArgs, ReportArgs, RunConfig, TransformArgs, TransformKind, VerifyArgs,
};
use crate::report;

/// Outcome of a command that completed without an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ClaimFailure,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::ClaimFailure
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn instance_file_name(index: usize) -> String {
    format!("instance_{index:05}.dyf")
}

pub fn gen(args: &GenArgs) -> Result<Outcome> {
    // Lambda plays no part in the stored field.
    let spec = args.ensemble.spec(LambdaPolicy::RotatingSweep)?;
    if spec.is_empty() {
        return Ok(Outcome::Pass);
    }
    fs::create_dir_all(&args.out)?;
    for i in 0..spec.len() {
        let inst = spec.instance(i)?;
        save_field(&args.out.join(instance_file_name(i)), &inst.f)?;
    }
    Ok(Outcome::Pass)
}

#[derive(Debug, Serialize)]
struct Bound {
    name: &'static str,
    value: f64,
    bound: f64,
    /// False when the instance lies outside the bound's hypotheses.
    applies: bool,
    pass: bool,
}

impl Bound {
    fn new(name: &'static str, value: f64, bound: f64, rel: f64, applies: bool) -> Self {
        Self {
            name,
            value,
            bound,
            applies,
            pass: value <= bound * (1.0 + rel),
        }
    }
}

pub fn decompose(args: &DecomposeArgs) -> Result<Outcome> {
    let bytes = fs::read(&args.input)?;
    let f = dyadic_cz::dyadic::io::decode_field(&bytes)?;
    f.check_psd(dyadic_cz::czd::PSD_TOL)?;
    let dec = cz_decompose(&f, args.lambda)?;
    let grid = *f.grid();
    let d = grid.dim() as i32;
    let lambda = dec.lambda;
    let f1 = field_lp_norm(&f, 1.0)?;

    fs::create_dir_all(&args.out)?;
    let mut files = vec![];
    let mut dump = |name: String, field: &MatrixField| -> Result<()> {
        save_field(&args.out.join(&name), field)?;
        files.push(name);
        Ok(())
    };
    dump("g.dyf".into(), &dec.g)?;
    dump("zeta.dyf".into(), &dec.zeta)?;
    dump("q.dyf".into(), &dec.family.terminal)?;
    let nontrivial: Vec<usize> = (0..dec.levels()).filter(|&n| !dec.is_trivial(n)).collect();
    for &n in &nontrivial {
        dump(format!("b_{n:02}.dyf"), &dec.b(n))?;
        dump(format!("p_{n:02}.dyf"), &dec.family.p[n])?;
    }

    let cuc = cuculescu_residuals(&f, &dec.family)?;
    let res = decomposition_residuals(&dec)?;
    let canc = cancellation_check(&dec)?;
    let root_ok = dec.family.root != MLambda::RootExceeds;
    let bounds = vec![
        Bound::new("bad_mass", cuc.bad_mass, f1 / lambda, 0.0, true),
        Bound::new("zeta_mass", res.zeta_mass, 5f64.powi(d) * f1 / lambda, 0.0, true),
        Bound::new(
            "good_linf",
            dec.g.max_operator_norm(),
            2f64.powi(d) * lambda,
            1e-9,
            root_ok,
        ),
        Bound::new("good_l1", field_lp_norm(&dec.g, 1.0)?, f1, 1e-9, true),
    ];
    let residual_checks = [
        ("cuculescu", cuc.worst(), 1e-8),
        ("reconstruction", res.reconstruction, 1e-9),
        ("split", res.split.max(res.termwise), 1e-9),
        ("cancellation", canc.worst(), 1e-8),
        ("good_part_psd", res.good_psd_violation, 1e-9),
    ];
    let pass = bounds.iter().all(|b| b.pass || !b.applies)
        && residual_checks.iter().all(|(_, v, tol)| *v < *tol);
    let m_lambda = match dec.family.root {
        MLambda::Level(m) => json!(m),
        MLambda::RootExceeds => json!("root-exceeds"),
    };
    let manifest = json!({
        "input": args.input,
        "input_sha256": hex::encode(Sha256::digest(&bytes)),
        "lambda": lambda,
        "grid": grid,
        "m_lambda": m_lambda,
        "f_l1": f1,
        "f_linf": f.max_operator_norm(),
        "nontrivial_levels": nontrivial,
        "bad_part_zero": nontrivial.is_empty(),
        "files": files,
        "residuals": {
            "cuculescu": cuc,
            "decomposition": res,
            "cancellation": canc,
        },
        "residual_checks": residual_checks
            .iter()
            .map(|(name, v, tol)| json!({"name": name, "value": v, "tolerance": tol, "pass": v < tol}))
            .collect::<Vec<_>>(),
        "bounds": bounds,
        "pass": pass,
    });
    write_json(&args.out.join("manifest.json"), &manifest)?;
    Ok(Outcome::from_pass(pass))
}

pub fn transform(args: &TransformArgs) -> Result<Outcome> {
    let f = load_field(&args.input)?;
    let grid = *f.grid();
    let policy: SignPolicy = args.signs.parse()?;
    let (nu, out) = match args.kind {
        TransformKind::T => {
            let levels = LevelRange::full(&grid);
            let nu = policy.seeded(levels, args.seed);
            let out = transform_t(&f, &nu, levels)?;
            (nu, out)
        }
        TransformKind::D => {
            if grid.finest_level() == 0 {
                return Err(Error::InvalidConfig("D needs at least one level".into()));
            }
            let levels = LevelRange::differential(&grid);
            let nu = policy.seeded(levels, args.seed);
            let out = differential_transform(&f, &nu, levels)?;
            (nu, out)
        }
    };
    fs::create_dir_all(&args.out)?;
    save_field(&args.out.join("transformed.dyf"), &out)?;
    let lp: serde_json::Map<String, serde_json::Value> = [1.5, 2.0, 3.0, 4.0]
        .iter()
        .map(|&p| Ok((format!("{p}"), json!(lp_ratio(&out, &f, p)?))))
        .collect::<Result<_>>()?;
    let summary = json!({
        "input": args.input,
        "kind": args.kind,
        "signs": nu.values(),
        "weak11_ratio": weak11_ratio(&out, &f)?,
        "lp_ratio": lp,
        "output_sha256": hex::encode(Sha256::digest(encode_field(&out))),
    });
    write_json(&args.out.join("transform.json"), &summary)?;
    Ok(Outcome::Pass)
}

pub fn verify(args: &VerifyArgs) -> Result<Outcome> {
    let config = RunConfig::from_verify(args)?;
    let reports = run_suite(&config.suite()?)?;
    let text = report::render_jsonl(&config, &reports);
    let lines = report::parse_jsonl(&text)?;
    fs::create_dir_all(&config.out)?;
    write_atomic(&config.out.join("report.jsonl"), text.as_bytes())?;
    write_atomic(&config.out.join("table.csv"), report::render_table(&lines).as_bytes())?;
    print!("{}", report::render_text(&lines));
    Ok(Outcome::from_pass(reports.iter().all(|r| r.pass)))
}

pub fn report(args: &ReportArgs) -> Result<Outcome> {
    let text = fs::read_to_string(&args.input)?;
    let lines = report::parse_jsonl(&text)?;
    match lines.first() {
        Some(report::Line::Header { format, .. }) if format == report::FORMAT => {}
        _ => return Err(Error::Format("report does not start with a header".into())),
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        write_atomic(&out.join("table.csv"), report::render_table(&lines).as_bytes())?;
        write_atomic(&out.join("summary.csv"), report::render_summary_table(&lines).as_bytes())?;
    }
    print!("{}", report::render_text(&lines));
    Ok(Outcome::from_pass(report::overall_pass(&lines)?))
}

