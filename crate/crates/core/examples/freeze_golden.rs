//! Measures the golden claims on the reference ensembles and writes
//! `golden/ceilings.json` (10x the measured constants).
//!
//! cargo run --release -p dyadic-cz --example freeze_golden [-- <path>]

use std::time::Instant;

use dyadic_cz::dyadic::io::write_atomic;
use dyadic_cz::verify::{
    golden_claims, measured_constants, reference_ensembles, run_suite, GoldenFile, SuiteConfig,
};

fn main() -> dyadic_cz::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/golden/ceilings.json").into());
    let mut reports = Vec::new();
    for spec in reference_ensembles() {
        let start = Instant::now();
        let (d, n) = (spec.dim, spec.matdim);
        let r = run_suite(&SuiteConfig::new(spec, golden_claims()))?;
        eprintln!("d={d} n={n}: {:.1}s", start.elapsed().as_secs_f64());
        for b in &r {
            eprintln!("  {:<22} max {:.4e}  by K {:?}", b.claim, b.max, b.max_by_levels());
        }
        reports.extend(r);
    }
    let golden = GoldenFile::from_measured(measured_constants(&reports), 10.0);
    let text = serde_json::to_string_pretty(&golden).expect("serializable") + "\n";
    write_atomic(path.as_ref(), text.as_bytes())?;
    Ok(())
}
