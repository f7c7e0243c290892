//! With 1x1 matrices every pipeline stage must agree with a direct
//! commutative reimplementation.

mod support;

use support::oracle::{discrepancies, instances};

#[test]
fn pipeline_matches_scalar_oracle() {
    for inst in instances() {
        for (stage, gap) in discrepancies(&inst) {
            assert!(gap <= 1e-10, "instance {} ({:?}): {stage} off by {gap:e}", inst.index, inst.grid());
        }
    }
}
