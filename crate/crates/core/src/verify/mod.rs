//! The measurement harness: claims evaluated over deterministic ensembles.

mod claims;
mod ensemble;
mod report;

use std::cell::OnceCell;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use claims::*;
pub use ensemble::{
    instance_seed, lambda_sweep, EnsembleSpec, Generator, Instance, LambdaPolicy, SignPolicy,
};
pub use report::{nullable_f64, spread, BoundReport, Ceilings, GoldenFile, InstanceRecord};

use crate::czd::{
    cancellation_check, coarse_average_terms, cuculescu_residuals, cz_decompose,
    decomposition_residuals, CZDecomposition, CancellationReport, CuculescuResiduals,
    DecompositionResiduals, MLambda,
};
use crate::dyadic::{Boundary, MatrixField};
use crate::error::{Error, Result};
use crate::transforms::{
    differential_transform, three_way_split, transform_t, transform_t_norm, LevelRange,
    PowerIteration, SignSequence,
};

/// Exponents used by the `L_p` claims.
pub const LP_EXPONENTS: [f64; 4] = [1.5, 2.0, 3.0, 4.0];

/// Cubes sampled per level for the kernel-regularity claim.
const CUBES_PER_LEVEL: usize = 3;

macro_rules! claims {
    ($($variant:ident => $id:literal, $ceiling:expr;)*) => {
        /// A measurable statement. Claims with a fixed ceiling are exact
        /// identities or explicit-constant bounds; the others compare against
        /// frozen golden ceilings.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum Claim {
            $($variant,)*
        }

        impl Claim {
            pub const ALL: &'static [Claim] = &[$(Claim::$variant,)*];

            pub fn id(self) -> &'static str {
                match self {
                    $(Claim::$variant => $id,)*
                }
            }

            pub fn fixed_ceiling(self) -> Option<f64> {
                match self {
                    $(Claim::$variant => $ceiling,)*
                }
            }
        }
    };
}

claims! {
    Cuculescu => "cuculescu", Some(1e-8);
    CuculescuMaximal => "cuculescu_maximal", Some(1.0);
    CuculescuStopped => "cuculescu_stopped", Some(1.0 + 1e-9);
    Reconstruction => "reconstruction", Some(1e-9);
    GoodPartL1 => "good_part_l1", Some(1.0 + 1e-9);
    GoodPartLinf => "good_part_linf", Some(1.0 + 1e-9);
    GoodPartPsd => "good_part_psd", Some(1e-9);
    Zeta => "zeta", Some(1.0);
    Split => "split", Some(1e-9);
    Cancellation => "cancellation", Some(1e-8);
    CancellationAverages => "cancellation_averages", Some(1e-8);
    Weak11 => "weak11", None;
    Lp => "lp", None;
    Lp2PowerIteration => "lp2_power_iteration", Some(1e-6);
    Bmo => "bmo", None;
    KernelRegularity => "kernel_regularity", None;
    Opnorm => "opnorm", None;
    Orthogonality => "orthogonality", None;
    MartingaleCancellation => "martingale_cancellation", Some(1e-9);
    Carbery => "carbery", None;
    TruncatedAverage => "truncated_average", None;
    BadPartL1 => "bad_part_l1", None;
    CoarseAverage => "coarse_average", None;
    DiagBadL2 => "diag_bad_l2", None;
    KernelSum => "kernel_sum", None;
    BTruncation => "b_truncation", Some(1e-9);
    BDomination => "b_domination", Some(0.0);
    GoodPartWeak11 => "good_part_weak11", None;
    GoodPartChain => "good_part_chain", Some(1.0 + 1e-9);
    DifferentialWeak11 => "differential_weak11", None;
    DifferentialLp => "differential_lp", None;
    ThreeWaySplit => "three_way_split", Some(1e-10);
}

impl Claim {
    pub fn from_id(id: &str) -> Option<Claim> {
        Self::ALL.iter().copied().find(|c| c.id() == id)
    }

    /// Parses a comma-separated list; `all` selects every claim.
    pub fn parse_list(list: &str) -> Result<Vec<Claim>> {
        let mut out = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if item == "all" {
                return Ok(Self::ALL.to_vec());
            }
            let c = Self::from_id(item)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown claim `{item}`")))?;
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn needs_decomposition(self) -> bool {
        use Claim::*;
        matches!(
            self,
            Cuculescu
                | CuculescuMaximal
                | CuculescuStopped
                | Reconstruction
                | GoodPartL1
                | GoodPartLinf
                | GoodPartPsd
                | Zeta
                | Split
                | Cancellation
                | CancellationAverages
                | BadPartL1
                | CoarseAverage
                | DiagBadL2
                | KernelSum
                | BTruncation
                | BDomination
                | GoodPartWeak11
                | GoodPartChain
        )
    }

    /// Claims whose value depends only on the grid are measured once per `K`.
    pub fn grid_only(self) -> bool {
        matches!(self, Claim::Carbery)
    }
}

/// Everything a suite run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub spec: EnsembleSpec,
    pub claims: Vec<Claim>,
    pub ceilings: Ceilings,
    pub power: PowerIteration,
}

impl SuiteConfig {
    pub fn new(spec: EnsembleSpec, claims: Vec<Claim>) -> Self {
        Self {
            spec,
            claims,
            ceilings: Ceilings::defaults(),
            power: PowerIteration::default(),
        }
    }
}

fn cached<T>(cell: &OnceCell<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let _ = cell.set(init()?);
    Ok(cell.get().expect("just set"))
}

/// A decomposition together with the measurements shared by several claims.
struct DecEntry {
    dec: CZDecomposition,
    cuculescu: OnceCell<CuculescuResiduals>,
    residuals: OnceCell<DecompositionResiduals>,
    cancellation: OnceCell<CancellationReport>,
    diagonal: OnceCell<Vec<DiagonalTerm>>,
    chain: OnceCell<GoodPartChain>,
}

impl DecEntry {
    fn new(dec: CZDecomposition) -> Self {
        Self {
            dec,
            cuculescu: OnceCell::new(),
            residuals: OnceCell::new(),
            cancellation: OnceCell::new(),
            diagonal: OnceCell::new(),
            chain: OnceCell::new(),
        }
    }

    fn root_exceeds(&self) -> bool {
        self.dec.family.root == MLambda::RootExceeds
    }

    fn cuculescu(&self) -> Result<&CuculescuResiduals> {
        cached(&self.cuculescu, || cuculescu_residuals(&self.dec.f, &self.dec.family))
    }

    fn residuals(&self) -> Result<&DecompositionResiduals> {
        cached(&self.residuals, || decomposition_residuals(&self.dec))
    }

    fn cancellation(&self) -> Result<&CancellationReport> {
        cached(&self.cancellation, || cancellation_check(&self.dec))
    }

    fn diagonal(&self) -> Result<&[DiagonalTerm]> {
        cached(&self.diagonal, || diag_bad_l2(&self.dec)).map(Vec::as_slice)
    }

    fn chain(&self, nu: &SignSequence) -> Result<&GoodPartChain> {
        cached(&self.chain, || good_part_weak11(&self.dec, nu))
    }
}

struct InstanceContext<'a> {
    inst: &'a Instance,
    power: &'a PowerIteration,
    decompositions: OnceCell<Vec<DecEntry>>,
    tf: OnceCell<MatrixField>,
    opnorm: OnceCell<f64>,
}

impl<'a> InstanceContext<'a> {
    fn decompositions(&self) -> Result<&[DecEntry]> {
        cached(&self.decompositions, || {
            self.inst
                .lambdas
                .iter()
                .map(|&l| cz_decompose(&self.inst.f, l).map(DecEntry::new))
                .collect()
        })
        .map(Vec::as_slice)
    }

    fn tf(&self) -> Result<&MatrixField> {
        let g = self.inst.grid();
        cached(&self.tf, || transform_t(&self.inst.f, &self.inst.nu, LevelRange::full(g)))
    }

    fn opnorm(&self) -> Result<f64> {
        let g = *self.inst.grid();
        cached(&self.opnorm, || {
            transform_t_norm(g, &self.inst.nu, LevelRange::full(&g), self.power)
        })
        .copied()
    }

    fn record(&self, ratio: f64) -> InstanceRecord {
        InstanceRecord::new(self.inst.index, self.inst.levels(), ratio)
    }

    fn for_each_decomposition(
        &self,
        f: impl Fn(&DecEntry) -> Result<Vec<InstanceRecord>>,
    ) -> Result<Vec<InstanceRecord>> {
        let mut out = Vec::new();
        for entry in self.decompositions()? {
            let root_exceeds = entry.root_exceeds();
            for r in f(entry)? {
                let flagged = r.flagged;
                out.push(
                    r.lambda(entry.dec.lambda)
                        .value("root_exceeds", root_exceeds as u8 as f64)
                        .flagged(flagged),
                );
            }
        }
        Ok(out)
    }

    fn measure(&self, claim: Claim) -> Result<Vec<InstanceRecord>> {
        use Claim::*;
        let inst = self.inst;
        let f = &inst.f;
        let grid = *inst.grid();
        let big_k = grid.finest_level();
        let one = |r: InstanceRecord| Ok(vec![r]);
        match claim {
            Cuculescu | CuculescuMaximal | CuculescuStopped => self.for_each_decomposition(|e| {
                let r = e.cuculescu()?;
                let root_ok = !e.root_exceeds();
                let rec = match claim {
                    Cuculescu => self
                        .record(r.worst())
                        .value("monotone", r.monotone)
                        .value("measurability", r.measurability)
                        .value("commutation", r.commutation)
                        .value("compression", r.compression)
                        .value("partition", r.partition),
                    CuculescuMaximal => self.record(r.maximal_ratio).value("bad_mass", r.bad_mass),
                    _ => {
                        let ratio = if root_ok {
                            r.stopped_ratio.max(r.root_stopped_ratio)
                        } else {
                            r.stopped_ratio
                        };
                        self.record(ratio).value("root_stopped_ratio", r.root_stopped_ratio)
                    }
                };
                Ok(vec![rec])
            }),
            Reconstruction | GoodPartL1 | GoodPartLinf | GoodPartPsd | Zeta | Split => {
                self.for_each_decomposition(|e| {
                    let r = e.residuals()?;
                    let root_exceeds = e.root_exceeds();
                    let rec = match claim {
                        Reconstruction => self.record(r.reconstruction),
                        GoodPartL1 => self.record(r.good_l1_ratio),
                        GoodPartLinf => self.record(r.good_linf_ratio).flagged(root_exceeds),
                        GoodPartPsd => self.record(r.good_psd_violation),
                        Zeta => self.record(r.zeta_ratio).value("zeta_mass", r.zeta_mass),
                        _ => self
                            .record(r.split.max(r.termwise))
                            .value("regrouping", r.split)
                            .value("termwise", r.termwise),
                    };
                    Ok(vec![rec])
                })
            }
            Cancellation | CancellationAverages => self.for_each_decomposition(|e| {
                let c = e.cancellation()?;
                Ok(vec![if claim == Cancellation {
                    self.record(c.integral.max(c.localized))
                        .value("integral", c.integral)
                        .value("localized", c.localized)
                } else {
                    self.record(c.ball.max(c.conditional))
                        .value("ball", c.ball)
                        .value("conditional", c.conditional)
                }])
            }),
            Weak11 => one(self.record(weak11_ratio(self.tf()?, f)?)),
            Lp => LP_EXPONENTS
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    Ok(self
                        .record(lp_ratio(self.tf()?, f, p)?)
                        .group(i as u32)
                        .value("p", p))
                })
                .collect(),
            Lp2PowerIteration => {
                let ratio = lp_ratio(self.tf()?, f, 2.0)?;
                let est = self.opnorm()?;
                one(self
                    .record((ratio - est).max(0.0))
                    .value("ratio", ratio)
                    .value("estimate", est))
            }
            Bmo => one(self.record(linfty_bmo_ratio(self.tf()?, f)?)),
            KernelRegularity => {
                let seed = instance_seed(inst.index as u64, grid.dim(), big_k, grid.matdim(), 7);
                let mut worst = 0.0f64;
                for cube in sample_cubes(&grid, CUBES_PER_LEVEL, seed) {
                    for k in 0..=cube.level {
                        worst = worst.max(kernel_regularity(f, &cube, k)?);
                    }
                }
                one(self.record(worst))
            }
            Opnorm => one(self.record(self.opnorm()?)),
            Orthogonality => {
                let terms = orthogonality_decay(f)?;
                let worst = terms.iter().map(|t| t.scaled).fold(0.0, f64::max);
                one(self.record(worst))
            }
            MartingaleCancellation => one(self.record(martingale_cancellation_residual(f)?)),
            Carbery => {
                if inst.draw != 0 {
                    return Ok(vec![]);
                }
                let grid_norms = carbery_grid(grid, self.power)?;
                let worst = grid_norms.iter().map(|t| t.2).fold(0.0, f64::max);
                one(self.record(worst))
            }
            TruncatedAverage => one(self.record(truncated_average_ratio(f)?)),
            BadPartL1 => self.for_each_decomposition(|e| {
                Ok(vec![self.record(bad_part_l1(&e.dec)?).flagged(e.root_exceeds())])
            }),
            CoarseAverage => self.for_each_decomposition(|e| {
                let root_exceeds = e.root_exceeds();
                Ok(coarse_average_terms(&e.dec)?
                    .into_iter()
                    .map(|t| {
                        self.record(t.ratio())
                            .group(t.n)
                            .value("lhs", t.lhs)
                            .value("rhs", t.rhs)
                            .flagged(root_exceeds)
                    })
                    .collect())
            }),
            DiagBadL2 | KernelSum | BTruncation | BDomination => self.for_each_decomposition(|e| {
                let root_exceeds = e.root_exceeds();
                Ok(e.diagonal()?
                    .iter()
                    .map(|t| {
                        let r = match claim {
                            DiagBadL2 => self.record(t.l2_scaled).flagged(root_exceeds),
                            KernelSum => self.record(t.kernel_scaled).flagged(root_exceeds),
                            BTruncation => self.record(t.truncation),
                            _ => self
                                .record(t.domination_failures as f64)
                                .value("violation", t.domination),
                        };
                        r.group(t.n)
                    })
                    .collect())
            }),
            GoodPartWeak11 | GoodPartChain => self.for_each_decomposition(|e| {
                let root_exceeds = e.root_exceeds();
                let c = e.chain(&inst.nu)?;
                let rec = if claim == GoodPartWeak11 {
                    self.record(c.distribution).flagged(root_exceeds)
                } else {
                    let link = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
                    self.record(link(c.distribution, c.chebyshev).max(link(c.l2, c.holder)))
                };
                Ok(vec![rec
                    .value("distribution", c.distribution)
                    .value("chebyshev", c.chebyshev)
                    .value("l2", c.l2)
                    .value("holder", c.holder)])
            }),
            DifferentialWeak11 | DifferentialLp => {
                if big_k == 0 {
                    return Ok(vec![]);
                }
                let df = differential_transform(f, &inst.nu, LevelRange::differential(&grid))?;
                if claim == DifferentialWeak11 {
                    one(self.record(weak11_ratio(&df, f)?))
                } else {
                    LP_EXPONENTS
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| {
                            Ok(self.record(lp_ratio(&df, f, p)?).group(i as u32).value("p", p))
                        })
                        .collect()
                }
            }
            ThreeWaySplit => {
                if big_k == 0 {
                    return Ok(vec![]);
                }
                let levels = LevelRange::differential(&grid);
                let df = differential_transform(f, &inst.nu, levels)?;
                let [a, b, c] = three_way_split(f, &inst.nu, levels)?;
                let sum = &(&a + &b) + &c;
                let scale = f.max_abs().max(1.0);
                one(self.record((&df - &sum).max_abs() / scale))
            }
        }
    }
}

/// Runs every selected claim over every instance of the ensemble.
///
/// Instances are evaluated in parallel; records are merged in instance order
/// so the output does not depend on scheduling.
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<BoundReport>> {
    config.spec.validate()?;
    let claims = &config.claims;
    let per_instance: Vec<Vec<(Vec<InstanceRecord>, Duration)>> = (0..config.spec.len())
        .into_par_iter()
        .map(|i| {
            let inst = config.spec.instance(i)?;
            let ctx = InstanceContext {
                inst: &inst,
                power: &config.power,
                decompositions: OnceCell::new(),
                tf: OnceCell::new(),
                opnorm: OnceCell::new(),
            };
            claims
                .iter()
                .map(|&c| {
                    let start = Instant::now();
                    let recs = ctx.measure(c)?;
                    Ok((recs, start.elapsed()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(claims
        .iter()
        .enumerate()
        .map(|(ci, &claim)| {
            let mut records = Vec::new();
            let mut runtime = Duration::ZERO;
            for inst in &per_instance {
                records.extend(inst[ci].0.iter().cloned());
                runtime += inst[ci].1;
            }
            BoundReport::new(claim.id(), config.ceilings.get(claim.id()), records, runtime)
        })
        .collect())
}

/// The frozen reference ensembles: 32 instances per `(d, K, n)` with
/// `n in {1, 2, 4}`, `K in 3..=6` for `d = 1` and `K in 3..=5` for `d = 2`.
pub fn reference_ensembles() -> Vec<EnsembleSpec> {
    let mut out = Vec::new();
    for (dim, levels) in [(1usize, vec![3u32, 4, 5, 6]), (2, vec![3, 4, 5])] {
        for matdim in [1usize, 2, 4] {
            out.push(EnsembleSpec {
                seed: 20_240_601,
                count: 32,
                dim,
                levels: levels.clone(),
                matdim,
                boundary: Boundary::Torus,
                lambda: LambdaPolicy::RotatingSweep,
                generator: Generator::Mixed,
                signs: SignPolicy::RandomSigns,
            });
        }
    }
    out
}

/// Largest measured ratio per golden claim over a set of reports.
pub fn measured_constants(reports: &[BoundReport]) -> std::collections::BTreeMap<String, f64> {
    let mut out = std::collections::BTreeMap::new();
    for r in reports {
        let claim = Claim::from_id(&r.claim).expect("reports carry known claim ids");
        if claim.fixed_ceiling().is_none() {
            let e = out.entry(r.claim.clone()).or_insert(0.0f64);
            *e = e.max(r.max);
        }
    }
    out
}

/// Ids of the claims compared against golden ceilings.
pub fn golden_claims() -> Vec<Claim> {
    Claim::ALL
        .iter()
        .copied()
        .filter(|c| c.fixed_ceiling().is_none())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claim_ids_round_trip() {
        for &c in Claim::ALL {
            assert_eq!(Claim::from_id(c.id()), Some(c));
        }
        assert_eq!(Claim::parse_list("zeta,reconstruction,zeta").unwrap(), vec![Claim::Reconstruction, Claim::Zeta]);
        assert!(Claim::parse_list("nonsense").is_err());
        assert_eq!(Claim::parse_list("all").unwrap().len(), Claim::ALL.len());
    }

    #[test]
    fn every_golden_claim_has_a_ceiling() {
        let c = Ceilings::defaults();
        for claim in golden_claims() {
            assert!(c.values.contains_key(claim.id()), "{}", claim.id());
        }
    }

    #[test]
    fn small_suite_passes_and_is_reproducible() {
        let spec = EnsembleSpec {
            count: 4,
            levels: vec![3],
            ..EnsembleSpec::default()
        };
        let cfg = SuiteConfig::new(spec, Claim::ALL.to_vec());
        let a = run_suite(&cfg).unwrap();
        let b = run_suite(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for r in &a {
            assert!(r.pass, "{} max {} ceiling {}", r.claim, r.max, r.ceiling);
        }
    }

    #[test]
    fn zero_ceiling_fails() {
        let spec = EnsembleSpec {
            count: 2,
            levels: vec![3],
            ..EnsembleSpec::default()
        };
        let mut cfg = SuiteConfig::new(spec, vec![Claim::Weak11]);
        cfg.ceilings.apply_override("ceiling", 0.0).unwrap();
        assert!(!run_suite(&cfg).unwrap()[0].pass);
    }
}
