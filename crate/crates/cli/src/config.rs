use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dyadic_cz::dyadic::Boundary;
use dyadic_cz::verify::{Ceilings, Claim, EnsembleSpec, Generator, LambdaPolicy, SignPolicy};
use dyadic_cz::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "dyadic-cz", version, about = "Noncommutative Calderon-Zygmund experiments on a dyadic grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write deterministic ensemble instances as field containers.
    Gen(GenArgs),
    /// Decompose one field and dump the components with a manifest.
    Decompose(DecomposeArgs),
    /// Apply the transform `T` or `D` to one field.
    Transform(TransformArgs),
    /// Run claims over an ensemble and write the report.
    Verify(VerifyArgs),
    /// Summarize an existing report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Finest levels: `3,4,5` or `3-5`.
    #[arg(long, default_value = "3,4")]
    pub levels: String,
    #[arg(long, default_value_t = 2)]
    pub matdim: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Torus)]
    pub boundary: BoundaryArg,
    #[arg(long, default_value = "mixed")]
    pub generator: String,
    #[arg(long, default_value = "random-signs")]
    pub signs: String,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArg {
    Torus,
    Zero,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Torus => Boundary::Torus,
            BoundaryArg::Zero => Boundary::Zero,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// `T = sum_k nu_k (M_k - E_k)`, levels `0..=K`.
    T,
    /// `D = sum_k nu_k (M_{k-1} - M_k)`, levels `1..=K`.
    D,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = TransformKind::T)]
    pub kind: TransformKind,
    #[arg(long, default_value = "all-ones")]
    pub signs: String,
    /// Seed for random sign sequences.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// `rotating-sweep`, `sweep`, a number, or `l1:<c>` for `c * ||f||_1`.
    #[arg(long, default_value = "rotating-sweep")]
    pub lambda: String,
    /// Comma-separated claim ids, or `all`.
    #[arg(long, default_value = "all")]
    pub claims: String,
    /// `ceiling=<v>`, `ceiling.<claim>=<v>`, `power.iterations=<n>`,
    /// `power.rel_tol=<v>`, `power.restarts=<n>`; repeatable.
    #[arg(long = "tolerance", value_name = "NAME=VALUE")]
    pub tolerances: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `report.jsonl` written by `verify`.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for the regenerated tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::InvalidConfig(format!("cannot parse levels `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn parse_lambda(s: &str) -> Result<LambdaPolicy> {
    let bad = || Error::InvalidConfig(format!("cannot parse lambda `{s}`"));
    Ok(match s {
        "rotating-sweep" => LambdaPolicy::RotatingSweep,
        "sweep" => LambdaPolicy::Sweep,
        _ => match s.strip_prefix("l1:") {
            Some(c) => LambdaPolicy::L1Multiple(c.parse().map_err(|_| bad())?),
            None => LambdaPolicy::Fixed(s.parse().map_err(|_| bad())?),
        },
    })
}

impl EnsembleArgs {
    pub fn spec(&self, lambda: LambdaPolicy) -> Result<EnsembleSpec> {
        let spec = EnsembleSpec {
            seed: self.seed,
            count: self.count,
            dim: self.dim,
            levels: parse_levels(&self.levels)?,
            matdim: self.matdim,
            boundary: self.boundary.into(),
            lambda,
            generator: self.generator.parse::<Generator>()?,
            signs: self.signs.parse::<SignPolicy>()?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything that determines a `verify` run; embedded verbatim in the report header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub spec: EnsembleSpec,
    pub claims: Vec<Claim>,
    pub tolerances: Vec<(String, f64)>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_verify(args: &VerifyArgs) -> Result<Self> {
        let spec = args.ensemble.spec(parse_lambda(&args.lambda)?)?;
        let claims = Claim::parse_list(&args.claims)?;
        if claims.is_empty() {
            return Err(Error::InvalidConfig("no claims selected".into()));
        }
        let tolerances = args
            .tolerances
            .iter()
            .map(|t| {
                let (name, value) = t
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidConfig(format!("expected name=value, got `{t}`")))?;
                let value: f64 = value
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::InvalidConfig(format!("bad tolerance value in `{t}`")))?;
                Ok((name.trim().to_string(), value))
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = Self {
            subcommand: "verify".into(),
            spec,
            claims,
            tolerances,
            out: args.out.clone(),
        };
        cfg.suite()?;
        Ok(cfg)
    }

    pub fn suite(&self) -> Result<dyadic_cz::verify::SuiteConfig> {
        let mut suite = dyadic_cz::verify::SuiteConfig::new(self.spec.clone(), self.claims.clone());
        let mut ceilings = Ceilings::defaults();
        for (name, value) in &self.tolerances {
            let whole = |v: f64| -> Result<usize> {
                (v >= 1.0 && v.fract() == 0.0)
                    .then_some(v as usize)
                    .ok_or_else(|| Error::InvalidConfig(format!("`{name}` must be a positive integer")))
            };
            match name.as_str() {
                "power.iterations" => suite.power.iterations = whole(*value)?,
                "power.restarts" => suite.power.restarts = whole(*value)?,
                "power.rel_tol" => suite.power.rel_tol = *value,
                _ => ceilings.apply_override(name, *value)?,
            }
        }
        suite.ceilings = ceilings;
        Ok(suite)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is serializable");
        hex::encode(Sha256::digest(&json))
    }
}
