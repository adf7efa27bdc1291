//! Command-line flags, JSON config files, and their merge into a resolved
//! run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use effect_risk::nuisance::{CateLearner, FoldMode, LearnerConfig, OutcomeLearner, PropensitySpec, RegressorSpec};
use effect_risk::simlab::{DgpSpec, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "effect-risk",
    version,
    about = "Tail risk of individual treatment effects from experimental or observational data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a curve of CATE-CVaR (or a derived quantity) over a grid of levels.
    Estimate(EstimateArgs),
    /// Estimate lower bounds on the effect CVaR next to the upper bound.
    Bounds(BoundsArgs),
    /// Run a Monte Carlo coverage experiment on synthetic data.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV with header x_1..x_d, a, y.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated increasing levels in (0, 1].
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// `shuffled` or `literal`.
    #[arg(long)]
    pub fold_mode: Option<String>,
    /// Confidence level of the intervals.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// CATE learner: pseudo:REG, dr:REG[,REG] or r:REG, where REG is ols,
    /// ridge:LAMBDA, knn:K, boost or boost:TREES:DEPTH:RATE.
    #[arg(long)]
    pub learner: Option<String>,
    /// Outcome model: zero, marginal:REG or per-arm:REG.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Regressor for the arm outcome variances, or `none`.
    #[arg(long)]
    pub variance_learner: Option<String>,
    /// Known treatment probability, or `fit` for logistic regression.
    #[arg(long)]
    pub propensity: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report per-level estimates without monotone rearrangement.
    #[arg(long)]
    pub no_rearrange: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// upper, diff, interquantile or shift.
    #[arg(long)]
    pub variant: Option<String>,
    /// Upper level for diff and interquantile (default 1).
    #[arg(long)]
    pub alpha_hi: Option<f64>,
    /// Constant subtracted by the shift variant; if absent it is derived
    /// from cross-validated outcome RMSEs at each level.
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// mixture, shift, variance or all.
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated effect-range bounds for the mixture and shift curves.
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    /// Comma-separated potential-outcome correlations for the variance curves.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// JSON file with `dgp` and `experiment` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Master seed; replication r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
}

/// A number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Config file for `estimate` and `bounds`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub alpha_grid: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub fold_mode: Option<FoldMode>,
    pub gamma: Option<f64>,
    pub learner: Option<LearnerConfig>,
    pub seed: Option<u64>,
    pub rearrange: Option<bool>,
    pub variant: Option<String>,
    pub alpha_hi: Option<f64>,
    pub b: Option<OneOrMany>,
    pub rho: Option<OneOrMany>,
}

/// Config file for `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub dgp: DgpSpec,
    pub experiment: SimConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateVariant {
    Upper,
    Diff,
    Interquantile,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsVariant {
    Mixture,
    Shift,
    Variance,
    All,
}

/// Fully resolved settings, embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub alpha_grid: Vec<f64>,
    pub folds: usize,
    pub fold_mode: FoldMode,
    pub gamma: f64,
    pub learner: LearnerConfig,
    pub learner_name: String,
    pub seed: u64,
    pub rearrange: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    pub variant: EstimateVariant,
    pub alpha_hi: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    pub variant: BoundsVariant,
    pub b: Vec<f64>,
    pub rho: Vec<f64>,
}

pub fn default_alpha_grid() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) / 20.0).collect()
}

/// Observational default: logistic propensity, DR-learner with OLS outcome
/// and effect regressions, per-arm OLS outcome model.
pub fn default_learner() -> LearnerConfig {
    LearnerConfig {
        propensity: PropensitySpec::Logistic,
        cate: CateLearner::Dr {
            outcome: RegressorSpec::ols(),
            effect: RegressorSpec::ols(),
        },
        outcome: OutcomeLearner::PerArm(RegressorSpec::ols()),
        ..LearnerConfig::experimental(0.5)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn regressor(s: &str) -> Result<RegressorSpec> {
    RegressorSpec::from_str(s).map_err(|e| CliError::input(format!("regressor '{s}': {e}")))
}

pub fn parse_cate(s: &str) -> Result<CateLearner> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let need = || CliError::input(format!("learner '{s}' needs a regressor, e.g. {kind}:ols"));
    match kind {
        "pseudo" if !rest.is_empty() => Ok(CateLearner::PseudoOutcome(regressor(rest)?)),
        "r" if !rest.is_empty() => Ok(CateLearner::RLinear {
            marginal: regressor(rest)?,
        }),
        "dr" if !rest.is_empty() => {
            let (outcome, effect) = rest.split_once(',').unwrap_or((rest, rest));
            Ok(CateLearner::Dr {
                outcome: regressor(outcome)?,
                effect: regressor(effect)?,
            })
        }
        "pseudo" | "r" | "dr" => Err(need()),
        _ => Err(CliError::input(format!(
            "unknown learner '{s}' (expected pseudo:REG, dr:REG[,REG] or r:REG)"
        ))),
    }
}

pub fn parse_outcome(s: &str) -> Result<OutcomeLearner> {
    match s.split_once(':') {
        None if s == "zero" => Ok(OutcomeLearner::Zero),
        Some(("marginal", r)) => Ok(OutcomeLearner::Marginal(regressor(r)?)),
        Some(("per-arm", r)) => Ok(OutcomeLearner::PerArm(regressor(r)?)),
        _ => Err(CliError::input(format!(
            "unknown outcome model '{s}' (expected zero, marginal:REG or per-arm:REG)"
        ))),
    }
}

pub fn parse_propensity(s: &str) -> Result<PropensitySpec> {
    if s == "fit" {
        return Ok(PropensitySpec::Logistic);
    }
    s.parse::<f64>()
        .map(PropensitySpec::Known)
        .map_err(|_| CliError::input(format!("propensity must be a number in (0, 1) or 'fit', found '{s}'")))
}

fn parse_fold_mode(s: &str) -> Result<FoldMode> {
    match s {
        "shuffled" => Ok(FoldMode::Shuffled),
        "literal" => Ok(FoldMode::Literal),
        _ => Err(CliError::input(format!(
            "fold mode must be 'shuffled' or 'literal', found '{s}'"
        ))),
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(CliError::input("alpha grid is empty"));
    }
    if let Some(a) = grid.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(CliError::input(format!("alpha grid value {a} is outside (0, 1]")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::input("alpha grid must be strictly increasing"));
    }
    Ok(())
}

fn resolve_run(c: &CommonArgs, file: &FileConfig, needs_variance: bool) -> Result<RunConfig> {
    let input = c
        .input
        .clone()
        .or_else(|| file.input.clone())
        .ok_or_else(|| CliError::input("--input is required"))?;
    let output = c
        .output
        .clone()
        .or_else(|| file.output.clone())
        .ok_or_else(|| CliError::input("--output is required"))?;
    let alpha_grid = c
        .alpha_grid
        .clone()
        .or_else(|| file.alpha_grid.clone())
        .unwrap_or_else(default_alpha_grid);
    check_grid(&alpha_grid)?;
    let folds = c.folds.or(file.folds).unwrap_or(5);
    if folds < 2 {
        return Err(CliError::input("--folds must be at least 2"));
    }
    let fold_mode = match &c.fold_mode {
        Some(s) => parse_fold_mode(s)?,
        None => file.fold_mode.unwrap_or_default(),
    };
    let gamma = c.gamma.or(file.gamma).unwrap_or(0.9);
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CliError::input(format!("--gamma must lie in (0, 1), found {gamma}")));
    }
    let mut learner = file.learner.clone().unwrap_or_else(default_learner);
    if let Some(s) = &c.learner {
        learner.cate = parse_cate(s)?;
    }
    if let Some(s) = &c.outcome {
        learner.outcome = parse_outcome(s)?;
    }
    if let Some(s) = &c.propensity {
        learner.propensity = parse_propensity(s)?;
    }
    match c.variance_learner.as_deref() {
        Some("none") => learner.variance = None,
        Some(s) => learner.variance = Some(regressor(s)?),
        None => {}
    }
    if needs_variance && learner.variance.is_none() {
        learner.variance = Some(RegressorSpec::ols());
    }
    learner.validate().map_err(|e| CliError::input(e.to_string()))?;
    let learner_name = effect_risk::nuisance::NuisanceLearner::name(&learner);
    Ok(RunConfig {
        input,
        output,
        alpha_grid,
        folds,
        fold_mode,
        gamma,
        learner,
        learner_name,
        seed: c.seed.or(file.seed).unwrap_or(0),
        rearrange: !c.no_rearrange && file.rearrange.unwrap_or(true),
    })
}

fn load_file(path: Option<&PathBuf>) -> Result<FileConfig> {
    path.map_or_else(|| Ok(FileConfig::default()), |p| read_json(p))
}

fn check_alpha_hi(v: f64) -> Result<f64> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(CliError::input(format!("--alpha-hi must lie in (0, 1], found {v}")))
    }
}

fn check_b(b: f64) -> Result<f64> {
    if b >= 0.0 && b.is_finite() {
        Ok(b)
    } else {
        Err(CliError::input(format!(
            "--b must be finite and nonnegative, found {b}"
        )))
    }
}

pub fn resolve_estimate(args: &EstimateArgs) -> Result<EstimateConfig> {
    let file = load_file(args.common.config.as_ref())?;
    let variant = match args.variant.as_deref().or(file.variant.as_deref()).unwrap_or("upper") {
        "upper" => EstimateVariant::Upper,
        "diff" => EstimateVariant::Diff,
        "interquantile" => EstimateVariant::Interquantile,
        "shift" => EstimateVariant::Shift,
        v => {
            return Err(CliError::input(format!(
                "unknown variant '{v}' (expected upper, diff, interquantile or shift)"
            )))
        }
    };
    let run = resolve_run(&args.common, &file, false)?;
    let alpha_hi = match variant {
        EstimateVariant::Diff | EstimateVariant::Interquantile => {
            let hi = check_alpha_hi(args.alpha_hi.or(file.alpha_hi).unwrap_or(1.0))?;
            let top = *run.alpha_grid.last().unwrap();
            if top > hi || (variant == EstimateVariant::Interquantile && top == hi) {
                return Err(CliError::input(format!(
                    "alpha grid reaches {top}, which must stay below --alpha-hi {hi}"
                )));
            }
            Some(hi)
        }
        _ => None,
    };
    let b = match (variant, args.b) {
        (EstimateVariant::Shift, Some(b)) => Some(check_b(b)?),
        (EstimateVariant::Shift, None) => match file.b.clone().map(OneOrMany::into_vec).as_deref() {
            Some([b]) => Some(check_b(*b)?),
            Some(_) => return Err(CliError::input("the shift variant takes a single b")),
            None => {
                if run.learner.outcome == OutcomeLearner::Zero {
                    return Err(CliError::input(
                        "the shift variant needs --b or an outcome regressor to derive it",
                    ));
                }
                None
            }
        },
        _ => None,
    };
    Ok(EstimateConfig {
        run,
        variant,
        alpha_hi,
        b,
    })
}

pub fn resolve_bounds(args: &BoundsArgs) -> Result<BoundsConfig> {
    let file = load_file(args.common.config.as_ref())?;
    let variant = match args.variant.as_deref().or(file.variant.as_deref()).unwrap_or("all") {
        "mixture" => BoundsVariant::Mixture,
        "shift" => BoundsVariant::Shift,
        "variance" => BoundsVariant::Variance,
        "all" => BoundsVariant::All,
        v => {
            return Err(CliError::input(format!(
                "unknown variant '{v}' (expected mixture, shift, variance or all)"
            )))
        }
    };
    let b = args
        .b
        .clone()
        .or_else(|| file.b.clone().map(OneOrMany::into_vec))
        .unwrap_or_default();
    for &v in &b {
        check_b(v)?;
    }
    let rho = args
        .rho
        .clone()
        .or_else(|| file.rho.clone().map(OneOrMany::into_vec))
        .unwrap_or_else(|| vec![-1.0, 0.0, 1.0]);
    if let Some(r) = rho.iter().find(|r| !(**r >= -1.0 && **r <= 1.0)) {
        return Err(CliError::input(format!("--rho values must lie in [-1, 1], found {r}")));
    }
    if matches!(variant, BoundsVariant::Mixture | BoundsVariant::Shift) && b.is_empty() {
        return Err(CliError::input("the mixture and shift bounds need --b"));
    }
    let needs_variance = matches!(variant, BoundsVariant::Variance | BoundsVariant::All) && !rho.is_empty();
    let run = resolve_run(&args.common, &file, needs_variance)?;
    Ok(BoundsConfig { run, variant, b, rho })
}

pub fn resolve_simulate(args: &SimulateArgs) -> Result<SimulateFile> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::input("simulate needs --config with a DGP spec"))?;
    let mut cfg: SimulateFile = read_json(path)?;
    if let Some(s) = args.seed {
        cfg.dgp.seed = s;
    }
    if let Some(r) = args.reps {
        cfg.experiment.reps = r;
    }
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    }
    if cfg.output.is_none() {
        return Err(CliError::input("--output is required"));
    }
    cfg.dgp
        .validate()
        .map_err(|e| CliError::input(format!("invalid DGP: {e}")))?;
    cfg.experiment
        .validate()
        .map_err(|e| CliError::input(format!("invalid experiment: {e}")))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learner_strings() {
        assert_eq!(
            parse_cate("pseudo:ols").unwrap(),
            CateLearner::PseudoOutcome(RegressorSpec::ols())
        );
        assert_eq!(
            parse_cate("dr:knn:10,ridge:0.5").unwrap(),
            CateLearner::Dr {
                outcome: RegressorSpec::knn(10),
                effect: RegressorSpec::ridge(0.5)
            }
        );
        assert_eq!(
            parse_cate("dr:boost").unwrap(),
            CateLearner::Dr {
                outcome: RegressorSpec::boosted(100, 2, 0.1),
                effect: RegressorSpec::boosted(100, 2, 0.1)
            }
        );
        assert_eq!(
            parse_cate("r:ols").unwrap(),
            CateLearner::RLinear {
                marginal: RegressorSpec::ols()
            }
        );
        assert!(parse_cate("pseudo").is_err());
        assert!(parse_cate("forest:ols").is_err());
        assert_eq!(parse_outcome("zero").unwrap(), OutcomeLearner::Zero);
        assert_eq!(
            parse_outcome("per-arm:knn:5").unwrap(),
            OutcomeLearner::PerArm(RegressorSpec::knn(5))
        );
        assert!(parse_outcome("marginal").is_err());
        assert_eq!(parse_propensity("0.3").unwrap(), PropensitySpec::Known(0.3));
        assert_eq!(parse_propensity("fit").unwrap(), PropensitySpec::Logistic);
        assert!(parse_propensity("x").is_err());
    }

    fn estimate_args(extra: &[&str]) -> Result<EstimateConfig> {
        let mut argv = vec!["effect-risk", "estimate", "--input", "in.csv", "--output", "out"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Estimate(a) => resolve_estimate(&a),
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_and_overrides() {
        let c = estimate_args(&[]).unwrap();
        assert_eq!(c.run.alpha_grid.len(), 20);
        assert_eq!(c.run.folds, 5);
        assert_eq!(c.run.gamma, 0.9);
        assert!(c.run.rearrange);
        assert_eq!(c.variant, EstimateVariant::Upper);
        assert_eq!(c.run.learner, default_learner());
        let c = estimate_args(&[
            "--alpha-grid",
            "0.2,0.5",
            "--no-rearrange",
            "--propensity",
            "0.5",
            "--seed",
            "7",
        ])
        .unwrap();
        assert_eq!(c.run.alpha_grid, vec![0.2, 0.5]);
        assert!(!c.run.rearrange);
        assert_eq!(c.run.learner.propensity, PropensitySpec::Known(0.5));
        assert_eq!(c.run.seed, 7);
    }

    #[test]
    fn invalid_settings_are_input_errors() {
        for bad in [
            &["--alpha-grid", "0.5,0.2"][..],
            &["--alpha-grid", "0,0.5"],
            &["--gamma", "1"],
            &["--folds", "1"],
            &["--variant", "median"],
            &["--variant", "interquantile"],
            &["--variant", "diff", "--alpha-hi", "0.5"],
            &["--variant", "shift", "--outcome", "zero"],
            &["--propensity", "1.5"],
        ] {
            let e = estimate_args(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad:?}: {e}");
        }
        assert!(estimate_args(&["--variant", "interquantile", "--alpha-grid", "0.1,0.5"]).is_ok());
    }

    #[test]
    fn file_config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"folds": 3, "colour": 1}"#).is_err());
        let f: FileConfig = serde_json::from_str(r#"{"folds": 3, "b": 0.5, "rho": [-1, 1]}"#).unwrap();
        assert_eq!(f.b, Some(OneOrMany::One(0.5)));
        assert_eq!(f.rho, Some(OneOrMany::Many(vec![-1.0, 1.0])));
    }
}
