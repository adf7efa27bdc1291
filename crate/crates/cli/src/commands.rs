//! The three subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use effect_risk::bounds::{CorrelationSpec, RangeBoundParams};
use effect_risk::inference::{estimate_curve, CrossFit, RiskReport, SigmaSource, Target, VariantTag, SCHEMA_VERSION};
use effect_risk::nuisance::{cross_validated_rmse, OutcomeLearner};
use effect_risk::risk::AlphaLevel;
use effect_risk::simlab::{coverage_experiment, CoverageSummary};
use serde::Serialize;

use crate::config::{BoundsConfig, BoundsVariant, EstimateConfig, EstimateVariant, RunConfig, SimulateFile};
use crate::data::read_table;
use crate::error::{CliError, Result};

/// Write `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |source| CliError::Output {
        path: path.display().to_string(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("reports serialize");
    out.push(b'\n');
    out
}

fn variant_label(v: &VariantTag) -> String {
    match v {
        VariantTag::Upper => "upper".into(),
        VariantTag::Difference { alpha_hi } => format!("diff(alpha_hi={alpha_hi})"),
        VariantTag::Interquantile { alpha_hi } => format!("interquantile(alpha_hi={alpha_hi})"),
        VariantTag::LowerShift { constant } => format!("shift(constant={constant})"),
        VariantTag::LowerMixture { b } => format!("mixture(b={b})"),
        VariantTag::LowerVariance { rho: Some(r), .. } => format!("variance(rho={r})"),
        VariantTag::LowerVariance { rho: None, .. } => "variance".into(),
    }
}

/// CSV rows `[curve,]alpha,psi_hat,psi_raw,se,ci_lo,ci_hi,variant`.
fn curve_csv(curves: &[(Option<&str>, &RiskReport)]) -> Vec<u8> {
    let named = curves.iter().any(|(n, _)| n.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["alpha", "psi_hat", "psi_raw", "se", "ci_lo", "ci_hi", "variant"];
    if named {
        header.insert(0, "curve");
    }
    w.write_record(&header).expect("in-memory write");
    for (name, report) in curves {
        for e in &report.entries {
            let mut rec = vec![
                e.alpha.to_string(),
                e.psi_hat.to_string(),
                e.psi_raw.to_string(),
                e.se.to_string(),
                e.ci_lo.to_string(),
                e.ci_hi.to_string(),
                variant_label(&e.variant),
            ];
            if named {
                rec.insert(0, name.unwrap_or_default().to_string());
            }
            w.write_record(&rec).expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory write")
}

fn cross_fit(run: &RunConfig) -> Result<CrossFit> {
    let table = read_table(&run.input)?;
    log::info!(
        "read {} rows with {} covariates from {}",
        table.n(),
        table.d(),
        run.input.display()
    );
    Ok(CrossFit::fit(&table, &run.learner, run.folds, run.fold_mode, run.seed)?)
}

fn log_skipped(name: &str, r: &RiskReport) {
    for s in &r.skipped {
        log::warn!("{name}: skipped alpha {}: {}", s.alpha, s.reason);
    }
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a EstimateConfig,
    /// Cross-validated outcome RMSE per arm, when the shift constant is derived from them.
    #[serde(skip_serializing_if = "Option::is_none")]
    shift_rmse: Option<[f64; 2]>,
    curve: &'a RiskReport,
}

/// Paths of the files a command wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub json: PathBuf,
    pub csv: Option<PathBuf>,
}

pub fn run_estimate(cfg: &EstimateConfig) -> Result<Written> {
    let run = &cfg.run;
    let cf = cross_fit(run)?;
    let shift_rmse = match (cfg.variant, cfg.b) {
        (EstimateVariant::Shift, None) => {
            let reg = match run.learner.outcome {
                OutcomeLearner::Marginal(s) | OutcomeLearner::PerArm(s) => s,
                OutcomeLearner::Zero => unreachable!("rejected during config resolution"),
            };
            Some(cross_validated_rmse(cf.data(), &reg, run.folds, run.seed)?)
        }
        _ => None,
    };
    let hi = cfg.alpha_hi.map(AlphaLevel::new).transpose()?;
    let target = |a: AlphaLevel| match cfg.variant {
        EstimateVariant::Upper => Target::Upper { alpha: a },
        EstimateVariant::Diff => Target::Difference { lo: a, hi: hi.unwrap() },
        EstimateVariant::Interquantile => Target::Interquantile { lo: a, hi: hi.unwrap() },
        EstimateVariant::Shift => Target::LowerShift {
            alpha: a,
            constant: match (cfg.b, shift_rmse) {
                (Some(b), _) => b,
                (None, Some([r0, r1])) => (r0 + r1) / (2.0 * a.get()),
                (None, None) => unreachable!(),
            },
        },
    };
    let curve = estimate_curve(&cf, &run.alpha_grid, target, run.gamma, run.rearrange)?;
    log_skipped("estimate", &curve);
    let out = EstimateOutput {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        config: cfg,
        shift_rmse,
        curve: &curve,
    };
    let json = run.output.join("report.json");
    let csv = run.output.join("curve.csv");
    write_atomic(&json, &json_bytes(&out))?;
    write_atomic(&csv, &curve_csv(&[(None, &curve)]))?;
    Ok(Written { json, csv: Some(csv) })
}

#[derive(Serialize)]
struct NamedCurve {
    name: String,
    curve: RiskReport,
}

#[derive(Serialize)]
struct BoundsOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a BoundsConfig,
    curves: Vec<NamedCurve>,
}

pub fn run_bounds(cfg: &BoundsConfig) -> Result<Written> {
    let run = &cfg.run;
    let cf = cross_fit(run)?;
    let all = cfg.variant == BoundsVariant::All;
    let mut specs: Vec<(String, Box<dyn Fn(AlphaLevel) -> Target + Sync>)> =
        vec![("upper".into(), Box::new(|a| Target::Upper { alpha: a }))];
    if all || cfg.variant == BoundsVariant::Mixture {
        for &b in &cfg.b {
            let p = RangeBoundParams::new(b)?;
            specs.push((
                format!("mixture(b={b})"),
                Box::new(move |a| Target::LowerMixture { alpha: a, b: p }),
            ));
        }
    }
    if all || cfg.variant == BoundsVariant::Shift {
        for &b in &cfg.b {
            specs.push((
                format!("shift(b={b})"),
                Box::new(move |a| Target::LowerShift { alpha: a, constant: b }),
            ));
        }
    }
    if all || cfg.variant == BoundsVariant::Variance {
        for &rho in &cfg.rho {
            let r = CorrelationSpec::new(rho)?;
            specs.push((
                format!("variance(rho={rho})"),
                Box::new(move |a| Target::LowerVariance {
                    alpha: a,
                    sigma: SigmaSource::ArmVariances(r),
                }),
            ));
        }
    }
    let mut curves = Vec::with_capacity(specs.len());
    for (name, target) in specs {
        let curve = estimate_curve(&cf, &run.alpha_grid, target, run.gamma, run.rearrange)?;
        log_skipped(&name, &curve);
        curves.push(NamedCurve { name, curve });
    }
    let json = run.output.join("bounds.json");
    let csv = run.output.join("bounds.csv");
    let rows: Vec<(Option<&str>, &RiskReport)> = curves.iter().map(|c| (Some(c.name.as_str()), &c.curve)).collect();
    write_atomic(&csv, &curve_csv(&rows))?;
    let out = BoundsOutput {
        schema_version: SCHEMA_VERSION,
        command: "bounds",
        config: cfg,
        curves,
    };
    write_atomic(&json, &json_bytes(&out))?;
    Ok(Written { json, csv: Some(csv) })
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a SimulateFile,
    summary: &'a CoverageSummary,
}

/// Writes `records.jsonl` (one replication per line) and `summary.json`.
pub fn run_simulate(cfg: &SimulateFile) -> Result<Written> {
    let dir = cfg.output.clone().expect("output resolved");
    let res = coverage_experiment(&cfg.dgp, &cfg.experiment)?;
    if res.summary.failures > 0 {
        log::warn!("{} of {} replications failed", res.summary.failures, res.summary.reps);
    }
    let mut lines = Vec::new();
    for r in &res.records {
        serde_json::to_writer(&mut lines, r).expect("records serialize");
        lines.push(b'\n');
    }
    let records = dir.join("records.jsonl");
    let json = dir.join("summary.json");
    write_atomic(&records, &lines)?;
    let out = SimulateOutput {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        config: cfg,
        summary: &res.summary,
    };
    write_atomic(&json, &json_bytes(&out))?;
    Ok(Written { json, csv: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn labels() {
        assert_eq!(variant_label(&VariantTag::Upper), "upper");
        assert_eq!(variant_label(&VariantTag::LowerMixture { b: 0.5 }), "mixture(b=0.5)");
        assert_eq!(
            variant_label(&VariantTag::LowerVariance {
                rho: Some(-1.0),
                corrected: true
            }),
            "variance(rho=-1)"
        );
    }
}
