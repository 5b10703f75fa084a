use std::path::PathBuf;

use clap::{Args, ValueEnum};
use designbound_core::bounds::{assemble_bounds, BoundFamily};
use designbound_core::design::{balance_compare, nn_match, MatchMetric, MatchOrder, MatchSpec};
use designbound_core::imbalance::{ImbalanceVector, SummarySet};
use designbound_core::inference::{m_grid, matched_pair_variance, RobustCi};
use designbound_core::regression::{fit_ols, CovariateMap, LinearScore, RegressionFit};
use designbound_core::sample::{empirical_cond, Arm, Provenance, Sample, SubsampleHandle, Units};

use crate::csv_io::{self, CsvLayout};
use crate::error::{CliError, InModule};
use crate::report::{
    DataSummary, DesignMethod, DesignRecord, FamilyInference, FitSummary, Fits, IndexRecord, Inference, Meta, Report,
    SimulationSummary, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapChoice {
    /// Regress on the raw covariates.
    Identity,
    /// Regress on the scalar index.
    Index,
    /// Regress on quantile strata of the index.
    Strata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchChoice {
    None,
    /// Greedy one-to-one nearest neighbour on the index.
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SummaryChoice {
    /// Constant and the index itself.
    Coordinates,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Sample CSV with id, treatment, outcome and covariate columns.
    pub input: PathBuf,
    #[arg(long, default_value = "id")]
    pub id: String,
    #[arg(long, default_value = "d")]
    pub treatment: String,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Accept a file without outcomes and stop after the design phase.
    #[arg(long)]
    pub design_only: bool,
    #[arg(long, value_enum, default_value = "identity")]
    pub map: MapChoice,
    /// Scalar index: `auto` (the covariate when p = 1, else a linear
    /// propensity score), `propensity`, or a covariate column name.
    #[arg(long, default_value = "auto")]
    pub index: String,
    /// Number of strata for `--map strata`, cut at untreated quantiles.
    #[arg(long, default_value_t = 4)]
    pub strata: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Null value of the effect for m-values and verdicts.
    #[arg(long = "null", default_value_t = 0.0)]
    pub null_tau: f64,
    #[arg(long, value_enum, default_value = "coordinates")]
    pub summaries: SummaryChoice,
    #[arg(long = "match", value_enum, default_value = "none")]
    pub matching: MatchChoice,
    #[arg(long)]
    pub caliper: Option<f64>,
    #[arg(long)]
    pub replacement: bool,
    /// Use the listed unit ids as the analysis subsample.
    #[arg(long)]
    pub subsample_file: Option<PathBuf>,
    /// Target precision; adds the misspecification budget per family.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Largest m on the trapezoid grid; defaults to twice the largest finite m-value.
    #[arg(long)]
    pub m_max: Option<f64>,
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
    /// Simulation summary JSON (from `simulate --summary`) to embed.
    #[arg(long)]
    pub simulation: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Directory for trapezoid CSV series, one file per family.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

/// Families whose imbalance is a single number, with that number.
pub fn scalar_imbalance(c: &ImbalanceVector) -> Vec<(BoundFamily, f64)> {
    let mut out = Vec::new();
    if let Some(ks) = c.ks {
        out.push((BoundFamily::Ks, ks));
    }
    if let Some(w1) = c.w1 {
        out.push((BoundFamily::Mkw, w1));
    }
    out.push((BoundFamily::Tv, c.tv));
    out.push((BoundFamily::Dr, c.dr));
    if let Some([_, hi]) = c.lp {
        out.push((BoundFamily::Lp, hi));
    }
    out
}

fn index_map(sample: &Sample, covariates: &[String], choice: &str) -> Result<CovariateMap, CliError> {
    let p = sample.p();
    let unit_vector = |j: usize| {
        let mut coef = vec![0.0; p];
        coef[j] = 1.0;
        CovariateMap::Index { score: LinearScore::new(0.0, coef) }
    };
    match choice {
        "auto" if p == 1 => Ok(unit_vector(0)),
        "auto" | "propensity" => {
            let fitted = CovariateMap::fit_linear_propensity(&sample.redacted()).in_module("index")?;
            let score = fitted.score().expect("propensity map has a score").clone();
            Ok(CovariateMap::Index { score })
        }
        name => covariates
            .iter()
            .position(|c| c == name)
            .map(unit_vector)
            .ok_or_else(|| CliError::Input(format!("--index {name:?} is not a covariate column"))),
    }
}

fn fit_summary(fit: &RegressionFit, se: Option<f64>, kappa: Option<f64>) -> FitSummary {
    FitSummary {
        map: fit.map.clone(),
        column_names: fit.column_names.clone(),
        theta: fit.theta.clone(),
        n: fit.n,
        lambda_min: fit.lambda_min,
        se_beta: se,
        kappa,
    }
}

fn design_record(sub: &SubsampleHandle<'_>, method: DesignMethod) -> DesignRecord {
    DesignRecord {
        method,
        n_treated: sub.arm_count(Arm::Treated),
        n_untreated: sub.arm_count(Arm::Untreated),
        member_ids: sub.member_ids().into_iter().map(String::from).collect(),
        provenance: sub.provenance().clone(),
    }
}

/// Full pipeline: index, design phase, balance, imbalance side of the
/// bounds, and (with outcomes) the fit and robust intervals.
pub fn build_report(args: &AnalyzeArgs, arguments: Vec<String>) -> Result<Report, CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Input(format!("--alpha must lie in (0,1), got {}", args.alpha)));
    }
    if args.matching == MatchChoice::Nn && args.subsample_file.is_some() {
        return Err(CliError::Input("--match nn and --subsample-file are exclusive".into()));
    }
    let layout = CsvLayout {
        id: args.id.clone(),
        treatment: args.treatment.clone(),
        outcome: args.outcome.clone(),
        covariates: args.covariates.clone(),
        design_only: args.design_only,
    };
    let loaded = csv_io::read_sample_path(&args.input, &layout)?;
    let sample = &loaded.sample;
    sample.require_both_arms().in_module("sample")?;
    let view = sample.redacted();
    let index = index_map(sample, &loaded.covariates, &args.index)?;

    let (sub, method) = if args.matching == MatchChoice::Nn {
        let spec = MatchSpec {
            metric: MatchMetric::Index { map: index.clone() },
            replacement: args.replacement,
            order: MatchOrder::Greedy,
            caliper: args.caliper,
        };
        (nn_match(&view, &spec).in_module("design")?, DesignMethod::NearestNeighbour)
    } else if let Some(path) = &args.subsample_file {
        let ids = csv_io::read_id_list(path)?;
        let prov = Provenance::Listed { source: path.display().to_string() };
        (view.subsample_by_ids(&ids, prov).in_module("design")?, DesignMethod::Listed)
    } else {
        (view.full(), DesignMethod::None)
    };

    let rset = match args.summaries {
        SummaryChoice::Coordinates => Some(SummarySet::constant_and_coordinates(1)),
        SummaryChoice::None => None,
    };
    let balance = balance_compare(sample, &sub, &index, rset.as_ref()).in_module("imbalance")?;
    let bounds = assemble_bounds(&balance.post, None, args.eps);
    let g1 = empirical_cond(&sub, Arm::Treated, Some(&index)).in_module("imbalance")?;
    let g0 = empirical_cond(&sub, Arm::Untreated, Some(&index)).in_module("imbalance")?;

    let mut fits = Fits::default();
    let mut inference = None;
    if loaded.has_outcome && !args.design_only {
        let map = match args.map {
            MapChoice::Identity => CovariateMap::Identity,
            MapChoice::Index => index.clone(),
            MapChoice::Strata => {
                let score = index.score().expect("index map has a score").clone();
                CovariateMap::quantile_strata(&view, score, Arm::Untreated, args.strata).in_module("regression")?
            }
        };
        let full = fit_ols(sample, &map).in_module("regression")?;
        let fit = fit_ols(&sub, &map).in_module("regression")?;
        let var = matched_pair_variance(&sub, &fit, None).in_module("inference")?;
        fits.full = Some(fit_summary(&full, None, None));
        fits.analysis = Some(fit_summary(&fit, Some(var.se_beta), Some(var.kappa)));
        inference = Some(robust_inference(&fit, var.se_beta, &balance.post, args)?);
    }

    let simulation = match &args.simulation {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Some(serde_json::from_str::<SimulationSummary>(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };

    Ok(Report {
        schema_version: SCHEMA_VERSION,
        meta: Meta::now(None, arguments),
        data: DataSummary {
            source: args.input.display().to_string(),
            n: sample.len(),
            n_treated: sample.arm_count(Arm::Treated),
            n_untreated: sample.arm_count(Arm::Untreated),
            covariates: loaded.covariates.clone(),
            has_outcome: loaded.has_outcome,
        },
        fits,
        design: design_record(&sub, method),
        index: IndexRecord { map: index, summaries: rset, g1, g0 },
        imbalance: balance,
        bounds,
        inference,
        simulation,
    })
}

fn robust_inference(fit: &RegressionFit, se: f64, c: &ImbalanceVector, args: &AnalyzeArgs) -> Result<Inference, CliError> {
    let beta_hat = fit.beta();
    let classical = RobustCi::new(beta_hat, se, 0.0, args.alpha).in_module("inference")?;
    let mut families = Vec::new();
    for (family, cv) in scalar_imbalance(c) {
        let ci = RobustCi::new(beta_hat, se, cv, args.alpha).in_module("inference")?;
        families.push((family, cv, ci, ci.m_value(args.null_tau)));
    }
    let m_max = args.m_max.unwrap_or_else(|| {
        let largest = families.iter().map(|f| f.3).filter(|m| m.is_finite()).fold(0.0, f64::max);
        if largest > 0.0 {
            2.0 * largest
        } else {
            1.0
        }
    });
    if !(m_max > 0.0 && m_max.is_finite()) {
        return Err(CliError::Input(format!("--m-max must be positive, got {m_max}")));
    }
    let grid = m_grid(m_max, args.grid_points);
    Ok(Inference {
        alpha: args.alpha,
        null_tau: args.null_tau,
        beta_hat,
        se,
        t_stat: (se > 0.0).then(|| (beta_hat - args.null_tau) / se),
        classical_ci: classical.endpoints(0.0),
        families: families
            .into_iter()
            .map(|(family, c, ci, m_value)| FamilyInference { family, c, m_value, trapezoid: ci.trapezoid(&grid) })
            .collect(),
    })
}

pub fn run(args: &AnalyzeArgs, arguments: Vec<String>) -> Result<Report, CliError> {
    let report = build_report(args, arguments)?;
    report.write(&args.out)?;
    if let (Some(dir), Some(inf)) = (&args.plot_dir, &report.inference) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for f in &inf.families {
            let path = dir.join(format!("trapezoid_{}.csv", f.family.name()));
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            csv_io::write_trapezoid(file, &f.trapezoid).map_err(|e| CliError::Input(e.to_string()))?;
        }
    }
    Ok(report)
}
