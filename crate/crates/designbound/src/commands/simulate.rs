use std::path::PathBuf;

use clap::Args;
use designbound_core::dgp::{run_replication, synthetic_pool, SimPlan, SimSpec, SimTable};
use rayon::prelude::*;

use crate::csv_io;
use crate::error::{CliError, InModule};
use crate::report::{SimulationSummary, SpecSummary};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    pub n1: usize,
    #[arg(long, default_value_t = 100)]
    pub n0: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Plan seed; the BB_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Seed of the synthetic population the samples are drawn from.
    #[arg(long, default_value_t = 2024)]
    pub pool_seed: u64,
    /// Specifications: A, B, C, A_strata, saturated.
    #[arg(long, value_delimiter = ',')]
    pub specs: Option<Vec<String>>,
    #[arg(long, default_value_t = 4)]
    pub strata: usize,
    #[arg(long)]
    pub caliper: Option<f64>,
    /// Run replications one after another instead of in parallel.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, default_value = "simulation.csv")]
    pub out: PathBuf,
    /// Summary JSON for embedding in a report.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// The seed in force: BB_SEED when set, otherwise the flag.
pub fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("BB_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Input(format!("BB_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

pub fn plan_from(args: &SimulateArgs) -> Result<SimPlan, CliError> {
    let mut plan = SimPlan::new(args.n1, args.n0, args.reps, effective_seed(args.seed)?);
    if let Some(names) = &args.specs {
        plan.specs = names.iter().map(|s| SimSpec::parse(s)).collect::<designbound_core::Result<_>>().in_module("simulation")?;
    }
    plan.strata = args.strata;
    plan.matcher.caliper = args.caliper;
    plan.validate().in_module("simulation")?;
    Ok(plan)
}

/// Replications in parallel, merged by replication index.
pub fn simulate(plan: &SimPlan, pool_seed: u64, parallel: bool) -> Result<SimTable, CliError> {
    let pool = synthetic_pool(pool_seed).in_module("simulation")?;
    let reps = 0..plan.replications as u64;
    let outcomes = if parallel {
        reps.into_par_iter().map(|r| run_replication(&pool, plan, r)).collect::<Result<Vec<_>, _>>()
    } else {
        reps.map(|r| run_replication(&pool, plan, r)).collect::<Result<Vec<_>, _>>()
    }
    .in_module("simulation")?;
    Ok(SimTable::from_outcomes(outcomes))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(plan: &SimPlan, table: &SimTable) -> SimulationSummary {
    let specs = plan
        .specs
        .iter()
        .map(|&spec| {
            let rows: Vec<_> = table.rows_for(spec).collect();
            SpecSummary {
                spec,
                rows: rows.len(),
                improved_share: table.improved_share(spec),
                median_abs_bias_pre: median(rows.iter().map(|r| r.pre.bias.abs()).collect()),
                median_abs_bias_post: median(rows.iter().map(|r| r.post.bias.abs()).collect()),
            }
        })
        .collect();
    let completed = plan.replications - table.skipped.len();
    SimulationSummary { plan: plan.clone(), completed, skipped: table.skipped.clone(), specs }
}

pub fn run(args: &SimulateArgs) -> Result<SimulationSummary, CliError> {
    let plan = plan_from(args)?;
    let table = simulate(&plan, args.pool_seed, !args.sequential)?;
    let file = std::fs::File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    csv_io::write_sim_table(std::io::BufWriter::new(file), &table).map_err(|e| CliError::Input(e.to_string()))?;
    let summary = summarize(&plan, &table);
    for s in &table.skipped {
        eprintln!("replication {} skipped: {}", s.rep, s.reason);
    }
    if let Some(path) = &args.summary {
        let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Report(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))?;
    }
    Ok(summary)
}
