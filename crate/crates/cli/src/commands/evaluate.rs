//! `mcsort evaluate`: repeated stratified cross-validation.

use mcsort::classify::Method;
use mcsort::dataset::{load_table, stratified_folds};
use mcsort::evaluate::{cross_validate, CvReport, EvalConfig, GridSpec, ModelKind};
use mcsort::learner::StructurePolicy;

use crate::args::{parse_directions, BaselineArg, EvaluateArgs, GridArg};
use crate::report::{
    method_results, render, render_text, EvaluationReport, ReportConfig, REPORT_SCHEMA_VERSION,
};
use crate::CliResult;

fn build_grid(args: &EvaluateArgs, method: Method) -> GridSpec {
    let mut grid = match args.grid {
        GridArg::Quick => GridSpec::quick(),
        GridArg::Full => GridSpec::full(),
        GridArg::Single => {
            let mut g = GridSpec::quick();
            g.c1 = vec![args.c1.unwrap_or(0.1)];
            g.c2 = vec![args.c2.unwrap_or(0.1)];
            g.k_neighbors = vec![args.k.unwrap_or(1)];
            g
        }
    };
    if args.grid != GridArg::Single {
        if let Some(c1) = args.c1 {
            grid.c1 = vec![c1];
        }
        if let Some(c2) = args.c2 {
            grid.c2 = vec![c2];
        }
        if let Some(k) = args.k {
            grid.k_neighbors = vec![k];
        }
    }
    grid.methods = vec![method];
    grid.forms = vec![args.interactions.into()];
    grid
}

fn run_repetitions(
    table: &mcsort::dataset::PerformanceTable,
    cfg: &EvalConfig,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> CliResult<Vec<(u64, CvReport)>> {
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let fold_seed = seed.wrapping_add(r as u64);
        let plan = stratified_folds(table, folds, fold_seed)?;
        runs.push((fold_seed, cross_validate(table, cfg, &plan)?));
    }
    Ok(runs)
}

pub fn run(args: &EvaluateArgs) -> CliResult<()> {
    let table = load_table(&args.data, &args.label_col)?;
    let directions = parse_directions(&args.directions, table.n_criteria())?;
    let method: Method = args.method.into();
    let grid = build_grid(args, method);

    let cfg = EvalConfig {
        kind: ModelKind::Additive,
        method,
        form: args.interactions.into(),
        policy: args.policy.into(),
        gamma: args.gamma,
        directions: directions.clone(),
        grid: grid.clone(),
    };
    let runs = run_repetitions(&table, &cfg, args.folds, args.repeats, args.seed)?;
    let primary = method_results("additive", &runs);

    let baseline = match args.baseline {
        Some(BaselineArg::Choquet) => {
            let cfg_b = EvalConfig {
                kind: ModelKind::Choquet,
                ..cfg.clone()
            };
            let runs_b = run_repetitions(&table, &cfg_b, args.folds, args.repeats, args.seed)?;
            Some(method_results("choquet", &runs_b))
        }
        None => None,
    };

    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: ReportConfig {
            data: args.data.display().to_string(),
            kind: "additive".into(),
            method: format!("{method}"),
            form: format!("{:?}", cfg.form).to_lowercase(),
            policy: match cfg.policy {
                StructurePolicy::Both => "both",
                StructurePolicy::PositiveOnly => "positive-only",
                StructurePolicy::NegativeOnly => "negative-only",
            }
            .into(),
            gamma: args.gamma,
            directions: directions
                .iter()
                .map(|d| format!("{d:?}").to_lowercase())
                .collect(),
            folds: args.folds,
            repeats: args.repeats,
            grid: format!("{:?}", args.grid).to_lowercase(),
            seed: args.seed,
        },
        primary,
        baseline,
    };

    std::fs::write(&args.out, render(&report))?;

    println!(
        "evaluated {} ({} alternatives, {} criteria, {} classes)",
        args.data.display(),
        table.n_alternatives(),
        table.n_criteria(),
        table.q,
    );
    println!(
        "method {method}, {} folds x {} repetitions, grid {:?}",
        args.folds,
        args.repeats,
        args.grid,
    );
    print!("{}", render_text(&report.primary));
    if let Some(b) = &report.baseline {
        print!("{}", render_text(b));
    }
    println!("report written to {}", args.out.display());
    Ok(())
}
