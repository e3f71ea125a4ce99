//! `mcsort train`: fit a model and write it to disk.

use mcsort::dataset::{infer_scales, load_table};
use mcsort::learner::{report_model, train, Sign, TrainConfig};

use crate::args::{parse_directions, TrainArgs};
use crate::{model_file, CliResult};

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let table = load_table(&args.data, &args.label_col)?;
    let directions = parse_directions(&args.directions, table.n_criteria())?;
    let gammas = vec![args.gamma; table.n_criteria()];
    let scales = infer_scales(&table, &gammas, &directions)?;
    let config = TrainConfig {
        form: args.interactions.into(),
        policy: args.policy.into(),
        c1: args.c1,
        c2: args.c2,
    };
    let model = train(&table, &scales, &config)?;
    model_file::save(&model, &table.criterion_names, args.seed, &args.out)?;

    println!(
        "trained on {} ({} alternatives, {} criteria, {} classes)",
        args.data.display(),
        table.n_alternatives(),
        table.n_criteria(),
        table.q,
    );
    let report = report_model(&model);
    println!("criterion weights (marginal value at the best point):");
    let name_width = table
        .criterion_names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0);
    for (name, w) in table.criterion_names.iter().zip(&report.criterion_weights) {
        println!("  {name:<name_width$}  {w:.4}");
    }
    if report.interactions.is_empty() {
        println!("interactions: none");
    } else {
        println!("interactions:");
        for iv in &report.interactions {
            let kind = match iv.sign {
                Sign::Positive => "bonus",
                Sign::Negative => "penalty",
            };
            println!(
                "  ({}, {})  {kind}  {:+.4}",
                table.criterion_names[iv.pair.0], table.criterion_names[iv.pair.1], iv.phi,
            );
        }
    }
    let total: f64 = report.criterion_weights.iter().sum::<f64>()
        + report.interactions.iter().map(|iv| iv.phi).sum::<f64>();
    println!(
        "margin d = {:.6}, objective = {:.6}, weights sum to {total:.6}",
        model.d, model.objective,
    );
    println!("model written to {}", args.out.display());
    Ok(())
}
