//! `mcsort ttest`: one-tailed paired t-test between evaluation reports.

use mcsort::evaluate::paired_t_test;

use crate::args::{MetricArg, TtestArgs};
use crate::report::{parse, MethodResults};
use crate::{CliError, CliResult};

fn series(results: &MethodResults, metric: MetricArg) -> &[f64] {
    match metric {
        MetricArg::Accuracy => &results.fold_accuracies,
        MetricArg::MacroF => &results.fold_macro_f,
    }
}

pub fn run(args: &TtestArgs) -> CliResult<()> {
    let report_a = parse(&std::fs::read_to_string(&args.report_a)?)?;
    let (xs, name_a, ys, name_b) = match &args.report_b {
        Some(path_b) => {
            let report_b = parse(&std::fs::read_to_string(path_b)?)?;
            (
                series(&report_a.primary, args.metric).to_vec(),
                args.report_a.display().to_string(),
                series(&report_b.primary, args.metric).to_vec(),
                path_b.display().to_string(),
            )
        }
        None => {
            let baseline = report_a.baseline.as_ref().ok_or_else(|| {
                CliError::Other(
                    "a second report file is required unless the first contains a baseline \
                     section to compare against"
                        .into(),
                )
            })?;
            (
                series(&report_a.primary, args.metric).to_vec(),
                format!("{} (primary)", args.report_a.display()),
                series(baseline, args.metric).to_vec(),
                format!("{} (baseline)", args.report_a.display()),
            )
        }
    };
    if xs.len() != ys.len() {
        return Err(CliError::Other(format!(
            "reports have different fold counts ({} vs {}); pairing requires identical \
             fold and repetition settings",
            xs.len(),
            ys.len()
        )));
    }
    let result = paired_t_test(&xs, &ys)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("A: {name_a}");
    println!("B: {name_b}");
    println!(
        "pairs: {}, mean A = {:.4}, mean B = {:.4}, mean difference = {:+.4}",
        xs.len(),
        mean(&xs),
        mean(&ys),
        mean(&xs) - mean(&ys),
    );
    println!(
        "t = {:.4}, df = {}, one-tailed p (A > B) = {:.6}",
        result.t, result.df, result.p,
    );
    if result.degenerate {
        println!("note: differences have zero variance; the statistic is degenerate");
    }
    Ok(())
}
