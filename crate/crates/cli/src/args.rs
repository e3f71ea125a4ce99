//! Flag definitions shared by the subcommands.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mcsort::classify::Method;
use mcsort::dataset::{Direction, LabelColumn};
use mcsort::encoding::InteractionForm;
use mcsort::learner::StructurePolicy;

use crate::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "mcsort",
    version,
    about = "Learn and apply interpretable multiple-criteria sorting models."
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a model to labeled data and write it as JSON.
    Train(TrainArgs),
    /// Classify alternatives with a trained model and labeled references.
    Predict(PredictArgs),
    /// Cross-validate a configuration on labeled data.
    Evaluate(EvaluateArgs),
    /// Compare two evaluation reports with a one-tailed paired t-test.
    Ttest(TtestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InteractionsArg {
    None,
    Product,
    Minimum,
}

impl From<InteractionsArg> for InteractionForm {
    fn from(v: InteractionsArg) -> Self {
        match v {
            InteractionsArg::None => InteractionForm::None,
            InteractionsArg::Product => InteractionForm::Product,
            InteractionsArg::Minimum => InteractionForm::Minimum,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Both,
    PositiveOnly,
    NegativeOnly,
}

impl From<PolicyArg> for StructurePolicy {
    fn from(v: PolicyArg) -> Self {
        match v {
            PolicyArg::Both => StructurePolicy::Both,
            PolicyArg::PositiveOnly => StructurePolicy::PositiveOnly,
            PolicyArg::NegativeOnly => StructurePolicy::NegativeOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    M1,
    M2,
    M3,
    M4,
}

impl From<MethodArg> for Method {
    fn from(v: MethodArg) -> Self {
        match v {
            MethodArg::M1 => Method::M1,
            MethodArg::M2 => Method::M2,
            MethodArg::M3 => Method::M3,
            MethodArg::M4 => Method::M4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    /// 3x3 moderate regularization values; neighbor counts 1 and 3.
    Quick,
    /// The full 34x34 ladder (10^e and 5*10^e, e = -8..8); neighbors 1-10.
    Full,
    /// Exactly one candidate, taken from --c1/--c2/--k.
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Choquet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Accuracy,
    MacroF,
}

/// `last`, a 0-based column index, or a header name.
pub fn parse_label_col(s: &str) -> Result<LabelColumn, String> {
    if s.eq_ignore_ascii_case("last") {
        Ok(LabelColumn::Last)
    } else if let Ok(idx) = s.parse::<usize>() {
        Ok(LabelColumn::Index(idx))
    } else {
        Ok(LabelColumn::Name(s.to_string()))
    }
}

/// Comma-separated `gain`/`cost` (or `g`/`c`), broadcast when a single value
/// is given for several criteria.
pub fn parse_directions(list: &str, n_criteria: usize) -> CliResult<Vec<Direction>> {
    let mut out = Vec::new();
    for token in list.split(',') {
        match token.trim().to_ascii_lowercase().as_str() {
            "gain" | "g" => out.push(Direction::Gain),
            "cost" | "c" => out.push(Direction::Cost),
            other => {
                return Err(CliError::Other(format!(
                    "unknown direction {other:?}; expected gain or cost"
                )))
            }
        }
    }
    if out.len() == 1 && n_criteria > 1 {
        return Ok(vec![out[0]; n_criteria]);
    }
    if out.len() != n_criteria {
        return Err(CliError::Other(format!(
            "{} directions given but the data has {} criteria",
            out.len(),
            n_criteria
        )));
    }
    Ok(out)
}

#[derive(Args)]
pub struct TrainArgs {
    /// Labeled CSV: criterion columns plus one integer class column.
    #[arg(long)]
    pub data: PathBuf,
    /// Class column: `last`, a 0-based index, or a header name.
    #[arg(long, default_value = "last", value_parser = parse_label_col)]
    pub label_col: LabelColumn,
    /// Per-criterion `gain`/`cost` list, or one value for all.
    #[arg(long, default_value = "gain")]
    pub directions: String,
    /// Sub-intervals per criterion of the piecewise-linear marginals.
    #[arg(long, default_value_t = 2)]
    pub gamma: usize,
    /// Pairwise interaction terms added to the additive model.
    #[arg(long, value_enum, default_value_t = InteractionsArg::None)]
    pub interactions: InteractionsArg,
    /// Which interaction signs the structure search may use.
    #[arg(long, value_enum, default_value_t = PolicyArg::Both)]
    pub policy: PolicyArg,
    /// Weight on the within-class scatter term.
    #[arg(long, default_value_t = 0.1)]
    pub c1: f64,
    /// Weight on the squared-norm smoothing term.
    #[arg(long, default_value_t = 0.1)]
    pub c2: f64,
    /// Recorded in the model file; training itself is deterministic.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Where to write the JSON model file.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    /// JSON model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled reference alternatives (typically the training data).
    #[arg(long)]
    pub refs: PathBuf,
    /// Class column of the reference file.
    #[arg(long, default_value = "last", value_parser = parse_label_col)]
    pub label_col: LabelColumn,
    /// Alternatives to classify; must contain the model's criterion columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Example-based assignment rule.
    #[arg(long, value_enum, default_value_t = MethodArg::M1)]
    pub method: MethodArg,
    /// Neighbor count (required for method m4).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Labeled CSV: criterion columns plus one integer class column.
    #[arg(long)]
    pub data: PathBuf,
    /// Class column: `last`, a 0-based index, or a header name.
    #[arg(long, default_value = "last", value_parser = parse_label_col)]
    pub label_col: LabelColumn,
    /// Per-criterion `gain`/`cost` list, or one value for all.
    #[arg(long, default_value = "gain")]
    pub directions: String,
    /// Sub-intervals per criterion of the piecewise-linear marginals.
    #[arg(long, default_value_t = 2)]
    pub gamma: usize,
    /// Pairwise interaction terms added to the additive model.
    #[arg(long, value_enum, default_value_t = InteractionsArg::None)]
    pub interactions: InteractionsArg,
    /// Which interaction signs the structure search may use.
    #[arg(long, value_enum, default_value_t = PolicyArg::Both)]
    pub policy: PolicyArg,
    /// Example-based assignment rule.
    #[arg(long, value_enum, default_value_t = MethodArg::M1)]
    pub method: MethodArg,
    /// Number of stratified folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Cross-validation repetitions with re-drawn folds.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Hyperparameter candidates searched per fold.
    #[arg(long, value_enum, default_value_t = GridArg::Quick)]
    pub grid: GridArg,
    /// Override the scatter-weight candidates with a single value.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Override the smoothing-weight candidates with a single value.
    #[arg(long)]
    pub c2: Option<f64>,
    /// Override the neighbor-count candidates with a single value.
    #[arg(long)]
    pub k: Option<usize>,
    /// Also evaluate a baseline model on the identical folds.
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Seed for fold assignment (repetition r uses seed + r).
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Where to write the JSON report.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TtestArgs {
    /// First evaluation report (the "greater" side of the alternative).
    pub report_a: PathBuf,
    /// Second report; omitted when comparing a report against its own
    /// baseline section.
    pub report_b: Option<PathBuf>,
    /// Which per-fold metric to pair.
    #[arg(long, value_enum, default_value_t = MetricArg::Accuracy)]
    pub metric: MetricArg,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_column_forms() {
        assert_eq!(parse_label_col("last").unwrap(), LabelColumn::Last);
        assert_eq!(parse_label_col("LAST").unwrap(), LabelColumn::Last);
        assert_eq!(parse_label_col("3").unwrap(), LabelColumn::Index(3));
        assert_eq!(
            parse_label_col("quality").unwrap(),
            LabelColumn::Name("quality".into())
        );
    }

    #[test]
    fn directions_parse_and_broadcast() {
        assert_eq!(
            parse_directions("gain,cost,g", 3).unwrap(),
            vec![Direction::Gain, Direction::Cost, Direction::Gain]
        );
        assert_eq!(
            parse_directions("cost", 4).unwrap(),
            vec![Direction::Cost; 4]
        );
        assert!(parse_directions("gain,cost", 3).is_err());
        assert!(parse_directions("up", 1).is_err());
    }

    #[test]
    fn cli_parses_and_verifies() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
