//! JSON persistence for trained models.
//!
//! The file is a plain serde struct with a fixed field order, so
//! serialize → parse → serialize is byte-identical. On load the
//! normalization identity U(ideal) = 1 is recomputed from the stored
//! weights and must hold to 1e-8.

use std::path::Path;

use serde::{Deserialize, Serialize};

use mcsort::dataset::{CriterionScale, Direction};
use mcsort::encoding::{InteractionForm, WeightVector};
use mcsort::learner::{InteractionStructure, SortingModel};

use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance on the recomputed normalization value.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub c1: f64,
    pub c2: f64,
    /// Achieved minimum centroid margin.
    pub d: f64,
    pub objective: f64,
    pub seed: u64,
    pub timestamp: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub criterion_names: Vec<String>,
    pub scales: Vec<CriterionScale>,
    pub form: InteractionForm,
    pub structure: InteractionStructure,
    pub weights: WeightVector,
    /// U at the ideal alternative, recomputed and checked on load.
    pub normalization_check: f64,
    /// Original label values, ascending; index `c-1` names class `c`.
    pub label_values: Vec<i64>,
    pub training: TrainingMeta,
}

/// The raw performance row whose oriented values sit at every scale's best
/// point.
pub fn ideal_row(scales: &[CriterionScale]) -> Vec<f64> {
    scales
        .iter()
        .map(|s| match s.direction {
            Direction::Gain => s.beta,
            Direction::Cost => -s.beta,
        })
        .collect()
}

pub fn render(file: &ModelFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("model serialization cannot fail");
    s.push('\n');
    s
}

pub fn parse(text: &str) -> CliResult<ModelFile> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Other(format!(
            "unsupported model schema_version {} (this build reads {})",
            file.schema_version, SCHEMA_VERSION
        )));
    }
    Ok(file)
}

pub fn save(model: &SortingModel, criterion_names: &[String], seed: u64, path: &Path) -> CliResult<ModelFile> {
    let check = model.value(&ideal_row(&model.scales))?;
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        criterion_names: criterion_names.to_vec(),
        scales: model.scales.clone(),
        form: model.form,
        structure: model.structure.clone(),
        weights: model.weights.clone(),
        normalization_check: check,
        label_values: model.label_values.clone(),
        training: TrainingMeta {
            c1: model.c1,
            c2: model.c2,
            d: model.d,
            objective: model.objective,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339(),
        },
    };
    std::fs::write(path, render(&file))?;
    Ok(file)
}

/// Read a model file, rebuild the in-memory model, and revalidate it.
pub fn load(path: &Path) -> CliResult<(SortingModel, ModelFile)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("failed to read {}: {e}", path.display())))?;
    let file = parse(&text)?;
    if file.scales.len() != file.criterion_names.len() {
        return Err(CliError::Other(format!(
            "model file lists {} criterion names but {} scales",
            file.criterion_names.len(),
            file.scales.len()
        )));
    }
    if file.weights.marginal_steps.len() != file.scales.len() {
        return Err(CliError::Other(
            "model file weight blocks do not match its criterion count".into(),
        ));
    }
    for (j, (steps, scale)) in file
        .weights
        .marginal_steps
        .iter()
        .zip(&file.scales)
        .enumerate()
    {
        if steps.len() != scale.gamma {
            return Err(CliError::Other(format!(
                "criterion {j}: {} weight steps for gamma = {}",
                steps.len(),
                scale.gamma
            )));
        }
    }
    file.structure.validate(file.scales.len())?;
    let model = SortingModel {
        weights: file.weights.clone(),
        structure: file.structure.clone(),
        form: file.form,
        scales: file.scales.clone(),
        d: file.training.d,
        objective: file.training.objective,
        c1: file.training.c1,
        c2: file.training.c2,
        label_values: file.label_values.clone(),
    };
    let check = model.value(&ideal_row(&model.scales))?;
    if (check - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(CliError::Other(format!(
            "model file failed the normalization check: U(ideal) = {check}, expected 1"
        )));
    }
    Ok((model, file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcsort::dataset::PerformanceTable;
    use mcsort::learner::{train, TrainConfig};

    fn toy_model() -> (SortingModel, Vec<String>) {
        let table = PerformanceTable::from_mapped_labels(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![
                vec![0.0, 3.0],
                vec![1.0, 2.0],
                vec![2.0, 1.0],
                vec![3.0, 0.0],
            ],
            vec![1, 1, 2, 2],
            vec!["g1".into(), "g2".into()],
            vec![1, 2],
        )
        .unwrap();
        let scales = vec![
            CriterionScale::new(0.0, 3.0, Direction::Gain, 2).unwrap(),
            CriterionScale::new(-3.0, 0.0, Direction::Cost, 2).unwrap(),
        ];
        let model = train(&table, &scales, &TrainConfig::plain(0.1, 0.1)).unwrap();
        (model, vec!["g1".into(), "g2".into()])
    }

    #[test]
    fn ideal_row_respects_direction() {
        let scales = vec![
            CriterionScale::new(0.0, 5.0, Direction::Gain, 1).unwrap(),
            // Cost criterion whose raw values 2..7 orient to -7..-2.
            CriterionScale::new(-7.0, -2.0, Direction::Cost, 1).unwrap(),
        ];
        assert_eq!(ideal_row(&scales), vec![5.0, 2.0]);
    }

    #[test]
    fn save_load_preserves_the_model() {
        let (model, names) = toy_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&model, &names, 7, &path).unwrap();
        let (loaded, file) = load(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(file.schema_version, SCHEMA_VERSION);
        assert_eq!(file.training.seed, 7);
        assert!((file.normalization_check - 1.0).abs() <= NORMALIZATION_TOLERANCE);
    }

    #[test]
    fn serialize_parse_serialize_is_byte_identical() {
        let (model, names) = toy_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&model, &names, 7, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let reparsed = parse(&text).unwrap();
        assert_eq!(render(&reparsed), text);
    }

    #[test]
    fn tampered_weights_fail_the_normalization_check() {
        let (model, names) = toy_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut file = save(&model, &names, 7, &path).unwrap();
        file.weights.marginal_steps[0][0] += 0.25;
        std::fs::write(&path, render(&file)).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("normalization check"), "{err}");
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let (model, names) = toy_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut file = save(&model, &names, 7, &path).unwrap();
        file.schema_version = 99;
        std::fs::write(&path, render(&file)).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("schema_version"), "{err}");
    }
}
