//! Performance tables, criterion scales, and stratified fold plans.
//!
//! A [`PerformanceTable`] holds the alternatives to sort: one row of raw
//! performances per alternative plus a class label in `1..=q`, where class 1
//! is the worst and class `q` the best. [`CriterionScale`] fixes, per
//! criterion, the value range the piecewise-linear marginal is defined on and
//! how many equal sub-intervals it is split into. [`FoldPlan`] partitions a
//! table for stratified cross-validation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization direction of a raw criterion column.
///
/// Internally everything is handled as gain-type; cost columns are negated on
/// the way in (see [`CriterionScale::orient`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Gain,
    Cost,
}

impl Direction {
    /// Map a raw performance onto the internal gain-type scale.
    pub fn orient(self, raw: f64) -> f64 {
        match self {
            Direction::Gain => raw,
            Direction::Cost => -raw,
        }
    }
}

/// Value range and piecewise-linear resolution of one criterion.
///
/// `alpha`/`beta` are the worst/best performances *after* orientation, so
/// `alpha < beta` always. `gamma` is the number of equal sub-intervals the
/// marginal value function is split into.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionScale {
    pub alpha: f64,
    pub beta: f64,
    pub direction: Direction,
    pub gamma: usize,
}

impl CriterionScale {
    pub fn new(alpha: f64, beta: f64, direction: Direction, gamma: usize) -> Result<Self> {
        if alpha >= beta || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Invalid(format!(
                "criterion scale requires alpha < beta, got [{alpha}, {beta}]"
            )));
        }
        if gamma == 0 {
            return Err(Error::Invalid("gamma must be at least 1".into()));
        }
        Ok(CriterionScale {
            alpha,
            beta,
            direction,
            gamma,
        })
    }

    /// The k-th characteristic point, `k` in `0..=gamma`. Point 0 is `alpha`,
    /// point `gamma` is `beta`, the rest are equally spaced between them.
    pub fn breakpoint(&self, k: usize) -> f64 {
        debug_assert!(k <= self.gamma);
        if k == 0 {
            self.alpha
        } else if k == self.gamma {
            self.beta
        } else {
            self.alpha + (self.beta - self.alpha) * (k as f64) / (self.gamma as f64)
        }
    }

    /// Map a raw performance onto the internal gain-type scale.
    pub fn orient(&self, raw: f64) -> f64 {
        self.direction.orient(raw)
    }
}

/// Which CSV column carries the class label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

/// Alternatives-by-criteria matrix with class labels in `1..=q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceTable {
    /// Row identifiers, unique, in input order.
    pub alternatives: Vec<String>,
    /// Raw performances, one row per alternative.
    pub performances: Vec<Vec<f64>>,
    /// Class index per alternative, each in `1..=q`.
    pub labels: Vec<usize>,
    /// Number of classes.
    pub q: usize,
    pub criterion_names: Vec<String>,
    /// Original label values in ascending order; `label_values[c-1]` is the
    /// raw value that was mapped to class `c`.
    pub label_values: Vec<i64>,
}

impl PerformanceTable {
    /// Build a table from raw integer labels. Distinct label values are
    /// sorted ascending and mapped to classes `1..=q` in that order.
    pub fn from_raw_labels(
        alternatives: Vec<String>,
        performances: Vec<Vec<f64>>,
        raw_labels: Vec<i64>,
        criterion_names: Vec<String>,
    ) -> Result<Self> {
        let mut distinct: Vec<i64> = raw_labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::TooFewClasses {
                found: distinct.len(),
            });
        }
        let index: BTreeMap<i64, usize> = distinct
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i + 1))
            .collect();
        let labels = raw_labels.iter().map(|v| index[v]).collect();
        Self::from_mapped_labels(alternatives, performances, labels, criterion_names, distinct)
    }

    /// Build a table whose labels are already class indices `1..=q` (with
    /// `q` = max label). `label_values` records what each class was called in
    /// the source data.
    pub fn from_mapped_labels(
        alternatives: Vec<String>,
        performances: Vec<Vec<f64>>,
        labels: Vec<usize>,
        criterion_names: Vec<String>,
        label_values: Vec<i64>,
    ) -> Result<Self> {
        let n = alternatives.len();
        if performances.len() != n || labels.len() != n {
            return Err(Error::Invalid(
                "alternatives, performances, and labels must have equal length".into(),
            ));
        }
        if n == 0 {
            return Err(Error::Invalid("empty table".into()));
        }
        let m = criterion_names.len();
        for (i, row) in performances.iter().enumerate() {
            if row.len() != m {
                return Err(Error::MalformedRow {
                    row: i + 1,
                    detail: format!("expected {m} performance values, got {}", row.len()),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericPerformance {
                    row: i + 1,
                    column: criterion_names[j].clone(),
                    value: row[j].to_string(),
                });
            }
        }
        let q = label_values.len();
        if q < 2 {
            return Err(Error::TooFewClasses { found: q });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c == 0 || c > q) {
            return Err(Error::Invalid(format!(
                "label {bad} outside 1..={q}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &alternatives {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId { id: id.clone() });
            }
        }
        Ok(PerformanceTable {
            alternatives,
            performances,
            labels,
            q,
            criterion_names,
            label_values,
        })
    }

    pub fn n_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    pub fn n_criteria(&self) -> usize {
        self.criterion_names.len()
    }

    /// Number of alternatives labeled with class `c`.
    pub fn class_count(&self, c: usize) -> usize {
        self.labels.iter().filter(|&&l| l == c).count()
    }

    /// Row indices of the alternatives in class `c`, in input order.
    pub fn class_members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == c)
            .collect()
    }

    /// Sub-table holding the given rows (in the given order). Class indexing
    /// and the label mapping are inherited unchanged, so a slice of a table is
    /// comparable with its parent even when some class ends up empty.
    pub fn select(&self, rows: &[usize]) -> PerformanceTable {
        PerformanceTable {
            alternatives: rows.iter().map(|&i| self.alternatives[i].clone()).collect(),
            performances: rows.iter().map(|&i| self.performances[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            q: self.q,
            criterion_names: self.criterion_names.clone(),
            label_values: self.label_values.clone(),
        }
    }
}

/// Stratified assignment of table rows to `k` cross-validation folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index in `0..k` per alternative.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Row indices of fold `f`, in input order.
    pub fn fold_indices(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    /// Row indices of everything except fold `f`, in input order.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != f)
            .collect()
    }
}

/// Read a CSV file (UTF-8, header row, comma separator, `.` decimals) into a
/// performance table. Every column except the label column is a criterion;
/// labels must parse as integers and are mapped to `1..=q` in ascending
/// order. Row identifiers are the 1-based data row numbers.
pub fn load_table(path: &Path, label_column: &LabelColumn) -> Result<PerformanceTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => Error::MalformedRow {
                row: 0,
                detail: e.to_string(),
            },
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 0,
            detail: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::MalformedRow {
            row: 0,
            detail: "need at least one criterion column and one label column".into(),
        });
    }

    let label_idx = match label_column {
        LabelColumn::Last => headers.len() - 1,
        LabelColumn::Index(i) => {
            if *i >= headers.len() {
                return Err(Error::Invalid(format!(
                    "label column index {i} out of range (file has {} columns)",
                    headers.len()
                )));
            }
            *i
        }
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Invalid(format!("label column {name:?} not found")))?,
    };

    let criterion_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut alternatives = Vec::new();
    let mut performances = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            detail: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                row,
                detail: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let label_field = &record[label_idx];
        if label_field.is_empty() {
            return Err(Error::MissingLabel { row });
        }
        let label: i64 = label_field.parse().map_err(|_| Error::NonIntegerLabel {
            row,
            value: label_field.to_string(),
        })?;
        let mut perf = Vec::with_capacity(criterion_names.len());
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let value: f64 = field.parse().map_err(|_| Error::NonNumericPerformance {
                row,
                column: headers[j].clone(),
                value: field.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumericPerformance {
                    row,
                    column: headers[j].clone(),
                    value: field.to_string(),
                });
            }
            perf.push(value);
        }
        alternatives.push(row.to_string());
        performances.push(perf);
        raw_labels.push(label);
    }

    PerformanceTable::from_raw_labels(alternatives, performances, raw_labels, criterion_names)
}

/// Derive per-criterion scales from a table: orient each column (cost columns
/// are negated), then take the column min/max as `alpha`/`beta`.
pub fn infer_scales(
    table: &PerformanceTable,
    gamma: &[usize],
    directions: &[Direction],
) -> Result<Vec<CriterionScale>> {
    let m = table.n_criteria();
    if gamma.len() != m || directions.len() != m {
        return Err(Error::Invalid(format!(
            "expected {m} gamma values and {m} directions"
        )));
    }
    let mut scales = Vec::with_capacity(m);
    for j in 0..m {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &table.performances {
            let v = match directions[j] {
                Direction::Gain => row[j],
                Direction::Cost => -row[j],
            };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            return Err(Error::DegenerateCriterion {
                name: table.criterion_names[j].clone(),
            });
        }
        scales.push(CriterionScale::new(lo, hi, directions[j], gamma[j])?);
    }
    Ok(scales)
}

/// Stratified fold assignment: within each class, shuffle the members with a
/// ChaCha8 PRNG seeded from `seed` and deal them round-robin to folds. Every
/// class therefore spreads across folds to within one alternative of exact
/// proportionality.
pub fn stratified_folds(table: &PerformanceTable, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Invalid(format!("fold count must be >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![usize::MAX; table.n_alternatives()];
    for class in 1..=table.q {
        let mut members = table.class_members(class);
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                size: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for (i, &row) in members.iter().enumerate() {
            assignments[row] = i % k;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy_table(labels: Vec<usize>, q: usize) -> PerformanceTable {
        let n = labels.len();
        PerformanceTable::from_mapped_labels(
            (0..n).map(|i| format!("a{}", i + 1)).collect(),
            (0..n).map(|i| vec![i as f64, (n - i) as f64]).collect(),
            labels,
            vec!["g1".into(), "g2".into()],
            (1..=q as i64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn loads_small_csv() {
        let f = write_csv("g1,g2,class\n1.0,2.0,1\n3.5,0.5,2\n2.0,2.0,2\n");
        let t = load_table(f.path(), &LabelColumn::Last).unwrap();
        assert_eq!(t.q, 2);
        assert_eq!(t.class_count(1), 1);
        assert_eq!(t.class_count(2), 2);
        assert_eq!(t.criterion_names, vec!["g1", "g2"]);
        assert_eq!(t.performances[1], vec![3.5, 0.5]);
        assert_eq!(t.alternatives, vec!["1", "2", "3"]);
    }

    #[test]
    fn maps_sparse_labels_in_ascending_order() {
        let f = write_csv("g1,class\n1,7\n2,-3\n3,10\n4,7\n");
        let t = load_table(f.path(), &LabelColumn::Last).unwrap();
        assert_eq!(t.label_values, vec![-3, 7, 10]);
        assert_eq!(t.labels, vec![2, 1, 3, 2]);
    }

    #[test]
    fn rejects_non_integer_label() {
        let f = write_csv("g1,class\n1.0,abc\n2.0,1\n");
        let err = load_table(f.path(), &LabelColumn::Last).unwrap_err();
        assert!(err.to_string().contains("non-integer label"), "{err}");
    }

    #[test]
    fn rejects_non_numeric_performance() {
        let f = write_csv("g1,class\nhello,1\n2.0,2\n");
        let err = load_table(f.path(), &LabelColumn::Last).unwrap_err();
        assert!(matches!(err, Error::NonNumericPerformance { row: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_missing_label() {
        let f = write_csv("g1,class\n1.0,\n2.0,1\n");
        let err = load_table(f.path(), &LabelColumn::Last).unwrap_err();
        assert!(matches!(err, Error::MissingLabel { row: 1 }), "{err}");
    }

    #[test]
    fn rejects_single_class() {
        let f = write_csv("g1,class\n1.0,1\n2.0,1\n");
        let err = load_table(f.path(), &LabelColumn::Last).unwrap_err();
        assert!(matches!(err, Error::TooFewClasses { found: 1 }), "{err}");
    }

    #[test]
    fn label_column_by_name_and_index() {
        let f = write_csv("class,g1\n1,1.0\n2,2.0\n");
        let by_name = load_table(f.path(), &LabelColumn::Name("class".into())).unwrap();
        let by_index = load_table(f.path(), &LabelColumn::Index(0)).unwrap();
        assert_eq!(by_name, by_index);
        assert_eq!(by_name.criterion_names, vec!["g1"]);
    }

    #[test]
    fn infer_scales_gain_and_cost() {
        let t = PerformanceTable::from_mapped_labels(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![2.0, 2.0], vec![8.0, 8.0], vec![5.0, 5.0]],
            vec![1, 2, 1],
            vec!["g1".into(), "g2".into()],
            vec![1, 2],
        )
        .unwrap();
        let scales =
            infer_scales(&t, &[2, 3], &[Direction::Gain, Direction::Cost]).unwrap();
        assert_eq!((scales[0].alpha, scales[0].beta), (2.0, 8.0));
        assert_eq!(scales[0].gamma, 2);
        // cost column [2,8,5] becomes [-2,-8,-5]
        assert_eq!((scales[1].alpha, scales[1].beta), (-8.0, -2.0));
    }

    #[test]
    fn infer_scales_rejects_constant_column() {
        let t = PerformanceTable::from_mapped_labels(
            vec!["a".into(), "b".into()],
            vec![vec![3.0, 1.0], vec![3.0, 2.0]],
            vec![1, 2],
            vec!["g1".into(), "g2".into()],
            vec![1, 2],
        )
        .unwrap();
        let err = infer_scales(&t, &[1, 1], &[Direction::Gain, Direction::Gain]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCriterion { .. }), "{err}");
    }

    #[test]
    fn breakpoints_are_equally_spaced() {
        let s = CriterionScale::new(0.0, 10.0, Direction::Gain, 4).unwrap();
        assert_eq!(
            (0..=4).map(|k| s.breakpoint(k)).collect::<Vec<_>>(),
            vec![0.0, 2.5, 5.0, 7.5, 10.0]
        );
    }

    #[test]
    fn folds_exact_divisibility() {
        let t = toy_table(vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2], 2);
        let plan = stratified_folds(&t, 5, 42).unwrap();
        for f in 0..5 {
            let fold = plan.fold_indices(f);
            assert_eq!(fold.len(), 2);
            let classes: Vec<usize> = fold.iter().map(|&i| t.labels[i]).collect();
            assert!(classes.contains(&1) && classes.contains(&2));
        }
    }

    #[test]
    fn folds_deterministic_for_seed() {
        let t = toy_table(vec![1, 2, 1, 2, 1, 2, 1, 2], 2);
        let a = stratified_folds(&t, 2, 7).unwrap();
        let b = stratified_folds(&t, 2, 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_folds(&t, 2, 8).unwrap();
        assert_ne!(a.assignments, c.assignments);
    }

    #[test]
    fn folds_reject_small_class() {
        let t = toy_table(vec![1, 1, 1, 2, 2, 2, 2, 2], 2);
        let err = stratified_folds(&t, 5, 0).unwrap_err();
        assert!(
            matches!(err, Error::ClassTooSmall { class: 1, size: 3, k: 5 }),
            "{err}"
        );
    }

    proptest! {
        #[test]
        fn folds_partition_and_stay_proportional(
            class_sizes in proptest::collection::vec(3usize..20, 2..4),
            k in 2usize..4,
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = class_sizes
                .iter()
                .enumerate()
                .flat_map(|(c, &n)| std::iter::repeat_n(c + 1, n))
                .collect();
            let t = toy_table(labels, class_sizes.len());
            let plan = stratified_folds(&t, k, seed).unwrap();
            // partition: every row lands in exactly one fold
            prop_assert!(plan.assignments.iter().all(|&f| f < k));
            for f in 0..k {
                prop_assert!(!plan.fold_indices(f).is_empty());
                for (c, &n) in class_sizes.iter().enumerate() {
                    let in_fold = plan
                        .fold_indices(f)
                        .iter()
                        .filter(|&&i| t.labels[i] == c + 1)
                        .count();
                    let exact = n as f64 / k as f64;
                    prop_assert!(
                        (in_fold as f64 - exact).abs() <= 1.0,
                        "class {} fold {} got {} of {} (k={})", c + 1, f, in_fold, n, k
                    );
                }
            }
        }

        #[test]
        fn orientation_is_involutive(x in proptest::num::f64::NORMAL) {
            let s = CriterionScale::new(-1.0, 1.0, Direction::Cost, 1).unwrap();
            prop_assert_eq!(s.orient(s.orient(x)), x);
        }
    }
}
