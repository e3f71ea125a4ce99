//! Choquet-integral baseline with 2-additive capacities.
//!
//! Training performances are rescaled criterion-by-criterion through the
//! empirical CDF of the training column, so every scaled value lands in
//! `[0, 1]` regardless of the raw units. The preference model is a Choquet
//! integral with a 2-additive capacity, fitted by the same
//! centroid-margin program as the main method: the capacity's Möbius
//! representation makes the integral linear in the weights, so one convex QP
//! over (Möbius masses, margin) suffices.

use serde::{Deserialize, Serialize};

use crate::dataset::{CriterionScale, Direction, PerformanceTable};
use crate::error::{Error, Result};
use crate::learner::{
    centroids_of_flats, quadratic_term, run_qp, scatter_of_flats, ClassCentroids, ScatterMatrix,
};
use crate::qpsolve::QpProblem;

/// Maximum criterion count for which the full 2-additive monotonicity row
/// family (2^(n-1) rows per criterion) is generated.
const MONOTONICITY_LIMIT: usize = 12;

/// Empirical-CDF rescaler for one criterion: stores the sorted training
/// values; `apply(v)` is the fraction of training values `<= v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfScaler {
    sorted: Vec<f64>,
}

impl EcdfScaler {
    pub fn fit(column: &[f64]) -> Result<EcdfScaler> {
        if column.is_empty() {
            return Err(Error::Invalid("cannot fit a scaler to an empty column".into()));
        }
        let mut sorted = column.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite training values"));
        Ok(EcdfScaler { sorted })
    }

    /// Fraction of training values `<= v`; a step function in `[0, 1]`.
    pub fn apply(&self, v: f64) -> f64 {
        let count = self.sorted.partition_point(|&x| x <= v);
        count as f64 / self.sorted.len() as f64
    }
}

/// Möbius representation of a 2-additive capacity: one mass per criterion
/// and one per unordered pair (lexicographic order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobiusWeights {
    pub singletons: Vec<f64>,
    pub pairs: Vec<f64>,
}

impl MobiusWeights {
    pub fn n_criteria(&self) -> usize {
        self.singletons.len()
    }

    pub fn dim(&self) -> usize {
        self.singletons.len() + self.pairs.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.singletons.clone();
        out.extend_from_slice(&self.pairs);
        out
    }

    fn pair_index(&self, j: usize, k: usize) -> usize {
        let n = self.n_criteria();
        debug_assert!(j < k && k < n);
        // Pairs (0,1), (0,2), ..., (n-2,n-1): offset of the j-block plus k.
        j * n - j * (j + 1) / 2 + (k - j - 1)
    }

    pub fn pair_mass(&self, j: usize, k: usize) -> f64 {
        self.pairs[self.pair_index(j, k)]
    }
}

/// Capacity value of a criterion subset: the sum of all singleton and pair
/// masses lying inside the subset.
pub fn capacity_from_mobius(m: &MobiusWeights, subset: &[usize]) -> f64 {
    let mut total = 0.0;
    for (pos, &i) in subset.iter().enumerate() {
        total += m.singletons[i];
        for &j in &subset[pos + 1..] {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            total += m.pair_mass(a, b);
        }
    }
    total
}

/// Feature vector of a scaled row: the n scaled values followed by the
/// n(n-1)/2 pairwise minima (pairs lexicographic). The Choquet integral of a
/// 2-additive capacity is the inner product of this vector with the Möbius
/// masses.
pub fn mobius_features(scaled: &[f64]) -> Vec<f64> {
    let n = scaled.len();
    let mut out = Vec::with_capacity(n + n * (n - 1) / 2);
    out.extend_from_slice(scaled);
    for j in 0..n {
        for k in (j + 1)..n {
            out.push(scaled[j].min(scaled[k]));
        }
    }
    out
}

/// Inner product of Möbius masses with a feature vector.
pub fn choquet_value(m: &MobiusWeights, features: &[f64]) -> Result<f64> {
    if features.len() != m.dim() {
        return Err(Error::Invalid(format!(
            "feature vector has {} entries, capacity expects {}",
            features.len(),
            m.dim()
        )));
    }
    Ok(m.flat().iter().zip(features).map(|(a, b)| a * b).sum())
}

/// All 2-additive monotonicity rows over the flat (singletons, pairs)
/// layout: for each criterion `i` and each nonempty subset `T` of the other
/// criteria, `m_i + sum_{j in T} m_ij >= 0`. The empty-subset rows are the
/// singleton lower bounds, enforced separately.
fn monotonicity_rows(n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if n > MONOTONICITY_LIMIT {
        return Err(Error::Guard(format!(
            "2-additive monotonicity rows grow as n * 2^(n-1); limited to \
             {MONOTONICITY_LIMIT} criteria, got {n}"
        )));
    }
    let probe = MobiusWeights {
        singletons: vec![0.0; n],
        pairs: vec![0.0; n * (n - 1) / 2],
    };
    let mut rows = Vec::new();
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        for mask in 1u64..(1 << others.len()) {
            let mut row = vec![0.0; dim];
            row[i] = 1.0;
            for (bit, &j) in others.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    row[n + probe.pair_index(a, b)] = 1.0;
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Assemble the capacity-fitting program: variables (m, d), objective
/// `-d + C1 m'Sm` (no squared-norm term), consecutive-centroid margin rows,
/// normalization `sum m = 1`, singleton masses and `d` nonnegative, and the
/// full 2-additive monotonicity family. Pair masses may be negative.
pub fn assemble_capacity_qp(
    centroids: &ClassCentroids,
    scatter: &ScatterMatrix,
    c1: f64,
    n: usize,
) -> Result<QpProblem> {
    let q = centroids.mu.len();
    if q < 2 {
        return Err(Error::TooFewClasses { found: q });
    }
    let dim = n + n * (n - 1) / 2;
    if centroids.mu[0].len() != dim {
        return Err(Error::Invalid(format!(
            "centroid dimension {} does not match {} criteria",
            centroids.mu[0].len(),
            n
        )));
    }
    let d_idx = dim;
    let mut c = vec![0.0; dim + 1];
    c[d_idx] = -1.0;

    let mut a_ineq = Vec::new();
    for k in 0..q - 1 {
        let mut row = vec![0.0; dim + 1];
        for ((r, &hi), &lo) in row.iter_mut().zip(&centroids.mu[k + 1]).zip(&centroids.mu[k]) {
            *r = hi - lo;
        }
        row[d_idx] = -1.0;
        a_ineq.push(row);
    }
    for mut row in monotonicity_rows(n, dim)? {
        row.push(0.0);
        a_ineq.push(row);
    }
    let b_ineq = vec![0.0; a_ineq.len()];

    let mut norm_row = vec![1.0; dim];
    norm_row.push(0.0);

    let mut lb = vec![f64::NEG_INFINITY; dim + 1];
    for bound in lb.iter_mut().take(n) {
        *bound = 0.0;
    }
    lb[d_idx] = 0.0;

    Ok(QpProblem {
        p: quadratic_term(scatter, c1, 0.0, dim, 1),
        c,
        a_ineq,
        b_ineq,
        a_eq: vec![norm_row],
        b_eq: vec![1.0],
        lb,
    })
}

/// A fitted Choquet sorting model.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoquetModel {
    pub scalers: Vec<EcdfScaler>,
    pub directions: Vec<Direction>,
    pub mobius: MobiusWeights,
    /// Achieved minimum centroid margin.
    pub d: f64,
    pub objective: f64,
    pub c1: f64,
    pub label_values: Vec<i64>,
}

impl ChoquetModel {
    pub fn n_criteria(&self) -> usize {
        self.scalers.len()
    }

    /// Rescale a raw performance row through the per-criterion CDFs.
    pub fn scale_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.scalers.len() {
            return Err(Error::Invalid(format!(
                "expected {} performances, got {}",
                self.scalers.len(),
                row.len()
            )));
        }
        Ok(self
            .scalers
            .iter()
            .zip(&self.directions)
            .zip(row)
            .map(|((s, dir), &v)| s.apply(dir.orient(v)))
            .collect())
    }

    /// Choquet value of a raw performance row.
    pub fn value(&self, row: &[f64]) -> Result<f64> {
        choquet_value(&self.mobius, &mobius_features(&self.scale_row(row)?))
    }
}

/// Fit the Choquet baseline on a labeled table. Cost criteria are negated
/// before CDF scaling, so larger is always better in the scaled space.
pub fn train_choquet(
    table: &PerformanceTable,
    directions: &[Direction],
    c1: f64,
) -> Result<ChoquetModel> {
    let n = table.n_criteria();
    if directions.len() != n {
        return Err(Error::Invalid(format!(
            "expected {} directions, got {}",
            n,
            directions.len()
        )));
    }
    let scalers: Vec<EcdfScaler> = (0..n)
        .map(|j| {
            let column: Vec<f64> = table
                .performances
                .iter()
                .map(|row| directions[j].orient(row[j]))
                .collect();
            EcdfScaler::fit(&column)
        })
        .collect::<Result<_>>()?;

    let features: Vec<Vec<f64>> = table
        .performances
        .iter()
        .map(|row| {
            let scaled: Vec<f64> = scalers
                .iter()
                .zip(directions)
                .zip(row)
                .map(|((s, dir), &v)| s.apply(dir.orient(v)))
                .collect();
            mobius_features(&scaled)
        })
        .collect();

    let centroids = centroids_of_flats(&features, &table.labels, table.q)?;
    let scatter = scatter_of_flats(&features, &table.labels, table.q);
    let problem = assemble_capacity_qp(&centroids, &scatter, c1, n)?;
    let solved = run_qp(&problem, &centroids)?;

    let mobius = MobiusWeights {
        singletons: solved.x[..n].iter().map(|&v| v.max(0.0)).collect(),
        pairs: solved.x[n..n + n * (n - 1) / 2].to_vec(),
    };
    let model = ChoquetModel {
        scalers,
        directions: directions.to_vec(),
        mobius,
        d: solved.d,
        objective: solved.objective,
        c1,
        label_values: table.label_values.clone(),
    };
    validate_capacity(&model.mobius)?;
    Ok(model)
}

/// Convenience: pull directions out of criterion scales (the CLI carries
/// them there).
pub fn directions_from_scales(scales: &[CriterionScale]) -> Vec<Direction> {
    scales.iter().map(|s| s.direction).collect()
}

fn validate_capacity(m: &MobiusWeights) -> Result<()> {
    let total: f64 = m.flat().iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Solver(format!(
            "capacity normalization drift: sum = {total}"
        )));
    }
    let n = m.n_criteria();
    let rows = monotonicity_rows(n, m.dim())?;
    let flat = m.flat();
    for row in rows {
        let lhs: f64 = row.iter().zip(&flat).map(|(a, b)| a * b).sum();
        if lhs < -1e-8 {
            return Err(Error::Solver(format!(
                "capacity monotonicity violated: {lhs}"
            )));
        }
    }
    Ok(())
}
