//! Fitting sorting models by convex quadratic programming.
//!
//! The trained object is a normalized, nonnegative weight vector over the
//! encoding of [`crate::encoding`]: marginal step weights only (plain model),
//! or marginal steps plus bonus/penalty weights for a set of interacting
//! criterion pairs (interactive model). Training maximizes the worst margin
//! between consecutive class centroids, regularized by a within-class scatter
//! term (`C1`) and a squared-norm term (`C2`).
//!
//! Interacting pairs are constrained to a matching — a criterion belongs to
//! at most one pair, and each pair is either a bonus or a penalty pair, never
//! both. Rather than solving a mixed-integer program, [`train`] enumerates
//! every signed matching (their count is small for desk-scale criterion
//! counts), solves one convex QP per structure with the inactive weights
//! pinned to zero, and keeps the best objective; ties go to the earlier
//! structure in enumeration order, so the empty structure wins when
//! interactions buy nothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CriterionScale, PerformanceTable};
use crate::encoding::{
    comprehensive_value, encode_alternative, ideal_encoding, EncodedAlternative, InteractionForm,
    WeightVector,
};
use crate::error::{Error, Result};
use crate::qpsolve::{self, QpProblem, QpStatus, SolverOptions};

/// Diagonal added to every assembled quadratic term: keeps analytically-PSD
/// matrices PSD through float assembly.
const ASSEMBLY_RIDGE: f64 = 1e-12;

/// Tolerance for flooring solver noise in extracted weights to zero.
const WEIGHT_FLOOR: f64 = 1e-9;

/// Largest criterion count for which the exhaustive signed-matching search
/// is allowed to run (13 criteria would already mean 19,674,097 structures).
const INTERACTION_SEARCH_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

/// One interacting criterion pair with its active sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPair {
    pub j: usize,
    pub k: usize,
    pub sign: Sign,
}

/// A signed matching over the criteria: which pairs interact and whether
/// each contributes a bonus or a penalty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionStructure {
    pub pairs: Vec<SignedPair>,
}

impl InteractionStructure {
    pub fn empty() -> Self {
        InteractionStructure { pairs: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Check the matching property against a criterion count.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut used = vec![false; n];
        for p in &self.pairs {
            if p.j >= p.k || p.k >= n {
                return Err(Error::Invalid(format!(
                    "invalid pair ({}, {}) for {} criteria",
                    p.j, p.k, n
                )));
            }
            if used[p.j] || used[p.k] {
                return Err(Error::Invalid(format!(
                    "criterion {} appears in two pairs",
                    if used[p.j] { p.j } else { p.k }
                )));
            }
            used[p.j] = true;
            used[p.k] = true;
        }
        Ok(())
    }
}

/// Which signs the structure search may assign to a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructurePolicy {
    Both,
    PositiveOnly,
    NegativeOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub form: InteractionForm,
    pub policy: StructurePolicy,
    pub c1: f64,
    pub c2: f64,
}

impl TrainConfig {
    pub fn plain(c1: f64, c2: f64) -> Self {
        TrainConfig {
            form: InteractionForm::None,
            policy: StructurePolicy::Both,
            c1,
            c2,
        }
    }
}

/// Per-class means of the encoded alternatives, in class order `1..=q`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCentroids {
    pub mu: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterMatrix {
    pub s: Vec<Vec<f64>>,
}

/// A trained sorting model.
#[derive(Clone, Debug, PartialEq)]
pub struct SortingModel {
    pub weights: WeightVector,
    pub structure: InteractionStructure,
    pub form: InteractionForm,
    pub scales: Vec<CriterionScale>,
    /// Achieved minimum centroid margin (the optimal `d`).
    pub d: f64,
    /// Optimal objective value of the selected program.
    pub objective: f64,
    pub c1: f64,
    pub c2: f64,
    /// Original label values, ascending; index `c-1` names class `c`.
    pub label_values: Vec<i64>,
}

impl SortingModel {
    pub fn n_criteria(&self) -> usize {
        self.scales.len()
    }

    pub fn encode(&self, row: &[f64]) -> Result<EncodedAlternative> {
        encode_alternative(&self.scales, row, self.form)
    }

    /// Comprehensive value of a raw performance row.
    pub fn value(&self, row: &[f64]) -> Result<f64> {
        comprehensive_value(&self.weights, &self.encode(row)?)
    }
}

/// Index arithmetic for the flattened interaction layout: plain blocks per
/// criterion, then per pair (lexicographic) the bonus block followed by the
/// penalty block, each row-major of shape `gamma_j x gamma_k`.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    gammas: Vec<usize>,
    plain_offsets: Vec<usize>,
    /// `(j, k, offset_of_positive_block)` per pair in lexicographic order.
    pair_blocks: Vec<(usize, usize, usize)>,
    dim: usize,
    with_pairs: bool,
}

impl Layout {
    pub(crate) fn new(gammas: &[usize], with_pairs: bool) -> Layout {
        let n = gammas.len();
        let mut plain_offsets = Vec::with_capacity(n);
        let mut off = 0;
        for &g in gammas {
            plain_offsets.push(off);
            off += g;
        }
        let mut pair_blocks = Vec::new();
        if with_pairs {
            for j in 0..n {
                for k in (j + 1)..n {
                    pair_blocks.push((j, k, off));
                    off += 2 * gammas[j] * gammas[k];
                }
            }
        }
        Layout {
            gammas: gammas.to_vec(),
            plain_offsets,
            pair_blocks,
            dim: off,
            with_pairs,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    fn plain(&self, j: usize, t: usize) -> usize {
        self.plain_offsets[j] + t
    }

    fn pair_offset(&self, j: usize, k: usize) -> usize {
        self.pair_blocks
            .iter()
            .find(|&&(pj, pk, _)| pj == j && pk == k)
            .map(|&(_, _, off)| off)
            .expect("pair not in layout")
    }

    fn eta_plus(&self, j: usize, k: usize, s: usize, t: usize) -> usize {
        self.pair_offset(j, k) + s * self.gammas[k] + t
    }

    fn eta_minus(&self, j: usize, k: usize, s: usize, t: usize) -> usize {
        self.pair_offset(j, k) + self.gammas[j] * self.gammas[k] + s * self.gammas[k] + t
    }

    fn weight_vector(&self, x: &[f64], form: InteractionForm) -> WeightVector {
        let n = self.gammas.len();
        let steps = (0..n)
            .map(|j| {
                (0..self.gammas[j])
                    .map(|t| floor_weight(x[self.plain(j, t)]))
                    .collect()
            })
            .collect();
        let (eta_plus, eta_minus) = if self.with_pairs {
            let mut plus = Vec::new();
            let mut minus = Vec::new();
            for &(j, k, _) in &self.pair_blocks {
                plus.push(
                    (0..self.gammas[j])
                        .map(|s| {
                            (0..self.gammas[k])
                                .map(|t| floor_weight(x[self.eta_plus(j, k, s, t)]))
                                .collect()
                        })
                        .collect(),
                );
                minus.push(
                    (0..self.gammas[j])
                        .map(|s| {
                            (0..self.gammas[k])
                                .map(|t| floor_weight(x[self.eta_minus(j, k, s, t)]))
                                .collect()
                        })
                        .collect(),
                );
            }
            (Some(plus), Some(minus))
        } else {
            (None, None)
        };
        WeightVector {
            marginal_steps: steps,
            eta_plus,
            eta_minus,
            form,
        }
    }
}

fn floor_weight(v: f64) -> f64 {
    if v < 0.0 && v > -WEIGHT_FLOOR {
        0.0
    } else {
        v
    }
}

/// Per-class mean encodings. Errors if any class `1..=q` has no members.
pub fn class_centroids(
    encoded: &[EncodedAlternative],
    labels: &[usize],
    q: usize,
) -> Result<ClassCentroids> {
    let flats: Vec<Vec<f64>> = encoded.iter().map(|e| e.flat()).collect();
    centroids_of_flats(&flats, labels, q)
}

pub(crate) fn centroids_of_flats(
    flats: &[Vec<f64>],
    labels: &[usize],
    q: usize,
) -> Result<ClassCentroids> {
    let dim = flats.first().map_or(0, |f| f.len());
    let mut mu = vec![vec![0.0; dim]; q];
    let mut counts = vec![0usize; q];
    for (f, &label) in flats.iter().zip(labels) {
        counts[label - 1] += 1;
        for (m, v) in mu[label - 1].iter_mut().zip(f) {
            *m += v;
        }
    }
    for (c, (m, &count)) in mu.iter_mut().zip(&counts).enumerate() {
        if count == 0 {
            return Err(Error::Invalid(format!("class {} has no members", c + 1)));
        }
        for v in m.iter_mut() {
            *v /= count as f64;
        }
    }
    Ok(ClassCentroids { mu })
}

/// Within-class scatter: sum over classes of sum over *ordered* member pairs
/// `(a, b)` of the outer product of `V(a) - V(b)` with itself. Ordered pairs
/// mean each unordered pair counts twice; the factor is absorbed by `C1`.
pub fn scatter_matrix(encoded: &[EncodedAlternative], labels: &[usize], q: usize) -> ScatterMatrix {
    let flats: Vec<Vec<f64>> = encoded.iter().map(|e| e.flat()).collect();
    scatter_of_flats(&flats, labels, q)
}

pub(crate) fn scatter_of_flats(flats: &[Vec<f64>], labels: &[usize], q: usize) -> ScatterMatrix {
    let dim = flats.first().map_or(0, |f| f.len());
    let mut s = vec![vec![0.0; dim]; dim];
    for class in 1..=q {
        let members: Vec<&Vec<f64>> = flats
            .iter()
            .zip(labels)
            .filter(|&(_, &l)| l == class)
            .map(|(f, _)| f)
            .collect();
        for a in &members {
            for b in &members {
                for i in 0..dim {
                    let di = a[i] - b[i];
                    if di == 0.0 {
                        continue;
                    }
                    for jj in 0..dim {
                        s[i][jj] += di * (a[jj] - b[jj]);
                    }
                }
            }
        }
    }
    ScatterMatrix { s }
}

pub(crate) fn quadratic_term(
    s: &ScatterMatrix,
    c1: f64,
    c2: f64,
    n_weights: usize,
    extra: usize,
) -> Vec<Vec<f64>> {
    let dim = n_weights + extra;
    let mut p = vec![vec![0.0; dim]; dim];
    for (i, (p_row, s_row)) in p.iter_mut().zip(&s.s).enumerate() {
        for (pv, &sv) in p_row.iter_mut().zip(s_row) {
            *pv = c1 * sv;
        }
        p_row[i] += c2;
    }
    for (i, row) in p.iter_mut().enumerate() {
        row[i] += ASSEMBLY_RIDGE;
    }
    p
}

/// Assemble the plain learning program: variables `(u, d)`, maximize `d`
/// (minimize `-d`) with quadratic penalty `C1 u'Su + C2 ||u||^2`, subject to
/// consecutive-centroid margins, normalization at the ideal point, `d >= 0`,
/// `u >= 0`.
pub fn assemble_margin_qp(
    centroids: &ClassCentroids,
    scatter: &ScatterMatrix,
    c1: f64,
    c2: f64,
    ideal: &EncodedAlternative,
) -> Result<QpProblem> {
    let q = centroids.mu.len();
    if q < 2 {
        return Err(Error::TooFewClasses { found: q });
    }
    let dim = ideal.dim();
    let d_idx = dim;
    let mut c = vec![0.0; dim + 1];
    c[d_idx] = -1.0;

    let mut a_ineq = Vec::with_capacity(q - 1);
    for k in 0..q - 1 {
        let mut row = vec![0.0; dim + 1];
        for ((r, &hi), &lo) in row.iter_mut().zip(&centroids.mu[k + 1]).zip(&centroids.mu[k]) {
            *r = hi - lo;
        }
        row[d_idx] = -1.0;
        a_ineq.push(row);
    }
    let b_ineq = vec![0.0; q - 1];

    let mut norm_row = ideal.flat();
    norm_row.push(0.0);

    Ok(QpProblem {
        p: quadratic_term(scatter, c1, c2, dim, 1),
        c,
        a_ineq,
        b_ineq,
        a_eq: vec![norm_row],
        b_eq: vec![1.0],
        lb: vec![0.0; dim + 1],
    })
}

/// Monotonicity rows for one interacting pair `(j, k)`, over the full
/// interaction layout (no `d` column). Row family one: for each piece `s` of
/// `g_j` and each prefix length `t` of `g_k`'s pieces,
/// `du^s_j + sum_{q<=t} (eta+^{s,q} - eta-^{s,q}) >= 0`; family two swaps the
/// roles of `j` and `k`. Together they make the fitted value function
/// non-decreasing in both raw performances of the pair.
pub fn monotonicity_rows(gammas: &[usize], pair: (usize, usize)) -> Vec<Vec<f64>> {
    let layout = Layout::new(gammas, true);
    let (j, k) = pair;
    let mut rows = Vec::with_capacity(gammas[j] * gammas[k] * 2);
    for s in 0..gammas[j] {
        for t in 0..gammas[k] {
            let mut row = vec![0.0; layout.dim()];
            row[layout.plain(j, s)] = 1.0;
            for q in 0..=t {
                row[layout.eta_plus(j, k, s, q)] = 1.0;
                row[layout.eta_minus(j, k, s, q)] = -1.0;
            }
            rows.push(row);
        }
    }
    for t in 0..gammas[k] {
        for s in 0..gammas[j] {
            let mut row = vec![0.0; layout.dim()];
            row[layout.plain(k, t)] = 1.0;
            for q in 0..=s {
                row[layout.eta_plus(j, k, q, t)] = 1.0;
                row[layout.eta_minus(j, k, q, t)] = -1.0;
            }
            rows.push(row);
        }
    }
    rows
}

/// Closed-form count of signed matchings on `n` criteria:
/// sum over m of n! / (m! (n-2m)!), where m is the number of pairs.
pub fn signed_matching_count(n: usize) -> u128 {
    let factorial = |k: usize| -> u128 { (1..=k as u128).product::<u128>().max(1) };
    (0..=n / 2)
        .map(|m| factorial(n) / (factorial(m) * factorial(n - 2 * m)))
        .sum()
}

/// Every signed matching on `n` criteria: the empty structure first, then
/// lexicographic by pair list, and within a pair list by sign vector
/// (positive before negative). Policies restrict the admissible signs.
pub fn enumerate_structures(n: usize, policy: StructurePolicy) -> Vec<InteractionStructure> {
    let mut matchings: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut current = Vec::new();
    let mut used = vec![false; n];
    collect_matchings(0, n, &mut used, &mut current, &mut matchings);
    matchings.sort();

    let mut out = Vec::new();
    for pairs in matchings {
        let m = pairs.len();
        match policy {
            StructurePolicy::Both => {
                for mask in 0..(1u32 << m) {
                    let signed = pairs
                        .iter()
                        .enumerate()
                        .map(|(i, &(j, k))| SignedPair {
                            j,
                            k,
                            // Most-significant bit first keeps sign vectors in
                            // lexicographic order with positive < negative.
                            sign: if mask >> (m - 1 - i) & 1 == 0 {
                                Sign::Positive
                            } else {
                                Sign::Negative
                            },
                        })
                        .collect();
                    out.push(InteractionStructure { pairs: signed });
                }
            }
            StructurePolicy::PositiveOnly | StructurePolicy::NegativeOnly => {
                let sign = if policy == StructurePolicy::PositiveOnly {
                    Sign::Positive
                } else {
                    Sign::Negative
                };
                out.push(InteractionStructure {
                    pairs: pairs.iter().map(|&(j, k)| SignedPair { j, k, sign }).collect(),
                });
            }
        }
    }
    out
}

fn collect_matchings(
    from: usize,
    n: usize,
    used: &mut Vec<bool>,
    current: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    let mut j = from;
    while j < n && used[j] {
        j += 1;
    }
    if j >= n {
        out.push(current.clone());
        return;
    }
    // Criterion j stays unpaired.
    collect_matchings(j + 1, n, used, current, out);
    // Criterion j pairs with a later free criterion.
    for k in (j + 1)..n {
        if used[k] {
            continue;
        }
        used[j] = true;
        used[k] = true;
        current.push((j, k));
        collect_matchings(j + 1, n, used, current, out);
        current.pop();
        used[j] = false;
        used[k] = false;
    }
}

/// Assemble the interactive learning program for one fixed structure:
/// variables `(u_int, d)` over the full interaction layout, with the weights
/// of non-structure pairs (and of the inactive sign within active pairs)
/// pinned to zero by equality rows.
pub fn assemble_interaction_qp(
    centroids: &ClassCentroids,
    scatter: &ScatterMatrix,
    c1: f64,
    c2: f64,
    structure: &InteractionStructure,
    gammas: &[usize],
    ideal: &EncodedAlternative,
) -> Result<QpProblem> {
    let q = centroids.mu.len();
    if q < 2 {
        return Err(Error::TooFewClasses { found: q });
    }
    structure.validate(gammas.len())?;
    let layout = Layout::new(gammas, true);
    let dim = layout.dim();
    if ideal.dim() != dim {
        return Err(Error::Invalid(
            "ideal encoding does not match the interaction layout".into(),
        ));
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
    for p in &structure.pairs {
        for mut row in monotonicity_rows(gammas, (p.j, p.k)) {
            row.push(0.0);
            a_ineq.push(row);
        }
    }
    let b_ineq = vec![0.0; a_ineq.len()];

    let mut a_eq = Vec::new();
    let mut norm_row = ideal.flat();
    norm_row.push(0.0);
    a_eq.push(norm_row);

    // Pin inactive interaction weights to zero.
    let active: std::collections::HashMap<(usize, usize), Sign> = structure
        .pairs
        .iter()
        .map(|p| ((p.j, p.k), p.sign))
        .collect();
    for j in 0..gammas.len() {
        for k in (j + 1)..gammas.len() {
            let sign = active.get(&(j, k)).copied();
            for s in 0..gammas[j] {
                for t in 0..gammas[k] {
                    if sign != Some(Sign::Positive) {
                        let mut row = vec![0.0; dim + 1];
                        row[layout.eta_plus(j, k, s, t)] = 1.0;
                        a_eq.push(row);
                    }
                    if sign != Some(Sign::Negative) {
                        let mut row = vec![0.0; dim + 1];
                        row[layout.eta_minus(j, k, s, t)] = 1.0;
                        a_eq.push(row);
                    }
                }
            }
        }
    }
    let mut b_eq = vec![0.0; a_eq.len()];
    b_eq[0] = 1.0;

    Ok(QpProblem {
        p: quadratic_term(scatter, c1, c2, dim, 1),
        c,
        a_ineq,
        b_ineq,
        a_eq,
        b_eq,
        lb: vec![0.0; dim + 1],
    })
}

/// Outcome of solving one program: optimal point plus its objective.
pub(crate) struct Solved {
    pub(crate) x: Vec<f64>,
    pub(crate) objective: f64,
    pub(crate) d: f64,
}

pub(crate) fn run_qp(problem: &QpProblem, margin_hint: &ClassCentroids) -> Result<Solved> {
    let sol = qpsolve::solve(problem, &SolverOptions::default())?;
    match sol.status {
        QpStatus::Optimal => {
            let d_idx = problem.n_vars() - 1;
            Ok(Solved {
                d: sol.x[d_idx],
                objective: sol.objective,
                x: sol.x,
            })
        }
        QpStatus::Infeasible => Err(diagnose_inconsistency(problem, margin_hint)),
        QpStatus::MaxIterations => Err(Error::Solver(format!(
            "did not converge within {} iterations (residual {:.2e})",
            sol.iterations,
            sol.kkt.max()
        ))),
    }
}

/// When the margin program is infeasible under `d >= 0`, re-solve with `d`
/// free to find out which consecutive-class margin is forced negative.
fn diagnose_inconsistency(problem: &QpProblem, centroids: &ClassCentroids) -> Error {
    let mut relaxed = problem.clone();
    let d_idx = relaxed.n_vars() - 1;
    relaxed.lb[d_idx] = f64::NEG_INFINITY;
    let q = centroids.mu.len();
    if let Ok(sol) = qpsolve::solve(&relaxed, &SolverOptions::default()) {
        if sol.status == QpStatus::Optimal {
            // Margin rows come first in assembly order.
            let mut worst = (0usize, f64::INFINITY);
            for k in 0..q - 1 {
                let row = &relaxed.a_ineq[k];
                let margin: f64 = row[..d_idx]
                    .iter()
                    .zip(&sol.x[..d_idx])
                    .map(|(a, b)| a * b)
                    .sum();
                if margin < worst.1 {
                    worst = (k, margin);
                }
            }
            return Error::Inconsistent {
                lower: worst.0 + 1,
                upper: worst.0 + 2,
            };
        }
    }
    Error::Inconsistent { lower: 1, upper: 2 }
}

/// Encode a table and fit a sorting model.
///
/// Plain form solves a single program. Interactive forms enumerate every
/// signed matching allowed by the policy, solve one QP each (in parallel),
/// and keep the lowest objective; exact ties resolve to the earlier
/// structure, so the empty structure beats do-nothing interactions.
pub fn train(
    table: &PerformanceTable,
    scales: &[CriterionScale],
    config: &TrainConfig,
) -> Result<SortingModel> {
    if scales.len() != table.n_criteria() {
        return Err(Error::Invalid(format!(
            "expected {} scales, got {}",
            table.n_criteria(),
            scales.len()
        )));
    }
    let encoded: Vec<EncodedAlternative> = table
        .performances
        .iter()
        .map(|row| encode_alternative(scales, row, config.form))
        .collect::<Result<_>>()?;
    let centroids = class_centroids(&encoded, &table.labels, table.q)?;
    let scatter = scatter_matrix(&encoded, &table.labels, table.q);
    let ideal = ideal_encoding(scales, config.form);
    let gammas: Vec<usize> = scales.iter().map(|s| s.gamma).collect();

    let (x, objective, d, structure) = if config.form == InteractionForm::None {
        let problem = assemble_margin_qp(&centroids, &scatter, config.c1, config.c2, &ideal)?;
        let solved = run_qp(&problem, &centroids)?;
        (solved.x, solved.objective, solved.d, InteractionStructure::empty())
    } else {
        let n = gammas.len();
        if n > INTERACTION_SEARCH_LIMIT {
            return Err(Error::Guard(format!(
                "interaction search over {n} criteria would enumerate {} signed \
                 matchings; the exhaustive search is limited to \
                 {INTERACTION_SEARCH_LIMIT} criteria",
                signed_matching_count(n)
            )));
        }
        let structures = enumerate_structures(gammas.len(), config.policy);
        let results: Vec<(usize, Result<Solved>)> = structures
            .par_iter()
            .enumerate()
            .map(|(idx, structure)| {
                let problem = assemble_interaction_qp(
                    &centroids,
                    &scatter,
                    config.c1,
                    config.c2,
                    structure,
                    &gammas,
                    &ideal,
                );
                (idx, problem.and_then(|p| run_qp(&p, &centroids)))
            })
            .collect();

        let mut best: Option<(usize, Solved)> = None;
        let mut first_err: Option<Error> = None;
        for (idx, result) in results {
            match result {
                Ok(solved) => {
                    let better = match &best {
                        None => true,
                        Some((_, b)) => solved.objective < b.objective,
                    };
                    if better {
                        best = Some((idx, solved));
                    }
                }
                Err(e) => {
                    if first_err.is_none() {
                        first_err = Some(e);
                    }
                }
            }
        }
        match best {
            Some((idx, solved)) => (
                solved.x,
                solved.objective,
                solved.d,
                structures[idx].clone(),
            ),
            None => return Err(first_err.unwrap_or(Error::Solver("no structure solved".into()))),
        }
    };

    let layout = Layout::new(&gammas, config.form.has_interactions());
    let weights = layout.weight_vector(&x, config.form);
    let model = SortingModel {
        weights,
        structure,
        form: config.form,
        scales: scales.to_vec(),
        d,
        objective,
        c1: config.c1,
        c2: config.c2,
        label_values: table.label_values.clone(),
    };
    validate_model(&model, &ideal)?;
    Ok(model)
}

/// Post-solve sanity: normalization at the ideal point, nonnegative weights,
/// nonnegative margin, and pair-monotonicity of the extracted weights.
fn validate_model(model: &SortingModel, ideal: &EncodedAlternative) -> Result<()> {
    let u_star = comprehensive_value(&model.weights, ideal)?;
    if (u_star - 1.0).abs() > 1e-8 {
        return Err(Error::Solver(format!(
            "normalization drift: U(ideal) = {u_star}"
        )));
    }
    if model.d < -1e-9 {
        return Err(Error::Solver(format!("negative margin d = {}", model.d)));
    }
    let flat = model.weights.flat();
    if let Some(w) = flat.iter().find(|&&w| w < 0.0) {
        return Err(Error::Solver(format!("negative weight {w} after floor")));
    }
    let gammas: Vec<usize> = model.scales.iter().map(|s| s.gamma).collect();
    if model.form.has_interactions() {
        let n = gammas.len();
        for j in 0..n {
            for k in (j + 1)..n {
                for row in monotonicity_rows(&gammas, (j, k)) {
                    let lhs: f64 = row.iter().zip(&flat).map(|(a, b)| a * b).sum();
                    if lhs < -1e-8 {
                        return Err(Error::Solver(format!(
                            "monotonicity violated on pair ({j},{k}): {lhs}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Maximum number of alternatives accepted by the pairwise-program oracles.
const ORACLE_SCALE_LIMIT: usize = 30;

/// Shared constraint skeleton of the two margin LPs: normalized nonnegative
/// weights (`u' V* = 1`, `u >= 0`), free `d`, objective `-d + ridge ||u||^2`.
/// The ridge makes the maximizing weight vector unique, so the two
/// formulations can be compared point-to-point.
fn margin_lp_base(dim: usize, extra_vars: usize, ridge: f64, ideal_flat: &[f64]) -> QpProblem {
    let total = dim + extra_vars + 1;
    let mut p = vec![vec![0.0; total]; total];
    for (i, row) in p.iter_mut().enumerate() {
        row[i] = ASSEMBLY_RIDGE + if i < dim { ridge } else { 0.0 };
    }
    let mut c = vec![0.0; total];
    c[total - 1] = -1.0;
    let mut norm_row = vec![0.0; total];
    norm_row[..dim].copy_from_slice(ideal_flat);
    let mut lb = vec![f64::NEG_INFINITY; total];
    for bound in lb.iter_mut().take(dim) {
        *bound = 0.0;
    }
    QpProblem {
        p,
        c,
        a_ineq: Vec::new(),
        b_ineq: Vec::new(),
        a_eq: vec![norm_row],
        b_eq: vec![1.0],
        lb,
    }
}

/// Maximize the worst *pairwise-average* margin: one free variable per
/// cross-pair of consecutive classes, constrained by `U(a) - U(b) >=
/// d(a,b)`, with each consecutive-class average of `d(a,b)` at least `d`.
/// Returns the optimal `d`.
pub fn solve_pairwise_margin_lp(
    encoded: &[EncodedAlternative],
    labels: &[usize],
    q: usize,
    ridge: f64,
) -> Result<f64> {
    if encoded.len() > ORACLE_SCALE_LIMIT {
        return Err(Error::Guard(format!(
            "pairwise oracle limited to {ORACLE_SCALE_LIMIT} alternatives, got {}",
            encoded.len()
        )));
    }
    let flats: Vec<Vec<f64>> = encoded.iter().map(|e| e.flat()).collect();
    let dim = flats.first().map_or(0, |f| f.len());
    let members: Vec<Vec<usize>> = (1..=q)
        .map(|c| {
            (0..labels.len())
                .filter(|&i| labels[i] == c)
                .collect::<Vec<_>>()
        })
        .collect();
    if members.iter().any(|m| m.is_empty()) {
        return Err(Error::Invalid("every class needs at least one member".into()));
    }

    let n_pairs: usize = (0..q - 1)
        .map(|s| members[s].len() * members[s + 1].len())
        .sum();
    let ideal_flat = vec![1.0; dim];
    let mut problem = margin_lp_base(dim, n_pairs, ridge, &ideal_flat);
    let total = dim + n_pairs + 1;
    let d_idx = total - 1;

    // U(a) - U(b) - d(a,b) >= 0, then one averaging row per class boundary.
    let mut pair_var = dim;
    for s in 0..q - 1 {
        let mut avg_row = vec![0.0; total];
        let count = (members[s].len() * members[s + 1].len()) as f64;
        for &a in &members[s + 1] {
            for &b in &members[s] {
                let mut row = vec![0.0; total];
                for i in 0..dim {
                    row[i] = flats[a][i] - flats[b][i];
                }
                row[pair_var] = -1.0;
                problem.a_ineq.push(row);
                problem.b_ineq.push(0.0);
                avg_row[pair_var] = 1.0 / count;
                pair_var += 1;
            }
        }
        avg_row[d_idx] = -1.0;
        problem.a_ineq.push(avg_row);
        problem.b_ineq.push(0.0);
    }

    let sol = qpsolve::solve(&problem, &SolverOptions::default())?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::Solver(format!("pairwise oracle: {:?}", sol.status)));
    }
    Ok(sol.x[d_idx])
}

/// Maximize the worst consecutive-centroid margin directly (the aggregated
/// counterpart of [`solve_pairwise_margin_lp`]); same weight space, same ridge.
pub fn solve_centroid_margin_lp(
    encoded: &[EncodedAlternative],
    labels: &[usize],
    q: usize,
    ridge: f64,
) -> Result<f64> {
    let centroids = class_centroids(encoded, labels, q)?;
    let dim = centroids.mu[0].len();
    let ideal_flat = vec![1.0; dim];
    let mut problem = margin_lp_base(dim, 0, ridge, &ideal_flat);
    let d_idx = dim;
    for k in 0..q - 1 {
        let mut row = vec![0.0; dim + 1];
        for ((r, &hi), &lo) in row.iter_mut().zip(&centroids.mu[k + 1]).zip(&centroids.mu[k]) {
            *r = hi - lo;
        }
        row[d_idx] = -1.0;
        problem.a_ineq.push(row);
        problem.b_ineq.push(0.0);
    }
    let sol = qpsolve::solve(&problem, &SolverOptions::default())?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::Solver(format!("centroid program: {:?}", sol.status)));
    }
    Ok(sol.x[d_idx])
}

/// One pair's reported interaction strength: the bonus or penalty the pair
/// contributes to the ideal alternative's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionValue {
    pub pair: (usize, usize),
    pub sign: Sign,
    pub phi: f64,
}

/// Interpretable summary: criterion weights and interaction strengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// Per criterion: total marginal weight (value of the marginal at its
    /// best point), summing to 1 with the interaction terms.
    pub criterion_weights: Vec<f64>,
    pub interactions: Vec<InteractionValue>,
}

/// Summarize a model as criterion weights `w_j = sum_t du^t_j` plus, per
/// active pair, the signed interaction value at the ideal alternative
/// (`+sum eta_plus` for bonus pairs, `-sum eta_minus` for penalty pairs).
pub fn report_model(model: &SortingModel) -> ModelReport {
    let criterion_weights = model
        .weights
        .marginal_steps
        .iter()
        .map(|steps| steps.iter().sum())
        .collect();
    let mut interactions = Vec::new();
    if let (Some(plus), Some(minus)) = (&model.weights.eta_plus, &model.weights.eta_minus) {
        let n = model.n_criteria();
        let mut pair_idx = 0usize;
        for j in 0..n {
            for k in (j + 1)..n {
                let pos: f64 = plus[pair_idx].iter().flatten().sum();
                let neg: f64 = minus[pair_idx].iter().flatten().sum();
                if let Some(p) = model.structure.pairs.iter().find(|p| p.j == j && p.k == k) {
                    interactions.push(InteractionValue {
                        pair: (j, k),
                        sign: p.sign,
                        phi: if p.sign == Sign::Positive { pos } else { -neg },
                    });
                }
                pair_idx += 1;
            }
        }
    }
    ModelReport {
        criterion_weights,
        interactions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Direction;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_scales(n: usize, gamma: usize) -> Vec<CriterionScale> {
        (0..n)
            .map(|_| CriterionScale::new(0.0, 1.0, Direction::Gain, gamma).unwrap())
            .collect()
    }

    fn table(rows: Vec<Vec<f64>>, labels: Vec<usize>, q: usize) -> PerformanceTable {
        let n = rows.len();
        let m = rows[0].len();
        PerformanceTable::from_mapped_labels(
            (0..n).map(|i| format!("a{}", i + 1)).collect(),
            rows,
            labels,
            (0..m).map(|j| format!("g{}", j + 1)).collect(),
            (1..=q as i64).collect(),
        )
        .unwrap()
    }

    fn encode_all(
        t: &PerformanceTable,
        scales: &[CriterionScale],
        form: InteractionForm,
    ) -> Vec<EncodedAlternative> {
        t.performances
            .iter()
            .map(|r| encode_alternative(scales, r, form).unwrap())
            .collect()
    }

    #[test]
    fn centroids_are_class_means() {
        let scales = unit_scales(2, 1);
        let t = table(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![1, 1, 2],
            2,
        );
        let enc = encode_all(&t, &scales, InteractionForm::None);
        let c = class_centroids(&enc, &t.labels, 2).unwrap();
        assert_eq!(c.mu.len(), 2);
        assert_eq!(c.mu[0], vec![0.5, 0.5]);
        assert_eq!(c.mu[1], vec![1.0, 1.0]); // singleton class
    }

    #[test]
    fn centroids_reject_empty_class() {
        let scales = unit_scales(1, 1);
        let t = table(vec![vec![0.0], vec![1.0]], vec![1, 1], 2);
        let enc = encode_all(&t, &scales, InteractionForm::None);
        assert!(class_centroids(&enc, &t.labels, 2).is_err());
    }

    #[test]
    fn scatter_of_two_point_class() {
        let scales = unit_scales(2, 1);
        let t = table(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1, 1], 2);
        // Force both rows into one class for the scatter computation.
        let enc = encode_all(&t, &scales, InteractionForm::None);
        let s = scatter_matrix(&enc, &[1, 1], 1);
        assert_eq!(s.s, vec![vec![2.0, -2.0], vec![-2.0, 2.0]]);
    }

    #[test]
    fn scatter_of_singletons_is_zero() {
        let scales = unit_scales(2, 1);
        let t = table(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1, 2], 2);
        let enc = encode_all(&t, &scales, InteractionForm::None);
        let s = scatter_matrix(&enc, &t.labels, 2);
        assert!(s.s.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn margin_qp_has_one_row_per_class_boundary() {
        let scales = unit_scales(1, 1);
        let t = table(
            vec![vec![0.0], vec![0.4], vec![0.6], vec![1.0]],
            vec![1, 2, 2, 3],
            3,
        );
        let enc = encode_all(&t, &scales, InteractionForm::None);
        let centroids = class_centroids(&enc, &t.labels, 3).unwrap();
        let scatter = scatter_matrix(&enc, &t.labels, 3);
        let ideal = ideal_encoding(&scales, InteractionForm::None);
        let p = assemble_margin_qp(&centroids, &scatter, 1.0, 1.0, &ideal).unwrap();
        assert_eq!(p.a_ineq.len(), 2);
        assert_eq!(p.a_eq.len(), 1);
    }

    fn two_point_toy() -> (PerformanceTable, Vec<CriterionScale>) {
        (
            table(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![1, 2], 2),
            unit_scales(2, 1),
        )
    }

    #[test]
    fn plain_training_on_separable_toy() {
        let (t, scales) = two_point_toy();
        let model = train(&t, &scales, &TrainConfig::plain(1.0, 1.0)).unwrap();
        assert_relative_eq!(model.d, 1.0, epsilon = 1e-7);
        assert_relative_eq!(model.weights.marginal_steps[0][0], 0.5, epsilon = 1e-7);
        assert_relative_eq!(model.weights.marginal_steps[1][0], 0.5, epsilon = 1e-7);
        assert_relative_eq!(model.objective, -0.5, epsilon = 1e-7);
        assert!(model.structure.is_empty());
    }

    #[test]
    fn margins_meet_d_at_optimum() {
        let scales = unit_scales(2, 2);
        let t = table(
            vec![
                vec![0.1, 0.2],
                vec![0.3, 0.1],
                vec![0.5, 0.6],
                vec![0.7, 0.4],
                vec![0.9, 0.8],
                vec![0.8, 1.0],
            ],
            vec![1, 1, 2, 2, 3, 3],
            3,
        );
        let model = train(&t, &scales, &TrainConfig::plain(0.1, 0.1)).unwrap();
        let enc = encode_all(&t, &scales, InteractionForm::None);
        let centroids = class_centroids(&enc, &t.labels, 3).unwrap();
        let w = model.weights.flat();
        for k in 0..2 {
            let margin: f64 = centroids.mu[k + 1]
                .iter()
                .zip(&centroids.mu[k])
                .zip(&w)
                .map(|((hi, lo), wi)| (hi - lo) * wi)
                .sum();
            assert!(margin >= model.d - 1e-8, "margin {margin} < d {}", model.d);
        }
    }

    #[test]
    fn inconsistent_data_is_reported_with_the_margin() {
        // Class 2 scores strictly worse than class 1: no nonnegative margin.
        let scales = unit_scales(1, 1);
        let t = table(vec![vec![1.0], vec![0.0]], vec![1, 2], 2);
        let err = train(&t, &scales, &TrainConfig::plain(1.0, 1.0)).unwrap_err();
        assert!(
            matches!(err, Error::Inconsistent { lower: 1, upper: 2 }),
            "{err}"
        );
    }

    #[test]
    fn norm_shrinks_as_c2_grows() {
        let scales = unit_scales(2, 2);
        let t = table(
            vec![vec![0.2, 0.1], vec![0.4, 0.5], vec![0.9, 0.7], vec![0.6, 1.0]],
            vec![1, 1, 2, 2],
            2,
        );
        let mut last = f64::INFINITY;
        for c2 in [0.01, 0.1, 1.0, 10.0] {
            let model = train(&t, &scales, &TrainConfig::plain(0.5, c2)).unwrap();
            let norm: f64 = model.weights.flat().iter().map(|w| w * w).sum();
            assert!(norm <= last + 1e-9, "norm grew: {norm} > {last} at C2={c2}");
            last = norm;
        }
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for n in 2..=8 {
            assert_eq!(
                enumerate_structures(n, StructurePolicy::Both).len() as u128,
                signed_matching_count(n),
                "n = {n}"
            );
        }
        assert_eq!(
            (2..=8).map(signed_matching_count).collect::<Vec<_>>(),
            vec![3, 7, 25, 81, 331, 1303, 5937]
        );
    }

    #[test]
    fn interaction_search_refuses_oversized_problems() {
        let n = 13;
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..n).map(|j| ((i * n + j) % 7) as f64).collect())
            .collect();
        let table = PerformanceTable::from_mapped_labels(
            (0..4).map(|i| format!("a{i}")).collect(),
            rows,
            vec![1, 1, 2, 2],
            (0..n).map(|j| format!("g{j}")).collect(),
            vec![1, 2],
        )
        .unwrap();
        let scales: Vec<CriterionScale> = (0..n)
            .map(|_| CriterionScale::new(0.0, 6.0, Direction::Gain, 1).unwrap())
            .collect();
        let config = TrainConfig {
            form: InteractionForm::Product,
            policy: StructurePolicy::Both,
            c1: 0.1,
            c2: 0.1,
        };
        let err = train(&table, &scales, &config).unwrap_err();
        assert!(matches!(err, Error::Guard(_)), "{err}");
        assert!(err.to_string().contains("19674097"), "{err}");
    }

    #[test]
    fn enumeration_counts_and_order() {
        assert_eq!(enumerate_structures(2, StructurePolicy::Both).len(), 3);
        let s3 = enumerate_structures(3, StructurePolicy::Both);
        assert_eq!(s3.len(), 7);
        assert!(s3[0].is_empty());
        let described: Vec<Vec<(usize, usize, Sign)>> = s3
            .iter()
            .map(|s| s.pairs.iter().map(|p| (p.j, p.k, p.sign)).collect())
            .collect();
        assert_eq!(
            described,
            vec![
                vec![],
                vec![(0, 1, Sign::Positive)],
                vec![(0, 1, Sign::Negative)],
                vec![(0, 2, Sign::Positive)],
                vec![(0, 2, Sign::Negative)],
                vec![(1, 2, Sign::Positive)],
                vec![(1, 2, Sign::Negative)],
            ]
        );
        assert_eq!(enumerate_structures(4, StructurePolicy::Both).len(), 25);
        assert_eq!(enumerate_structures(3, StructurePolicy::PositiveOnly).len(), 4);
        let neg = enumerate_structures(2, StructurePolicy::NegativeOnly);
        assert_eq!(neg.len(), 2);
        assert!(neg[1].pairs.iter().all(|p| p.sign == Sign::Negative));
    }

    /// Independent matching generator: filter all subsets of the pair set.
    fn brute_force_signed_matchings(n: usize) -> usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| ((j + 1)..n).map(move |k| (j, k)))
            .collect();
        let mut count = 0usize;
        for mask in 0..(1u64 << pairs.len()) {
            let chosen: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|&(i, _)| mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            let mut used = vec![false; n];
            let ok = chosen.iter().all(|&(j, k)| {
                if used[j] || used[k] {
                    false
                } else {
                    used[j] = true;
                    used[k] = true;
                    true
                }
            });
            if ok {
                count += 1 << chosen.len();
            }
        }
        count
    }

    #[test]
    fn enumeration_matches_brute_force_up_to_six() {
        for n in 1..=6 {
            assert_eq!(
                enumerate_structures(n, StructurePolicy::Both).len(),
                brute_force_signed_matchings(n),
                "n={n}"
            );
        }
    }

    #[test]
    fn monotonicity_rows_single_cell() {
        let rows = monotonicity_rows(&[1, 1], (0, 1));
        // Layout: [du_0, du_1, eta+_{01}, eta-_{01}]
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], vec![1.0, 0.0, 1.0, -1.0]);
        assert_eq!(rows[1], vec![0.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn monotonicity_rows_count_two_by_two() {
        assert_eq!(monotonicity_rows(&[2, 2], (0, 1)).len(), 8);
    }

    #[test]
    fn empty_structure_matches_plain_objective() {
        let (t, scales) = two_point_toy();
        let enc = encode_all(&t, &scales, InteractionForm::Product);
        let centroids = class_centroids(&enc, &t.labels, 2).unwrap();
        let scatter = scatter_matrix(&enc, &t.labels, 2);
        let ideal = ideal_encoding(&scales, InteractionForm::Product);
        let qp = assemble_interaction_qp(
            &centroids,
            &scatter,
            1.0,
            1.0,
            &InteractionStructure::empty(),
            &[1, 1],
            &ideal,
        )
        .unwrap();
        let sol = qpsolve::solve(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);

        let plain = train(&t, &scales, &TrainConfig::plain(1.0, 1.0)).unwrap();
        assert_relative_eq!(sol.objective, plain.objective, epsilon = 1e-7);
    }

    #[test]
    fn single_positive_pair_pins_the_penalty_weight() {
        let (t, scales) = two_point_toy();
        let enc = encode_all(&t, &scales, InteractionForm::Product);
        let centroids = class_centroids(&enc, &t.labels, 2).unwrap();
        let scatter = scatter_matrix(&enc, &t.labels, 2);
        let ideal = ideal_encoding(&scales, InteractionForm::Product);
        let structure = InteractionStructure {
            pairs: vec![SignedPair {
                j: 0,
                k: 1,
                sign: Sign::Positive,
            }],
        };
        let qp = assemble_interaction_qp(&centroids, &scatter, 1.0, 1.0, &structure, &[1, 1], &ideal).unwrap();
        // Equalities: normalization + eta- pin (eta+ left free).
        assert_eq!(qp.a_eq.len(), 2);
        let sol = qpsolve::solve(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        // eta- is the fourth layout coordinate.
        assert!(sol.x[3].abs() <= 1e-9);
        // Normalization at the optimum: sum du + eta+ - eta- = 1.
        assert_relative_eq!(
            sol.x[0] + sol.x[1] + sol.x[2] - sol.x[3],
            1.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn product_form_on_separable_toy_keeps_full_margin() {
        // The squared-norm term favors structures with more nonzero
        // coordinates (the mass spreads), so an interaction pair may win
        // even on plainly separable data; the margin must stay maximal and
        // the chosen objective must be the enumeration minimum.
        let (t, scales) = two_point_toy();
        let config = TrainConfig {
            form: InteractionForm::Product,
            policy: StructurePolicy::Both,
            c1: 1.0,
            c2: 1.0,
        };
        let model = train(&t, &scales, &config).unwrap();
        assert_relative_eq!(model.d, 1.0, epsilon = 1e-7);

        let enc = encode_all(&t, &scales, InteractionForm::Product);
        let centroids = class_centroids(&enc, &t.labels, 2).unwrap();
        let scatter = scatter_matrix(&enc, &t.labels, 2);
        let ideal = ideal_encoding(&scales, InteractionForm::Product);
        let empty = assemble_interaction_qp(
            &centroids,
            &scatter,
            1.0,
            1.0,
            &InteractionStructure::empty(),
            &[1, 1],
            &ideal,
        )
        .unwrap();
        let sol = qpsolve::solve(&empty, &SolverOptions::default()).unwrap();
        assert!(model.objective <= sol.objective + 1e-9);
    }

    fn xor_table() -> (PerformanceTable, Vec<CriterionScale>) {
        (
            table(
                vec![
                    vec![0.0, 0.0],
                    vec![1.0, 1.0],
                    vec![1.0, 0.0],
                    vec![0.0, 1.0],
                ],
                vec![1, 1, 2, 2],
                2,
            ),
            unit_scales(2, 1),
        )
    }

    #[test]
    fn xor_pattern_needs_a_penalty_pair() {
        let (t, scales) = xor_table();
        let config = TrainConfig {
            form: InteractionForm::Product,
            policy: StructurePolicy::Both,
            c1: 1e-3,
            c2: 1e-3,
        };
        let model = train(&t, &scales, &config).unwrap();
        assert_eq!(model.structure.pairs.len(), 1);
        assert_eq!(model.structure.pairs[0].sign, Sign::Negative);
        assert!(model.d > 0.1, "expected positive margin, got {}", model.d);

        // The empty structure cannot separate these classes at all.
        let enc = encode_all(&t, &scales, InteractionForm::Product);
        let centroids = class_centroids(&enc, &t.labels, 2).unwrap();
        let scatter = scatter_matrix(&enc, &t.labels, 2);
        let ideal = ideal_encoding(&scales, InteractionForm::Product);
        let empty = assemble_interaction_qp(
            &centroids,
            &scatter,
            1e-3,
            1e-3,
            &InteractionStructure::empty(),
            &[1, 1],
            &ideal,
        )
        .unwrap();
        let sol = qpsolve::solve(&empty, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(
            model.objective < sol.objective - 1e-4,
            "penalty structure {} should beat empty {}",
            model.objective,
            sol.objective
        );
    }

    #[test]
    fn structure_choice_survives_randomized_re_solve() {
        let (t, scales) = xor_table();
        let config = TrainConfig {
            form: InteractionForm::Minimum,
            policy: StructurePolicy::Both,
            c1: 0.01,
            c2: 0.01,
        };
        let model = train(&t, &scales, &config).unwrap();

        let enc = encode_all(&t, &scales, InteractionForm::Minimum);
        let centroids = class_centroids(&enc, &t.labels, 2).unwrap();
        let scatter = scatter_matrix(&enc, &t.labels, 2);
        let ideal = ideal_encoding(&scales, InteractionForm::Minimum);
        let structures = enumerate_structures(2, StructurePolicy::Both);
        let mut order: Vec<usize> = (0..structures.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
        let mut best: Option<(usize, f64)> = None;
        for &idx in &order {
            let p = assemble_interaction_qp(
                &centroids,
                &scatter,
                0.01,
                0.01,
                &structures[idx],
                &[1, 1],
                &ideal,
            )
            .unwrap();
            let sol = qpsolve::solve(&p, &SolverOptions::default()).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal);
            let better = match best {
                None => true,
                Some((bi, bo)) => sol.objective < bo || (sol.objective == bo && idx < bi),
            };
            if better {
                best = Some((idx, sol.objective));
            }
        }
        assert_eq!(structures[best.unwrap().0], model.structure);
    }

    #[test]
    fn pairwise_and_centroid_programs_agree_on_toys() {
        let scales = unit_scales(2, 1);
        // Separable two-class set.
        let t = table(
            vec![vec![0.1, 0.2], vec![0.2, 0.1], vec![0.8, 0.9], vec![0.9, 0.7]],
            vec![1, 1, 2, 2],
            2,
        );
        let enc = encode_all(&t, &scales, InteractionForm::None);
        let d0 = solve_pairwise_margin_lp(&enc, &t.labels, 2, 1e-9).unwrap();
        let d1 = solve_centroid_margin_lp(&enc, &t.labels, 2, 1e-9).unwrap();
        assert!((d0 - d1).abs() <= 1e-5, "d0={d0} d1={d1}");
        assert!(d0 > 0.0);

        // Interleaved classes: the best margin is negative, and both
        // programs admit it (no d >= 0 bound here).
        let t = table(vec![vec![1.0], vec![0.0]], vec![1, 2], 2);
        let scales1 = unit_scales(1, 1);
        let enc = encode_all(&t, &scales1, InteractionForm::None);
        let d0 = solve_pairwise_margin_lp(&enc, &t.labels, 2, 1e-9).unwrap();
        let d1 = solve_centroid_margin_lp(&enc, &t.labels, 2, 1e-9).unwrap();
        assert!(d0 < 0.0, "expected negative margin, got {d0}");
        assert!((d0 - d1).abs() <= 1e-5, "d0={d0} d1={d1}");
    }

    #[test]
    fn pairwise_and_centroid_programs_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..100 {
            let n = rng.random_range(1..=3usize);
            let gamma = rng.random_range(1..=2usize);
            let q = rng.random_range(2..=3usize);
            let n_alt = rng.random_range(q.max(4)..=10usize);
            let scales = unit_scales(n, gamma);
            let rows: Vec<Vec<f64>> = (0..n_alt)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let mut labels: Vec<usize> = (0..n_alt)
                .map(|i| if i < q { i + 1 } else { rng.random_range(1..=q) })
                .collect();
            labels.shuffle(&mut rng);
            let enc: Vec<EncodedAlternative> = rows
                .iter()
                .map(|r| encode_alternative(&scales, r, InteractionForm::None).unwrap())
                .collect();
            let d0 = solve_pairwise_margin_lp(&enc, &labels, q, 1e-9).unwrap();
            let d1 = solve_centroid_margin_lp(&enc, &labels, q, 1e-9).unwrap();
            assert!(
                (d0 - d1).abs() <= 1e-5,
                "trial {trial}: d0={d0} d1={d1} (diff {})",
                (d0 - d1).abs()
            );
        }
    }

    #[test]
    fn single_pair_oracle_margin_is_the_value_difference() {
        let scales = unit_scales(2, 1);
        let t = table(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![1, 2], 2);
        let enc = encode_all(&t, &scales, InteractionForm::None);
        let d0 = solve_pairwise_margin_lp(&enc, &t.labels, 2, 1e-9).unwrap();
        // U(a*) = 1 and U at the origin is 0, so the unique cross-pair gives
        // exactly the full value range.
        assert_relative_eq!(d0, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn report_sums_steps_into_weights() {
        let steps = vec![
            vec![0.1724, 0.2474],
            vec![0.0806, 0.1345],
            vec![0.0612, 0.1345],
            vec![0.0557, 0.1137],
        ];
        let model = SortingModel {
            weights: WeightVector {
                marginal_steps: steps,
                eta_plus: None,
                eta_minus: None,
                form: InteractionForm::None,
            },
            structure: InteractionStructure::empty(),
            form: InteractionForm::None,
            scales: unit_scales(4, 2),
            d: 0.0,
            objective: 0.0,
            c1: 1.0,
            c2: 1.0,
            label_values: vec![1, 2],
        };
        let report = report_model(&model);
        let expected = [
            0.1724 + 0.2474,
            0.0806 + 0.1345,
            0.0612 + 0.1345,
            0.0557 + 0.1137,
        ];
        assert_eq!(report.criterion_weights, expected);
        assert!(report.interactions.is_empty());
    }

    #[test]
    fn report_interaction_value_is_signed_eta_sum() {
        let mut eta_plus = vec![vec![vec![0.0; 2]; 2]; 6];
        let mut eta_minus = vec![vec![vec![0.0; 2]; 2]; 6];
        // Pairs lexicographic over 4 criteria: (0,1) (0,2) (0,3) (1,2) (1,3) (2,3).
        eta_minus[2][0][0] = 0.1298; // pair (0,3)
        eta_minus[4][0][0] = 0.1526; // pair (1,3)
        eta_minus[4][1][0] = 0.2365;
        eta_plus[0][0][0] = 0.05; // pair (0,1), inactive in the structure
        let model = SortingModel {
            weights: WeightVector {
                marginal_steps: vec![vec![0.5, 0.0]; 4],
                eta_plus: Some(eta_plus),
                eta_minus: Some(eta_minus),
                form: InteractionForm::Product,
            },
            structure: InteractionStructure {
                pairs: vec![
                    SignedPair { j: 0, k: 3, sign: Sign::Negative },
                    SignedPair { j: 1, k: 3, sign: Sign::Negative },
                ],
            },
            form: InteractionForm::Product,
            scales: unit_scales(4, 2),
            d: 0.0,
            objective: 0.0,
            c1: 1.0,
            c2: 1.0,
            label_values: vec![1, 2],
        };
        // Structure invalid as a matching (criterion 3 twice) is fine for a
        // pure reporting test; validate() is not called here.
        let report = report_model(&model);
        assert_eq!(report.interactions.len(), 2);
        assert_relative_eq!(report.interactions[0].phi, -0.1298, epsilon = 1e-12);
        assert_relative_eq!(
            report.interactions[1].phi,
            -(0.1526 + 0.2365),
            epsilon = 1e-12
        );
    }

    /// Build a weight vector that satisfies all pair-monotonicity rows by
    /// construction: sample eta on the pairs of a signed matching (zero
    /// elsewhere, mirroring trained models), then give each marginal step
    /// enough weight to cover the worst penalty prefix of its pair.
    fn monotone_weights(
        rng: &mut ChaCha8Rng,
        gammas: &[usize],
        structure: &InteractionStructure,
        form: InteractionForm,
    ) -> WeightVector {
        let n = gammas.len();
        let active: std::collections::HashSet<(usize, usize)> =
            structure.pairs.iter().map(|p| (p.j, p.k)).collect();
        let mut eta_plus = Vec::new();
        let mut eta_minus = Vec::new();
        let mut pairs = Vec::new();
        for j in 0..n {
            for k in (j + 1)..n {
                pairs.push((j, k));
                let on = active.contains(&(j, k));
                let sample = |rng: &mut ChaCha8Rng| if on { rng.random_range(0.0..0.3) } else { 0.0 };
                eta_plus.push(
                    (0..gammas[j])
                        .map(|_| (0..gammas[k]).map(|_| sample(rng)).collect())
                        .collect::<Vec<Vec<f64>>>(),
                );
                eta_minus.push(
                    (0..gammas[j])
                        .map(|_| (0..gammas[k]).map(|_| sample(rng)).collect())
                        .collect::<Vec<Vec<f64>>>(),
                );
            }
        }
        let mut steps: Vec<Vec<f64>> = gammas
            .iter()
            .map(|&g| (0..g).map(|_| rng.random_range(0.0..0.5)).collect())
            .collect();
        // Raise steps until every monotonicity row holds; with a matching,
        // each criterion is constrained by at most one pair.
        for (pair_idx, &(j, k)) in pairs.iter().enumerate() {
            for s in 0..gammas[j] {
                let mut worst: f64 = 0.0;
                let mut prefix = 0.0;
                for t in 0..gammas[k] {
                    prefix += eta_minus[pair_idx][s][t] - eta_plus[pair_idx][s][t];
                    worst = worst.max(prefix);
                }
                steps[j][s] = steps[j][s].max(worst + 1e-9);
            }
            for t in 0..gammas[k] {
                let mut worst: f64 = 0.0;
                let mut prefix = 0.0;
                for s in 0..gammas[j] {
                    prefix += eta_minus[pair_idx][s][t] - eta_plus[pair_idx][s][t];
                    worst = worst.max(prefix);
                }
                steps[k][t] = steps[k][t].max(worst + 1e-9);
            }
        }
        WeightVector {
            marginal_steps: steps,
            eta_plus: Some(eta_plus),
            eta_minus: Some(eta_minus),
            form,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn monotone_weights_preserve_dominance(
            seed in any::<u64>(),
            form in prop_oneof![Just(InteractionForm::Product), Just(InteractionForm::Minimum)],
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=3usize);
            let gamma = rng.random_range(1..=3usize);
            let gammas = vec![gamma; n];
            let scales = unit_scales(n, gamma);
            let structures = enumerate_structures(n, StructurePolicy::Both);
            let structure = structures[rng.random_range(0..structures.len())].clone();
            let w = monotone_weights(&mut rng, &gammas, &structure, form);

            // Sanity: the construction satisfies the row family.
            let flat = w.flat();
            for j in 0..n {
                for k in (j + 1)..n {
                    for row in monotonicity_rows(&gammas, (j, k)) {
                        let lhs: f64 = row.iter().zip(&flat).map(|(a, b)| a * b).sum();
                        prop_assert!(lhs >= -1e-12);
                    }
                }
            }

            for _ in 0..50 {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let b: Vec<f64> = a
                    .iter()
                    .map(|&v| (v - rng.random_range(0.0..0.5)).max(0.0))
                    .collect();
                let ea = encode_alternative(&scales, &a, form).unwrap();
                let eb = encode_alternative(&scales, &b, form).unwrap();
                let ua = comprehensive_value(&w, &ea).unwrap();
                let ub = comprehensive_value(&w, &eb).unwrap();
                prop_assert!(ua >= ub - 1e-10, "dominance broken: U({a:?})={ua} < U({b:?})={ub}");
            }
        }

        #[test]
        fn scatter_is_symmetric_and_psd(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_alt = rng.random_range(2..=8usize);
            let rows: Vec<Vec<f64>> = (0..n_alt)
                .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect();
            let labels: Vec<usize> = (0..n_alt).map(|_| rng.random_range(1..=2usize)).collect();
            let scales = unit_scales(2, 2);
            let enc: Vec<EncodedAlternative> = rows
                .iter()
                .map(|r| encode_alternative(&scales, r, InteractionForm::None).unwrap())
                .collect();
            let s = scatter_matrix(&enc, &labels, 2);
            let dim = s.s.len();
            for i in 0..dim {
                for j in 0..dim {
                    prop_assert!((s.s[i][j] - s.s[j][i]).abs() <= 1e-12);
                }
            }
            for _ in 0..20 {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut quad = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        quad += x[i] * s.s[i][j] * x[j];
                    }
                }
                prop_assert!(quad >= -1e-8, "x'Sx = {quad}");
            }
        }
    }
}
