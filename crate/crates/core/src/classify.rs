//! Example-based class assignment from comprehensive values.
//!
//! A trained model reduces every alternative to a single score. To turn a
//! new alternative's score into a class, the four rules here compare it
//! against the scored *reference* alternatives (the training set): M1 counts
//! how many references in other classes sit on the expected side; M2 weights
//! that count by each reference's own credibility; M3 averages, over the
//! references of the candidate class, the purity of the value interval
//! between the reference and the query; M4 splits a unit of mass over the K
//! nearest references by reciprocal value distance.
//!
//! All scores are computed over exact rationals so that equal scores are
//! exactly equal and every ratio of counts is preserved; ties in the final
//! argmax break toward the lower class.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exact rational score.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Score(pub BigRational);

impl Score {
    pub fn from_ints(num: i64, den: i64) -> Score {
        Score(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl std::fmt::Display for Score {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Convert a finite float into the exact rational it represents.
pub fn rational_from_f64(v: f64) -> Result<BigRational> {
    BigRational::from_float(v)
        .ok_or_else(|| Error::Invalid(format!("non-finite comprehensive value {v}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    M1,
    M2,
    M3,
    M4,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3 => "M3",
            Method::M4 => "M4",
        };
        write!(f, "{name}")
    }
}

/// Per-class scores of one query under one method.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScores {
    pub method: Method,
    pub k_neighbors: Option<usize>,
    /// Index `k-1` holds the score for class `k`.
    pub scores: Vec<Score>,
}

impl ClassScores {
    /// 1-based class with the maximal score; exact ties break to the lower
    /// class.
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for (i, s) in self.scores.iter().enumerate().skip(1) {
            if s > &self.scores[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// The final outcome for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// 1-based class index.
    pub class: usize,
    pub scores: ClassScores,
}

/// Reference alternatives with their comprehensive values, indexed for
/// order-statistics queries.
#[derive(Clone, Debug)]
pub struct ScoredReferenceSet {
    u: Vec<BigRational>,
    class: Vec<usize>,
    q: usize,
    /// All values ascending (stable in input order).
    sorted: Vec<BigRational>,
    /// Per class `k` (index `k-1`): that class's values ascending.
    class_sorted: Vec<Vec<BigRational>>,
    /// Each reference's M1 score for its own class, if defined.
    own_m1: Vec<Option<BigRational>>,
}

impl ScoredReferenceSet {
    pub fn new(values: Vec<BigRational>, classes: Vec<usize>, q: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("reference set is empty".into()));
        }
        if values.len() != classes.len() {
            return Err(Error::Invalid(format!(
                "{} values but {} class labels",
                values.len(),
                classes.len()
            )));
        }
        if q < 2 {
            return Err(Error::TooFewClasses { found: q });
        }
        if let Some(&bad) = classes.iter().find(|&&c| c < 1 || c > q) {
            return Err(Error::Invalid(format!(
                "class index {bad} outside 1..={q}"
            )));
        }
        let mut sorted = values.clone();
        sorted.sort();
        let mut class_sorted = vec![Vec::new(); q];
        for (v, &c) in values.iter().zip(&classes) {
            class_sorted[c - 1].push(v.clone());
        }
        for cs in &mut class_sorted {
            cs.sort();
        }
        let mut refs = ScoredReferenceSet {
            u: values,
            class: classes,
            q,
            sorted,
            class_sorted,
            own_m1: Vec::new(),
        };
        refs.own_m1 = (0..refs.u.len())
            .map(|i| {
                let u = refs.u[i].clone();
                score_m1(&refs, &u, refs.class[i]).ok().map(|s| s.0)
            })
            .collect();
        Ok(refs)
    }

    /// Build from float scores, which convert to rationals exactly.
    pub fn from_f64(values: &[f64], classes: &[usize], q: usize) -> Result<Self> {
        let rationals = values
            .iter()
            .map(|&v| rational_from_f64(v))
            .collect::<Result<Vec<_>>>()?;
        ScoredReferenceSet::new(rationals, classes.to_vec(), q)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.q
    }

    pub fn class_size(&self, k: usize) -> usize {
        self.class_sorted[k - 1].len()
    }

    pub fn min_class_size(&self) -> usize {
        self.class_sorted.iter().map(|c| c.len()).min().unwrap_or(0)
    }

    fn count_lt(list: &[BigRational], v: &BigRational) -> usize {
        list.partition_point(|x| x < v)
    }

    fn count_le(list: &[BigRational], v: &BigRational) -> usize {
        list.partition_point(|x| x <= v)
    }

    /// Members of `list` in the closed interval `[lo, hi]`.
    fn count_closed(list: &[BigRational], lo: &BigRational, hi: &BigRational) -> usize {
        Self::count_le(list, hi) - Self::count_lt(list, lo)
    }

    /// Members of `list` in the half-open interval `(lo, hi]`.
    fn count_half_open(list: &[BigRational], lo: &BigRational, hi: &BigRational) -> usize {
        Self::count_le(list, hi) - Self::count_le(list, lo)
    }
}

fn int_ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// M1: among references outside class `k`, the fraction that sit on the
/// expected side of the query — lower-class references strictly below it,
/// higher-class references strictly above it.
pub fn score_m1(refs: &ScoredReferenceSet, u_a: &BigRational, k: usize) -> Result<Score> {
    let outside = refs.len() - refs.class_size(k);
    if outside == 0 {
        return Err(Error::Invalid(format!(
            "every reference alternative belongs to class {k}; the \
             outside-class fraction is undefined"
        )));
    }
    let mut supporters = 0usize;
    for c in 1..k {
        supporters += ScoredReferenceSet::count_lt(&refs.class_sorted[c - 1], u_a);
    }
    for c in (k + 1)..=refs.q {
        let cs = &refs.class_sorted[c - 1];
        supporters += cs.len() - ScoredReferenceSet::count_le(cs, u_a);
    }
    Ok(Score(int_ratio(supporters, outside)))
}

/// M2: like M1, but each supporting reference votes with its own M1 score
/// for its own class instead of a flat 1.
pub fn score_m2(refs: &ScoredReferenceSet, u_a: &BigRational, k: usize) -> Result<Score> {
    let outside = refs.len() - refs.class_size(k);
    if outside == 0 {
        return Err(Error::Invalid(format!(
            "every reference alternative belongs to class {k}; the \
             outside-class fraction is undefined"
        )));
    }
    let mut sum = BigRational::zero();
    for i in 0..refs.len() {
        let c = refs.class[i];
        let supports = (c < k && refs.u[i] < *u_a) || (c > k && refs.u[i] > *u_a);
        if supports {
            match &refs.own_m1[i] {
                Some(w) => sum += w,
                None => {
                    return Err(Error::Invalid(
                        "supporter has no defined credibility score".into(),
                    ))
                }
            }
        }
    }
    Ok(Score(sum / BigInt::from(outside)))
}

/// M3: for each reference of class `k`, look at all references whose value
/// lies between it and the query; the term is the fraction of them that are
/// also in class `k`. The score averages the terms over class `k`.
pub fn score_m3(refs: &ScoredReferenceSet, u_a: &BigRational, k: usize) -> Result<Score> {
    let members = refs.class_size(k);
    if members == 0 {
        return Err(Error::Invalid(format!(
            "class {k} has no reference alternatives"
        )));
    }
    let class_list = &refs.class_sorted[k - 1];
    let mut sum = BigRational::zero();
    for u_ref in class_list {
        let (total, in_class) = if u_ref <= u_a {
            (
                ScoredReferenceSet::count_closed(&refs.sorted, u_ref, u_a),
                ScoredReferenceSet::count_closed(class_list, u_ref, u_a),
            )
        } else {
            (
                ScoredReferenceSet::count_half_open(&refs.sorted, u_a, u_ref),
                ScoredReferenceSet::count_half_open(class_list, u_a, u_ref),
            )
        };
        // The reference itself lies in the interval, so total >= 1.
        sum += int_ratio(in_class, total);
    }
    Ok(Score(sum / BigInt::from(members)))
}

/// M4: take the K references with the smallest |U - U_a| (ties at the
/// boundary prefer earlier input order) and split a unit of mass over them
/// by reciprocal distance; the score of class `k` is its share. If any
/// neighbor sits at distance zero, the zero-distance neighbors share the
/// whole mass equally.
pub fn score_m4(
    refs: &ScoredReferenceSet,
    u_a: &BigRational,
    k: usize,
    k_neighbors: usize,
) -> Result<Score> {
    let smallest = refs.min_class_size();
    if k_neighbors < 1 || k_neighbors > smallest {
        return Err(Error::Invalid(format!(
            "neighbor count must be in 1..={smallest} (the least numerous \
             class), got {k_neighbors}"
        )));
    }
    let mut by_distance: Vec<(BigRational, usize)> = refs
        .u
        .iter()
        .enumerate()
        .map(|(i, u)| ((u - u_a).abs(), i))
        .collect();
    by_distance.sort();
    let selected = &by_distance[..k_neighbors];

    if selected[0].0.is_zero() {
        let zeros: Vec<&(BigRational, usize)> =
            selected.iter().filter(|(d, _)| d.is_zero()).collect();
        let in_class = zeros.iter().filter(|(_, i)| refs.class[*i] == k).count();
        return Ok(Score(int_ratio(in_class, zeros.len())));
    }

    let mut class_mass = BigRational::zero();
    let mut total_mass = BigRational::zero();
    for (d, i) in selected {
        let w = d.recip();
        if refs.class[*i] == k {
            class_mass += &w;
        }
        total_mass += w;
    }
    Ok(Score(class_mass / total_mass))
}

/// Score the query for every class under one method.
pub fn score_all(
    refs: &ScoredReferenceSet,
    u_a: &BigRational,
    method: Method,
    k_neighbors: Option<usize>,
) -> Result<ClassScores> {
    let scores = (1..=refs.q)
        .map(|k| match method {
            Method::M1 => score_m1(refs, u_a, k),
            Method::M2 => score_m2(refs, u_a, k),
            Method::M3 => score_m3(refs, u_a, k),
            Method::M4 => {
                let kn = k_neighbors.ok_or_else(|| {
                    Error::Invalid("method M4 needs a neighbor count".into())
                })?;
                score_m4(refs, u_a, k, kn)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassScores {
        method,
        k_neighbors: if method == Method::M4 { k_neighbors } else { None },
        scores,
    })
}

/// Classify one query value: the class with the maximal score, ties toward
/// the lower class.
pub fn assign(
    refs: &ScoredReferenceSet,
    u_a: &BigRational,
    method: Method,
    k_neighbors: Option<usize>,
) -> Result<Assignment> {
    let scores = score_all(refs, u_a, method, k_neighbors)?;
    Ok(Assignment {
        class: scores.argmax(),
        scores,
    })
}
