//! Piecewise-linear feature encodings of alternatives.
//!
//! Each criterion's scale `[alpha, beta]` is split into `gamma` equal
//! sub-intervals. A performance `g` becomes a vector of `gamma` components:
//! sub-intervals entirely below `g` contribute 1, the one containing `g`
//! contributes the fractional progress through it, the rest contribute 0. A
//! nonnegative weight per component then yields a monotone piecewise-linear
//! marginal value function, and the concatenation over criteria is the
//! feature vector `V(a)`.
//!
//! With interactions enabled, every criterion pair `j<k` additionally gets a
//! positive block (pairwise products or minima of the two marginal encodings)
//! and a negative block (its entrywise negation), so a single nonnegative
//! weight vector can express both bonus and penalty terms.

use serde::{Deserialize, Serialize};

use crate::dataset::CriterionScale;
use crate::error::{Error, Result};

/// Which pairwise interaction blocks an encoding carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionForm {
    None,
    Product,
    Minimum,
}

impl InteractionForm {
    pub fn has_interactions(self) -> bool {
        !matches!(self, InteractionForm::None)
    }
}

impl std::fmt::Display for InteractionForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InteractionForm::None => "none",
            InteractionForm::Product => "product",
            InteractionForm::Minimum => "minimum",
        })
    }
}

/// The per-criterion piece of `V(a)`: one value in [0,1] per sub-interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalEncoding {
    pub values: Vec<f64>,
}

/// One criterion pair's interaction features. `negative` is always the
/// entrywise negation of `positive`; both are kept explicit so the flattened
/// vector can be read off block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionBlock {
    /// Criterion indices `(j, k)` with `j < k`.
    pub pair: (usize, usize),
    /// Entry `(s,t)` (row-major, `s` over `j`'s pieces) is `v^s_j * v^t_k`
    /// (product form) or `min(v^s_j, v^t_k)` (minimum form).
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Full feature vector of one alternative: plain blocks, then (optionally)
/// per-pair interaction blocks in lexicographic pair order, positive block
/// before negative block.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedAlternative {
    pub plain_blocks: Vec<MarginalEncoding>,
    pub interaction_blocks: Option<Vec<InteractionBlock>>,
    pub form: InteractionForm,
}

impl EncodedAlternative {
    /// Total dimension of the flattened vector.
    pub fn dim(&self) -> usize {
        let plain: usize = self.plain_blocks.iter().map(|b| b.values.len()).sum();
        let inter: usize = self
            .interaction_blocks
            .as_ref()
            .map(|blocks| blocks.iter().map(|b| 2 * b.positive.len()).sum())
            .unwrap_or(0);
        plain + inter
    }

    /// Flatten into the documented layout: plain blocks in criterion order,
    /// then for each pair `(1,2),(1,3),…,(n−1,n)` the positive block followed
    /// by the negative block.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for b in &self.plain_blocks {
            out.extend_from_slice(&b.values);
        }
        if let Some(blocks) = &self.interaction_blocks {
            for b in blocks {
                out.extend_from_slice(&b.positive);
                out.extend_from_slice(&b.negative);
            }
        }
        out
    }
}

/// Nonnegative weights matching an [`EncodedAlternative`] layout: one step
/// weight per marginal piece, and (optionally) per-pair bonus/penalty weight
/// matrices of shape `gamma_j x gamma_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    /// Per criterion: the value-function increments over its sub-intervals.
    pub marginal_steps: Vec<Vec<f64>>,
    /// Per pair `j<k` in lexicographic order: bonus weights, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_plus: Option<Vec<Vec<Vec<f64>>>>,
    /// Per pair `j<k` in lexicographic order: penalty weights, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_minus: Option<Vec<Vec<Vec<f64>>>>,
    pub form: InteractionForm,
}

impl WeightVector {
    /// Flatten into the same layout as [`EncodedAlternative::flat`]:
    /// marginal steps, then per pair the bonus matrix (row-major) followed by
    /// the penalty matrix.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for steps in &self.marginal_steps {
            out.extend_from_slice(steps);
        }
        if let (Some(plus), Some(minus)) = (&self.eta_plus, &self.eta_minus) {
            for (p, m) in plus.iter().zip(minus) {
                out.extend(p.iter().flatten().copied());
                out.extend(m.iter().flatten().copied());
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.flat().len()
    }
}

/// The `gamma + 1` characteristic points of a scale, strictly increasing
/// from `alpha` to `beta`.
pub fn characteristic_points(scale: &CriterionScale) -> Vec<f64> {
    (0..=scale.gamma).map(|k| scale.breakpoint(k)).collect()
}

/// Encode one oriented performance against one scale. Out-of-range values
/// are clamped to `[alpha, beta]` first, so every component lies in [0,1].
pub fn encode_marginal(scale: &CriterionScale, g: f64) -> MarginalEncoding {
    let g = g.clamp(scale.alpha, scale.beta);
    let values = (1..=scale.gamma)
        .map(|t| {
            let lo = scale.breakpoint(t - 1);
            let hi = scale.breakpoint(t);
            if g > hi {
                1.0
            } else if g < lo {
                0.0
            } else {
                (g - lo) / (hi - lo)
            }
        })
        .collect();
    MarginalEncoding { values }
}

/// True if any entry of the raw row falls outside its scale's range once
/// oriented (and would therefore be clamped by [`encode_alternative`]).
pub fn clamped_columns(scales: &[CriterionScale], row: &[f64]) -> Vec<usize> {
    scales
        .iter()
        .enumerate()
        .filter(|(j, s)| {
            let g = s.orient(row[*j]);
            g < s.alpha || g > s.beta
        })
        .map(|(j, _)| j)
        .collect()
}

/// Encode a raw performance row (orientation applied per scale) into plain
/// blocks plus, for the interactive forms, all pairwise interaction blocks.
pub fn encode_alternative(
    scales: &[CriterionScale],
    row: &[f64],
    form: InteractionForm,
) -> Result<EncodedAlternative> {
    if row.len() != scales.len() {
        return Err(Error::Invalid(format!(
            "row has {} values but {} scales were given",
            row.len(),
            scales.len()
        )));
    }
    let plain_blocks: Vec<MarginalEncoding> = scales
        .iter()
        .zip(row)
        .map(|(s, &raw)| encode_marginal(s, s.orient(raw)))
        .collect();
    let interaction_blocks = match form {
        InteractionForm::None => None,
        InteractionForm::Product | InteractionForm::Minimum => {
            Some(build_interaction_blocks(&plain_blocks, form))
        }
    };
    Ok(EncodedAlternative {
        plain_blocks,
        interaction_blocks,
        form,
    })
}

fn build_interaction_blocks(
    plain: &[MarginalEncoding],
    form: InteractionForm,
) -> Vec<InteractionBlock> {
    let n = plain.len();
    let mut blocks = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for j in 0..n {
        for k in (j + 1)..n {
            let mut positive = Vec::with_capacity(plain[j].values.len() * plain[k].values.len());
            for &vs in &plain[j].values {
                for &vt in &plain[k].values {
                    positive.push(match form {
                        InteractionForm::Product => vs * vt,
                        InteractionForm::Minimum => vs.min(vt),
                        InteractionForm::None => unreachable!(),
                    });
                }
            }
            let negative = positive.iter().map(|v| -v).collect();
            blocks.push(InteractionBlock {
                pair: (j, k),
                positive,
                negative,
            });
        }
    }
    blocks
}

/// The encoding of the virtual best alternative: every plain and positive
/// entry is 1, every negative entry is −1, in either form.
pub fn ideal_encoding(scales: &[CriterionScale], form: InteractionForm) -> EncodedAlternative {
    let plain_blocks: Vec<MarginalEncoding> = scales
        .iter()
        .map(|s| MarginalEncoding {
            values: vec![1.0; s.gamma],
        })
        .collect();
    let interaction_blocks = match form {
        InteractionForm::None => None,
        _ => {
            let n = scales.len();
            let mut blocks = Vec::new();
            for j in 0..n {
                for k in (j + 1)..n {
                    let len = scales[j].gamma * scales[k].gamma;
                    blocks.push(InteractionBlock {
                        pair: (j, k),
                        positive: vec![1.0; len],
                        negative: vec![-1.0; len],
                    });
                }
            }
            Some(blocks)
        }
    };
    EncodedAlternative {
        plain_blocks,
        interaction_blocks,
        form,
    }
}

/// The comprehensive value `U(a)`: inner product of the weight vector with
/// the encoded alternative. Penalty weights enter negatively because the
/// negative blocks are negated copies of the positive ones.
pub fn comprehensive_value(w: &WeightVector, e: &EncodedAlternative) -> Result<f64> {
    if w.form != e.form {
        return Err(Error::Invalid(format!(
            "weight form {} does not match encoding form {}",
            w.form, e.form
        )));
    }
    let wf = w.flat();
    let ef = e.flat();
    if wf.len() != ef.len() {
        return Err(Error::Invalid(format!(
            "weight dimension {} does not match encoding dimension {}",
            wf.len(),
            ef.len()
        )));
    }
    Ok(wf.iter().zip(&ef).map(|(a, b)| a * b).sum())
}
