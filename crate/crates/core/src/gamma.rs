//! Gamma-distribution embeddings and the logical operators on them.
//!
//! An entity or a conjunctive query is a [`GammaVector`]: `m` independent
//! Gamma distributions, one per dimension. A disjunctive query is a
//! [`MixtureEmbedding`]: a per-dimension weighted mixture of such vectors.
//!
//! The operators here act on parameters only:
//!
//! * [`intersect`] takes per-dimension convex combinations of shapes and rates,
//! * [`mixture_union`] packages its inputs as a Gamma mixture,
//! * [`negate`] maps a shape `α` to `1/α + ε` and keeps the rate,
//! * [`vector_distance`] and [`mixture_distance`] sum per-dimension KL divergences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{digamma_pos, ln_gamma_pos, trigamma_pos, DomainError};

/// Tolerance on per-dimension simplex weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Log-densities below this are reported as exactly zero density.
pub const LN_UNDERFLOW: f64 = -745.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GammaError {
    #[error("invalid Gamma parameters (alpha = {alpha}, beta = {beta}); both must be finite and > 0")]
    InvalidParams { alpha: f64, beta: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weights for dimension {dim} sum to {sum}, expected 1")]
    WeightSum { dim: usize, sum: f64 },
    #[error("weight {value} at component {component}, dimension {dim} is negative or not finite")]
    BadWeight { component: usize, dim: usize, value: f64 },
    #[error("operator needs at least one input")]
    Empty,
}

/// One Gamma distribution, parameterised by shape `alpha` and rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct GammaParams {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawParams> for GammaParams {
    type Error = GammaError;
    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        GammaParams::new(raw.alpha, raw.beta)
    }
}

impl From<GammaParams> for RawParams {
    fn from(p: GammaParams) -> Self {
        RawParams { alpha: p.alpha, beta: p.beta }
    }
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, GammaError> {
        if alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0 {
            Ok(Self { alpha, beta })
        } else {
            Err(GammaError::InvalidParams { alpha, beta })
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha / (self.beta * self.beta)
    }

    /// Log-density at `x > 0`.
    pub fn ln_pdf(&self, x: f64) -> Result<f64, GammaError> {
        if !(x.is_finite() && x > 0.0) {
            return Err(DomainError { function: "gamma_pdf", x }.into());
        }
        Ok(self.ln_pdf_pos(x))
    }

    pub(crate) fn ln_pdf_pos(&self, x: f64) -> f64 {
        (self.alpha - 1.0) * x.ln() - self.beta * x + self.alpha * self.beta.ln()
            - ln_gamma_pos(self.alpha)
    }

    pub fn pdf(&self, x: f64) -> Result<f64, GammaError> {
        self.ln_pdf(x).map(clamped_exp)
    }

    /// Differential entropy `α - ln β + ln Γ(α) + (1 - α) ψ(α)`.
    pub fn entropy(&self) -> f64 {
        let a = self.alpha;
        a - self.beta.ln() + ln_gamma_pos(a) + (1.0 - a) * digamma_pos(a)
    }

    /// Partial derivatives of [`entropy`](Self::entropy) with respect to `(α, β)`.
    pub fn entropy_grad(&self) -> (f64, f64) {
        (1.0 + (1.0 - self.alpha) * trigamma_pos(self.alpha), -1.0 / self.beta)
    }

    /// `KL(self ‖ other)`, see [`gamma_kl`].
    pub fn kl(&self, other: &GammaParams) -> f64 {
        gamma_kl(self, other)
    }
}

fn clamped_exp(ln: f64) -> f64 {
    if ln < LN_UNDERFLOW {
        0.0
    } else {
        ln.exp()
    }
}

/// Density of `p` at `x`.
pub fn gamma_pdf(x: f64, p: &GammaParams) -> Result<f64, GammaError> {
    p.pdf(x)
}

pub fn gamma_entropy(p: &GammaParams) -> f64 {
    p.entropy()
}

/// Closed-form `KL(p ‖ q)` between two Gamma distributions:
///
/// `(α_p - α_q) ψ(α_p) - ln Γ(α_p) + ln Γ(α_q) + α_q (ln β_p - ln β_q) + α_p (β_q - β_p) / β_p`
///
/// Round-off negatives down to `-1e-12` are clamped to zero.
pub fn gamma_kl(p: &GammaParams, q: &GammaParams) -> f64 {
    let (ae, be, aq, bq) = (p.alpha, p.beta, q.alpha, q.beta);
    let kl = (ae - aq) * digamma_pos(ae) - ln_gamma_pos(ae)
        + ln_gamma_pos(aq)
        + aq * (be.ln() - bq.ln())
        + ae * (bq - be) / be;
    clamp_kl(kl)
}

pub(crate) fn clamp_kl(kl: f64) -> f64 {
    if kl < 0.0 && kl > -1e-12 {
        0.0
    } else {
        kl
    }
}

/// Partial derivatives of `KL(p ‖ q)` in the order
/// `(∂α_p, ∂β_p, ∂α_q, ∂β_q)`.
pub fn gamma_kl_grad(p: &GammaParams, q: &GammaParams) -> [f64; 4] {
    let (ae, be, aq, bq) = (p.alpha, p.beta, q.alpha, q.beta);
    [
        (ae - aq) * trigamma_pos(ae) + bq / be - 1.0,
        aq / be - ae * bq / (be * be),
        digamma_pos(aq) - digamma_pos(ae) + be.ln() - bq.ln(),
        ae / be - aq / bq,
    ]
}

/// Whether a vector embeds a set (`Original`) or the complement of one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NegLabel {
    #[default]
    Original,
    Complement,
}

impl NegLabel {
    pub fn bit(self) -> u8 {
        match self {
            NegLabel::Original => 0,
            NegLabel::Complement => 1,
        }
    }
}

/// An `m`-dimensional vector of Gamma distributions.
///
/// A vector produced by [`negate`] carries the parameters it was negated from,
/// so negating it again restores them exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaVector {
    dims: Vec<GammaParams>,
    label: NegLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pre_negation: Option<Vec<GammaParams>>,
}

impl GammaVector {
    pub fn new(dims: Vec<GammaParams>) -> Result<Self, GammaError> {
        if dims.is_empty() {
            return Err(GammaError::Empty);
        }
        Ok(Self { dims, label: NegLabel::Original, pre_negation: None })
    }

    /// Builds a vector from parallel shape and rate slices.
    pub fn from_parts(alpha: &[f64], beta: &[f64]) -> Result<Self, GammaError> {
        if alpha.len() != beta.len() {
            return Err(GammaError::DimensionMismatch { expected: alpha.len(), found: beta.len() });
        }
        let dims = alpha
            .iter()
            .zip(beta)
            .map(|(&a, &b)| GammaParams::new(a, b))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dims)
    }

    /// Same parameters in every dimension.
    pub fn uniform(m: usize, p: GammaParams) -> Result<Self, GammaError> {
        Self::new(vec![p; m])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[GammaParams] {
        &self.dims
    }

    pub fn label(&self) -> NegLabel {
        self.label
    }

    pub fn neg_label(&self) -> u8 {
        self.label.bit()
    }

    pub fn alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.dims.iter().map(|p| p.alpha)
    }

    pub fn betas(&self) -> impl Iterator<Item = f64> + '_ {
        self.dims.iter().map(|p| p.beta)
    }

    /// Sum of per-dimension differential entropies.
    pub fn entropy(&self) -> f64 {
        self.dims.iter().map(GammaParams::entropy).sum()
    }

    fn expect_dim(&self, m: usize) -> Result<(), GammaError> {
        if self.dims.len() == m {
            Ok(())
        } else {
            Err(GammaError::DimensionMismatch { expected: m, found: self.dims.len() })
        }
    }
}

fn check_weights(k: usize, m: usize, weights: &[Vec<f64>]) -> Result<(), GammaError> {
    if weights.len() != k {
        return Err(GammaError::DimensionMismatch { expected: k, found: weights.len() });
    }
    for (i, row) in weights.iter().enumerate() {
        if row.len() != m {
            return Err(GammaError::DimensionMismatch { expected: m, found: row.len() });
        }
        if let Some((dim, &value)) =
            row.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(GammaError::BadWeight { component: i, dim, value });
        }
    }
    for dim in 0..m {
        let sum: f64 = weights.iter().map(|row| row[dim]).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(GammaError::WeightSum { dim, sum });
        }
    }
    Ok(())
}

fn common_dim(inputs: &[GammaVector]) -> Result<usize, GammaError> {
    let m = inputs.first().ok_or(GammaError::Empty)?.dim();
    for v in inputs {
        v.expect_dim(m)?;
    }
    Ok(m)
}

/// Attention-weighted intersection.
///
/// `weights[i][j]` is the weight of input `i` in dimension `j`; every column
/// must lie on the simplex. Output dimension `j` is
/// `(Σ_i w_ij α_ij, Σ_i w_ij β_ij)` with label `Original`.
pub fn intersect(inputs: &[GammaVector], weights: &[Vec<f64>]) -> Result<GammaVector, GammaError> {
    let m = common_dim(inputs)?;
    check_weights(inputs.len(), m, weights)?;
    let dims = (0..m)
        .map(|j| {
            let (a, b) = inputs.iter().zip(weights).fold((0.0, 0.0), |(a, b), (v, w)| {
                (a + w[j] * v.dims[j].alpha, b + w[j] * v.dims[j].beta)
            });
            GammaParams::new(a, b)
        })
        .collect::<Result<Vec<_>, _>>()?;
    GammaVector::new(dims)
}

/// Per-dimension Gamma mixture `Σ_i θ_ij f(x; α_ij, β_ij)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureEmbedding {
    components: Vec<GammaVector>,
    weights: Vec<Vec<f64>>,
}

impl MixtureEmbedding {
    pub fn components(&self) -> &[GammaVector] {
        &self.components
    }

    /// `k × m` weights; each column sums to one.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Mixture density of dimension `dim` at `x`.
    pub fn density(&self, dim: usize, x: f64) -> Result<f64, GammaError> {
        let mut total = 0.0;
        for (c, w) in self.components.iter().zip(&self.weights) {
            total += w[dim] * c.dims[dim].pdf(x)?;
        }
        Ok(total)
    }

    /// Weighted sum of component entropies, `Σ_j Σ_i θ_ij H(c_ij)`.
    ///
    /// This upper-bounds the entropy of each mixture dimension minus the mixing
    /// entropy; it is the uncertainty proxy used for disjunctive queries.
    pub fn entropy(&self) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| c.dims.iter().zip(w).map(|(p, w)| w * p.entropy()).sum::<f64>())
            .sum()
    }
}

/// Gamma-mixture union. Inputs and weights are stored unchanged.
pub fn mixture_union(
    inputs: Vec<GammaVector>,
    weights: Vec<Vec<f64>>,
) -> Result<MixtureEmbedding, GammaError> {
    let m = common_dim(&inputs)?;
    check_weights(inputs.len(), m, &weights)?;
    Ok(MixtureEmbedding { components: inputs, weights })
}

/// Elastic negation.
///
/// An `Original` vector maps to `(1/α + elasticity, β)` per dimension with
/// label `Complement`. A `Complement` vector is restored to the parameters it
/// was negated from, so negation is an exact involution.
pub fn negate(input: &GammaVector, elasticity: f64) -> GammaVector {
    match (input.label, &input.pre_negation) {
        (NegLabel::Complement, Some(original)) => GammaVector {
            dims: original.clone(),
            label: NegLabel::Original,
            pre_negation: None,
        },
        _ => {
            let dims = input
                .dims
                .iter()
                .map(|p| GammaParams { alpha: 1.0 / p.alpha + elasticity, beta: p.beta })
                .collect();
            GammaVector {
                dims,
                label: NegLabel::Complement,
                pre_negation: Some(input.dims.clone()),
            }
        }
    }
}

/// `Σ_j KL(entity_j ‖ query_j)`.
pub fn vector_distance(entity: &GammaVector, query: &GammaVector) -> Result<f64, GammaError> {
    query.expect_dim(entity.dim())?;
    Ok(entity.dims.iter().zip(&query.dims).map(|(e, q)| gamma_kl(e, q)).sum())
}

/// `Σ_j Σ_i θ_ij KL(entity_j ‖ component_ij)`, the convexity upper bound on
/// the KL divergence from the entity to the mixture.
pub fn mixture_distance(entity: &GammaVector, query: &MixtureEmbedding) -> Result<f64, GammaError> {
    query.components[0].expect_dim(entity.dim())?;
    Ok(query
        .components
        .iter()
        .zip(&query.weights)
        .map(|(c, w)| {
            entity.dims.iter().zip(&c.dims).zip(w).map(|((e, q), w)| w * gamma_kl(e, q)).sum::<f64>()
        })
        .sum())
}
