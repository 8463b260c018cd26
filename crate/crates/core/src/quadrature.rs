//! Numerical integration oracle for the closed-form Gamma formulas.
//!
//! Integrals over `(0, ∞)` are taken in `t = ln x`, where a Gamma density
//! becomes `exp(α t - β e^t)` up to normalisation: smooth, unimodal and with
//! exponentially decaying tails on both sides, which suits a composite rule.
//!
//! The oracle deliberately does not call into [`crate::special`]: densities
//! are normalised by integrating the unnormalised kernel, so the closed forms
//! and the oracle share no code beyond `f64::ln`/`f64::exp`.

use thiserror::Error;

use crate::gamma::{GammaParams, MixtureEmbedding};

/// Mass allowed beyond the upper cutoff before an integral is rejected.
pub const MAX_TAIL_MASS: f64 = 1e-9;
/// The default cutoff is the quantile of order `1 - DEFAULT_TAIL`.
pub const DEFAULT_TAIL: f64 = 1e-12;
pub const DEFAULT_NODES: usize = 4096;
pub const MIN_NODES: usize = 64;

// exp(-46) ~ 1e-20: log-kernel drop at which the integration range ends.
const LOG_DROP: f64 = 46.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    Trapezoid,
    Simpson,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature needs at least {MIN_NODES} nodes, got {0}")]
    TooFewNodes(usize),
    #[error("upper cutoff must be finite and > 0, got {0}")]
    BadCutoff(f64),
    #[error("integration did not converge: mass {mass:e} beyond cutoff {cutoff} exceeds {MAX_TAIL_MASS:e}")]
    TailMass { mass: f64, cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    node_count: usize,
    upper_cutoff: f64,
    scheme: QuadratureScheme,
}

impl QuadratureConfig {
    pub fn new(
        node_count: usize,
        upper_cutoff: f64,
        scheme: QuadratureScheme,
    ) -> Result<Self, QuadratureError> {
        if node_count < MIN_NODES {
            return Err(QuadratureError::TooFewNodes(node_count));
        }
        if !(upper_cutoff.is_finite() && upper_cutoff > 0.0) {
            return Err(QuadratureError::BadCutoff(upper_cutoff));
        }
        Ok(Self { node_count, upper_cutoff, scheme })
    }

    /// Simpson rule with [`DEFAULT_NODES`] nodes and the cutoff at the
    /// `1 - 1e-12` quantile of `p`.
    pub fn for_distribution(p: &GammaParams) -> Self {
        Self {
            node_count: DEFAULT_NODES,
            upper_cutoff: quantile_upper(p, DEFAULT_TAIL),
            scheme: QuadratureScheme::Simpson,
        }
    }

    pub fn with_nodes(mut self, node_count: usize) -> Result<Self, QuadratureError> {
        if node_count < MIN_NODES {
            return Err(QuadratureError::TooFewNodes(node_count));
        }
        self.node_count = node_count;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn upper_cutoff(&self) -> f64 {
        self.upper_cutoff
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }
}

/// Unnormalised log-kernel of `p` in `t = ln x`, including the Jacobian:
/// `α t - β e^t`.
fn log_kernel_t(p: &GammaParams, t: f64) -> f64 {
    p.alpha() * t - p.beta() * t.exp()
}

fn mode_t(p: &GammaParams) -> f64 {
    (p.alpha() / p.beta()).ln()
}

/// `t` range outside of which the kernel is below `exp(-LOG_DROP)` of its peak.
fn support_t(p: &GammaParams) -> (f64, f64) {
    let a = p.alpha();
    let centre = mode_t(p);
    // In s = t - t*, the log-kernel drop is a (s + 1 - e^s).
    let drop = |s: f64| a * (s + 1.0 - s.exp());
    let lo = centre - LOG_DROP / a - 1.0;
    let mut hi_s = 1.0;
    while drop(hi_s) > -LOG_DROP {
        hi_s *= 1.5;
    }
    let (mut l, mut h) = (0.0, hi_s);
    for _ in 0..100 {
        let mid = 0.5 * (l + h);
        if drop(mid) > -LOG_DROP {
            l = mid;
        } else {
            h = mid;
        }
    }
    (lo, centre + h)
}

/// `x` range that carries all but a negligible fraction of `p`'s mass.
pub fn support(p: &GammaParams) -> (f64, f64) {
    let (lo, hi) = support_t(p);
    (lo.exp(), hi.exp())
}

/// Composite rule over `[a, b]` with `n` nodes.
fn composite(scheme: QuadratureScheme, a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    match scheme {
        QuadratureScheme::Trapezoid => {
            let n = n.max(2);
            let h = (b - a) / (n - 1) as f64;
            let inner: f64 = (1..n - 1).map(|i| f(a + i as f64 * h)).sum();
            h * (0.5 * (f(a) + f(b)) + inner)
        }
        QuadratureScheme::Simpson => {
            let n = if n % 2 == 0 { n + 1 } else { n.max(3) };
            let h = (b - a) / (n - 1) as f64;
            let mut acc = f(a) + f(b);
            for i in 1..n - 1 {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(a + i as f64 * h);
            }
            acc * h / 3.0
        }
    }
}

/// Normaliser of `p`'s density, computed numerically: returns `ln ∫ exp(kernel)`.
fn ln_normaliser(p: &GammaParams, nodes: usize, scheme: QuadratureScheme) -> f64 {
    let (lo, hi) = support_t(p);
    let peak = log_kernel_t(p, mode_t(p));
    let z = composite(scheme, lo, hi, nodes, |t| (log_kernel_t(p, t) - peak).exp());
    peak + z.ln()
}

/// Log-density of `p` at `x = e^t`, normalised numerically.
fn ln_density_t(p: &GammaParams, t: f64, ln_z: f64) -> f64 {
    (p.alpha() - 1.0) * t - p.beta() * t.exp() - ln_z
}

/// Smallest `x` with numerically integrated upper tail mass at most `tail`.
pub fn quantile_upper(p: &GammaParams, tail: f64) -> f64 {
    let (lo, hi) = support_t(p);
    let n = 20_001;
    let h = (hi - lo) / (n - 1) as f64;
    let peak = log_kernel_t(p, mode_t(p));
    let vals: Vec<f64> = (0..n).map(|i| (log_kernel_t(p, lo + i as f64 * h) - peak).exp()).collect();
    // cumulative trapezoid from the right
    let mut upper = vec![0.0; n];
    for i in (0..n - 1).rev() {
        upper[i] = upper[i + 1] + 0.5 * h * (vals[i] + vals[i + 1]);
    }
    let total = upper[0];
    let idx = upper.iter().position(|&u| u / total <= tail).unwrap_or(n - 1);
    (lo + idx as f64 * h).exp()
}

fn tail_mass(p: &GammaParams, ln_z: f64, cutoff: f64, cfg: &QuadratureConfig) -> f64 {
    let (_, hi) = support_t(p);
    let t_cut = cutoff.ln();
    if t_cut >= hi {
        return 0.0;
    }
    composite(cfg.scheme, t_cut, hi, cfg.node_count, |t| (ln_density_t(p, t, ln_z) + t).exp())
}

/// Numerical mass of dimension `dim` of a mixture, integrated over the union
/// of the component supports.
pub fn mixture_mass(mix: &MixtureEmbedding, dim: usize) -> Result<f64, QuadratureError> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for c in mix.components() {
        let (l, h) = support(&c.dims()[dim]);
        lo = lo.min(l);
        hi = hi.max(h);
    }
    let cfg = QuadratureConfig::new(20_001, hi, QuadratureScheme::Simpson)?;
    Ok(integrate(|x| mix.density(dim, x).unwrap_or(f64::NAN), lo, &cfg))
}

/// Integrates `f` over `[lower, cfg.upper_cutoff]` in `t = ln x`.
pub fn integrate(f: impl Fn(f64) -> f64, lower: f64, cfg: &QuadratureConfig) -> f64 {
    composite(cfg.scheme, lower.ln(), cfg.upper_cutoff.ln(), cfg.node_count, |t| {
        let x = t.exp();
        f(x) * x
    })
}

/// `∫ f_p ln(f_p / f_q) dx` by quadrature over `(0, cfg.upper_cutoff]`.
pub fn numeric_kl(
    p: &GammaParams,
    q: &GammaParams,
    cfg: &QuadratureConfig,
) -> Result<f64, QuadratureError> {
    let ln_zp = ln_normaliser(p, cfg.node_count, cfg.scheme);
    let ln_zq = ln_normaliser(q, cfg.node_count, cfg.scheme);
    let mass = tail_mass(p, ln_zp, cfg.upper_cutoff, cfg);
    if mass > MAX_TAIL_MASS {
        return Err(QuadratureError::TailMass { mass, cutoff: cfg.upper_cutoff });
    }
    let (lo, _) = support_t(p);
    let hi = cfg.upper_cutoff.ln();
    Ok(composite(cfg.scheme, lo, hi, cfg.node_count, |t| {
        let lp = ln_density_t(p, t, ln_zp);
        let lq = ln_density_t(q, t, ln_zq);
        (lp + t).exp() * (lp - lq)
    }))
}

/// `-∫ f_p ln f_p dx` by quadrature over `(0, cfg.upper_cutoff]`.
pub fn numeric_entropy(p: &GammaParams, cfg: &QuadratureConfig) -> Result<f64, QuadratureError> {
    let ln_z = ln_normaliser(p, cfg.node_count, cfg.scheme);
    let mass = tail_mass(p, ln_z, cfg.upper_cutoff, cfg);
    if mass > MAX_TAIL_MASS {
        return Err(QuadratureError::TailMass { mass, cutoff: cfg.upper_cutoff });
    }
    let (lo, _) = support_t(p);
    let hi = cfg.upper_cutoff.ln();
    Ok(-composite(cfg.scheme, lo, hi, cfg.node_count, |t| {
        let lp = ln_density_t(p, t, ln_z);
        (lp + t).exp() * lp
    }))
}
