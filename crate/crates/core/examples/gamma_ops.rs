//! Closed-form Gamma quantities against quadrature, and the three set
//! operators on small vectors.

use gammae::gamma::{gamma_entropy, gamma_kl, intersect, mixture_union, negate, vector_distance, GammaParams, GammaVector};
use gammae::quadrature::{mixture_mass, numeric_entropy, numeric_kl, QuadratureConfig};

fn main() -> anyhow::Result<()> {
    let p = GammaParams::new(2.0, 1.0)?;
    let q = GammaParams::new(1.0, 1.0)?;
    let cfg = QuadratureConfig::for_distribution(&p);
    println!("KL((2,1) || (1,1)) closed {:.12}  quadrature {:.12}", gamma_kl(&p, &q), numeric_kl(&p, &q, &cfg)?);
    println!("H(2,1)            closed {:.12}  quadrature {:.12}", gamma_entropy(&p), numeric_entropy(&p, &cfg)?);

    let a = GammaVector::from_parts(&[0.5, 3.0], &[1.0, 2.0])?;
    let b = GammaVector::from_parts(&[2.0, 1.5], &[0.5, 1.0])?;
    let both = intersect(&[a.clone(), b.clone()], &[vec![0.25, 0.5], vec![0.75, 0.5]])?;
    println!("intersection alphas {:?} betas {:?}", both.alphas().collect::<Vec<_>>(), both.betas().collect::<Vec<_>>());

    let either = mixture_union(vec![a.clone(), b.clone()], vec![vec![0.3, 0.6], vec![0.7, 0.4]])?;
    for dim in 0..2 {
        println!("union mixture mass in dimension {dim}: {:.9}", mixture_mass(&either, dim)?);
    }

    for eps in [0.0, 0.05, 0.1] {
        let n = negate(&a, eps);
        println!("eps {eps:.2}: negated alphas {:?}, distance to input {:.6}", n.alphas().collect::<Vec<_>>(), vector_distance(&a, &n)?);
    }
    println!("double negation restores input: {}", negate(&negate(&a, 0.05), 0.05) == a);
    Ok(())
}
