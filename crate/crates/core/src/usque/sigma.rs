//! Symmetric sigma-point sets and weighted recombination.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};

/// `2L + 1` points placed symmetrically about a mean, with their weights.
#[derive(Debug, Clone)]
pub struct SigmaPointSet<const L: usize> {
    pub points: Vec<SVector<f64, L>>,
    pub weights: Vec<f64>,
    pub kappa: f64,
}

/// Weights `(w0, wi)` for dimension `l`: `w0 = k/(l+k)`, `wi = 1/(2(l+k))`.
pub fn weights(l: usize, kappa: f64) -> (f64, f64) {
    let d = l as f64 + kappa;
    (kappa / d, 0.5 / d)
}

/// Lower Cholesky factor, retrying once with `1e-9 * trace / L` diagonal
/// jitter.
pub fn cholesky_with_jitter<const L: usize>(cov: &SMatrix<f64, L, L>) -> Result<SMatrix<f64, L, L>> {
    let sym = 0.5 * (cov + cov.transpose());
    if let Some(c) = sym.cholesky() {
        return Ok(c.l());
    }
    let jitter = 1e-9 * sym.trace() / L as f64;
    if jitter > 0.0 {
        let mut retry = sym;
        for i in 0..L {
            retry[(i, i)] += jitter;
        }
        if let Some(c) = retry.cholesky() {
            return Ok(c.l());
        }
    }
    Err(Error::CovarianceNotPD { cov: Box::new(DMatrix::from_iterator(L, L, cov.iter().copied())) })
}

pub fn generate_sigma_points<const L: usize>(
    mean: &SVector<f64, L>,
    cov: &SMatrix<f64, L, L>,
    kappa: f64,
) -> Result<SigmaPointSet<L>> {
    if !(L as f64 + kappa > 0.0) {
        return Err(Error::Config(format!("kappa must exceed -{L}, got {kappa}")));
    }
    let s = cholesky_with_jitter(cov)?;
    let scale = (L as f64 + kappa).sqrt();
    let mut points = Vec::with_capacity(2 * L + 1);
    points.push(*mean);
    for j in 0..L {
        points.push(mean + scale * s.column(j));
    }
    for j in 0..L {
        points.push(mean - scale * s.column(j));
    }
    let (w0, wi) = weights(L, kappa);
    let mut weights = vec![wi; 2 * L + 1];
    weights[0] = w0;
    Ok(SigmaPointSet { points, weights, kappa })
}

pub fn weighted_mean<const M: usize>(weights: &[f64], ys: &[SVector<f64, M>]) -> SVector<f64, M> {
    weights.iter().zip(ys).fold(SVector::zeros(), |acc, (w, y)| acc + *w * y)
}

/// `sum_i w_i (a_i - a_mean)(b_i - b_mean)ᵀ`.
pub fn weighted_cross_cov<const A: usize, const B: usize>(
    weights: &[f64],
    a: &[SVector<f64, A>],
    a_mean: &SVector<f64, A>,
    b: &[SVector<f64, B>],
    b_mean: &SVector<f64, B>,
) -> SMatrix<f64, A, B> {
    let mut out = SMatrix::<f64, A, B>::zeros();
    for ((w, ai), bi) in weights.iter().zip(a).zip(b) {
        out += *w * (ai - a_mean) * (bi - b_mean).transpose();
    }
    out
}

/// Pushes a Gaussian through `f` with the unscented transform.
pub fn unscented_transform<const L: usize, const M: usize, F>(
    mean: &SVector<f64, L>,
    cov: &SMatrix<f64, L, L>,
    kappa: f64,
    f: F,
) -> Result<(SVector<f64, M>, SMatrix<f64, M, M>)>
where
    F: Fn(&SVector<f64, L>) -> SVector<f64, M>,
{
    let set = generate_sigma_points(mean, cov, kappa)?;
    let ys: Vec<_> = set.points.iter().map(f).collect();
    let y_mean = weighted_mean(&set.weights, &ys);
    let y_cov = weighted_cross_cov(&set.weights, &ys, &y_mean, &ys, &y_mean);
    Ok((y_mean, 0.5 * (y_cov + y_cov.transpose())))
}
