//! Principal component analysis via deflated power iteration.
//!
//! Rows of the input are observations, columns are features. The data is
//! mean-centered, the covariance uses the 1/(n-1) convention, and the top
//! `m` eigenvectors are extracted one at a time by power iteration with
//! deflation. Start vectors come from a fixed internal seed so results are
//! fully deterministic, and each iterate is re-orthogonalized against the
//! components already found to stop round-off from reintroducing them.

use super::Error;
use crate::mat::{dot, Mat};
use crate::rng::SeededRng;

/// Output of [`pca_project`].
#[derive(Clone, Debug)]
pub struct ProjectionResult {
    /// `d x m`; column j (stored row-major: entry `components[i][j]`) is the
    /// j-th principal axis, unit length, largest-magnitude entry positive.
    pub components: Mat,
    /// `n x m`; mean-centered data projected onto the components.
    pub projected: Mat,
    /// Variance of the data along each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1000;
const START_SEED: u64 = 271_828;
/// Relative threshold below which the centered data is treated as constant.
const ZERO_VARIANCE_REL: f64 = 1e-24;

/// Project `data` (n observations x d features) onto its top `m` principal
/// components.
pub fn pca_project(data: &Mat, m: usize) -> Result<ProjectionResult, Error> {
    let n = data.rows();
    let d = data.cols();
    if n < 2 {
        return Err(Error::NotEnoughRows { rows: n });
    }
    let limit = n.min(d);
    if m == 0 || m > limit {
        return Err(Error::BadComponentCount { requested: m, limit });
    }
    if !data.is_finite() {
        return Err(Error::NonFiniteData);
    }

    // Mean-center.
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += data.get(i, j);
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut centered = Mat::zeros(n, d);
    for i in 0..n {
        for (j, m) in mean.iter().enumerate() {
            centered.set(i, j, data.get(i, j) - m);
        }
    }

    // Covariance C = Xc^T Xc / (n - 1).
    let mut cov = Mat::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            let xa = centered.get(i, a);
            if xa == 0.0 {
                continue;
            }
            for b in 0..d {
                cov.set(a, b, cov.get(a, b) + xa * centered.get(i, b));
            }
        }
    }
    let scale = 1.0 / (n as f64 - 1.0);
    for a in 0..d {
        for b in 0..d {
            cov.set(a, b, cov.get(a, b) * scale);
        }
    }

    let trace: f64 = (0..d).map(|a| cov.get(a, a)).sum();
    let mean_sq: f64 = data.data().iter().map(|v| v * v).sum::<f64>() / (n * d) as f64;
    if trace <= ZERO_VARIANCE_REL * mean_sq.max(1.0) {
        return Err(Error::ZeroVariance);
    }

    let mut deflated = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut rng = SeededRng::new(START_SEED);

    for _ in 0..m {
        let v = extract_component(&deflated, &components, &mut rng);
        // Report variance against the original covariance; deflate with the
        // eigenvalue of the deflated matrix (equal in exact arithmetic, but
        // the latter keeps deflation consistent under round-off).
        eigenvalues.push(rayleigh(&cov, &v));
        let defl_lambda = rayleigh(&deflated, &v);
        for a in 0..d {
            for b in 0..d {
                deflated.set(a, b, deflated.get(a, b) - defl_lambda * v[a] * v[b]);
            }
        }
        components.push(v);
    }

    // Clamp: eigenvalues of a covariance matrix are non-negative and were
    // extracted largest first; round-off may violate either by a hair.
    for k in 0..m {
        if eigenvalues[k] < 0.0 {
            eigenvalues[k] = 0.0;
        }
        if k > 0 && eigenvalues[k] > eigenvalues[k - 1] {
            eigenvalues[k] = eigenvalues[k - 1];
        }
    }

    let mut comp_mat = Mat::zeros(d, m);
    for (j, v) in components.iter().enumerate() {
        for (a, x) in v.iter().enumerate() {
            comp_mat.set(a, j, *x);
        }
    }
    let projected = centered.matmul(&comp_mat);
    Ok(ProjectionResult { components: comp_mat, projected, explained_variance: eigenvalues })
}

/// Rayleigh quotient v^T M v for unit v.
fn rayleigh(m: &Mat, v: &[f64]) -> f64 {
    let mv = m.matvec(v);
    dot(v, &mv)
}

/// Power-iterate `deflated` to its dominant eigenvector, orthogonalizing
/// against `found` each step, and return the unit vector (sign-fixed). Falls
/// back to an orthonormal completion when the deflated matrix has
/// (numerically) no signal left in the remaining subspace.
fn extract_component(deflated: &Mat, found: &[Vec<f64>], rng: &mut SeededRng) -> Vec<f64> {
    let d = deflated.rows();
    let mut v = rng.normal_vec(d);
    orthogonalize(&mut v, found);
    if normalize(&mut v) == 0.0 {
        v = completion_vector(found, d);
    }

    for _ in 0..POWER_MAX_ITER {
        let mut next = deflated.matvec(&v);
        orthogonalize(&mut next, found);
        let norm = normalize(&mut next);
        if norm <= f64::EPSILON * 1e3 {
            // No variance left in the orthogonal complement: complete the
            // basis with a canonical direction instead.
            v = completion_vector(found, d);
            break;
        }
        let delta: f64 = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        // Eigenvectors are defined up to sign; also accept sign flips.
        let delta_neg: f64 = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a + b) * (a + b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta.min(delta_neg) < POWER_TOL {
            break;
        }
    }

    fix_sign(&mut v);
    v
}

/// Subtract the projections of `v` onto each vector in `basis`.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj = dot(v, b);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= proj * bi;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Largest-magnitude entry is made positive (ties: first such entry).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// First canonical basis vector with a nonzero residual after
/// orthogonalization against `found`, normalized. Exists whenever
/// `found.len() < d`.
fn completion_vector(found: &[Vec<f64>], d: usize) -> Vec<f64> {
    for axis in 0..d {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        orthogonalize(&mut v, found);
        if normalize(&mut v) > 1e-8 {
            fix_sign(&mut v);
            return v;
        }
    }
    // Unreachable for found.len() < d; keep a deterministic fallback.
    let mut v = vec![0.0; d];
    v[0] = 1.0;
    v
}
