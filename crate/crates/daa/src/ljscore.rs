//! Per-residue ensemble Lennard-Jones interaction scores and adaptive
//! smoothing.
//!
//! For residue i with reference point p_i and an ensemble of K ligand
//! poses, the raw score is
//!
//! ```text
//! S_i = (1/K) * sum_k sum_j 4*eps*[(sigma/r')^12 - (sigma/r')^6],
//! r' = max(||p_i - m_jk||, r_min_clamp)
//! ```
//!
//! followed by an optional sign transform and a convex blend toward the
//! mean: `smoothed_i = beta*v_i + (1-beta)*mean(v)`.
//!
//! Each residue's double sum is accumulated with exactly-rounded summation,
//! so the result is the correctly rounded real sum of the terms: reordering
//! ligand atoms, poses, or the parallel scheduling of residues cannot
//! change a single bit of the output.

use rayon::prelude::*;

use crate::fmt::fmt_sig6;
use crate::structio::{PoseEnsemble, ProteinStructure};

/// Sign convention applied to raw scores before smoothing. `Abs` (the
/// default) makes strong attraction and strong steric contact both rank
/// high; `Negate` ranks attraction high; `Raw` keeps the potential's sign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Transform {
    Raw,
    Negate,
    #[default]
    Abs,
}

/// Lennard-Jones well depth, zero-crossing distance, the lower distance
/// clamp guarding the r^-12 singularity, and the sign transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LjParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub r_min_clamp: f64,
    pub transform: Transform,
}

impl Default for LjParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            sigma: 3.4,
            r_min_clamp: 0.5,
            transform: Transform::Abs,
        }
    }
}

impl LjParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::NonPositiveEpsilon(self.epsilon));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::NonPositiveSigma(self.sigma));
        }
        if !(self.r_min_clamp > 0.0 && self.r_min_clamp.is_finite()) {
            return Err(Error::NonPositiveClamp(self.r_min_clamp));
        }
        Ok(())
    }
}

/// All three stages of the score pipeline for one protein/ensemble pair.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionProfile {
    pub raw: Vec<f64>,
    pub transformed: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub beta_used: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("epsilon must be positive and finite, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error("r_min_clamp must be positive and finite, got {0}")]
    NonPositiveClamp(f64),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("coincident positions: residue {residue} and pose {pose} atom {atom} are 0 apart")]
    CoincidentPositions {
        residue: usize,
        pose: usize,
        atom: usize,
    },
    #[error("non-finite score at residue {0} (parameters overflow the potential)")]
    NonFiniteScore(usize),
    #[error("beta must lie in [0, 1], got {0}")]
    BetaOutOfRange(f64),
    #[error("score vector is empty")]
    EmptyVector,
}

/// Exactly-rounded floating-point summation (Shewchuk's expansion scheme,
/// the algorithm behind Python's `math.fsum`). The returned value is the
/// double nearest the exact real sum of everything added, so it does not
/// depend on the order in which terms arrive. Non-finite terms poison the
/// sum to inf/NaN; callers report that as their own error.
#[derive(Clone, Debug, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Correctly rounded sum of all terms added so far. The partials are
    /// non-overlapping and ordered by magnitude; the loop folds them from
    /// the top with an explicit round-half-even correction.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // If the truncated part is exactly half an ulp, the partial below
        // decides the rounding direction.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// The clamped pair potential; `r_clamped` must already be positive.
fn lj_energy(r_clamped: f64, epsilon: f64, sigma: f64) -> f64 {
    let sr = sigma / r_clamped;
    let sr2 = sr * sr;
    let sr6 = sr2 * sr2 * sr2;
    4.0 * epsilon * (sr6 * sr6 - sr6)
}

/// Pair energy at distance `r`: `4*eps*[(sigma/r')^12 - (sigma/r')^6]` with
/// `r' = max(r, r_min_clamp)`. Distances ≤ 0 are rejected — coincident
/// points signal corrupt input rather than a physical configuration.
pub fn lj_pair(r: f64, params: &LjParams) -> Result<f64, Error> {
    params.validate()?;
    if r <= 0.0 || r.is_nan() {
        return Err(Error::NonPositiveDistance(r));
    }
    Ok(lj_energy(r.max(params.r_min_clamp), params.epsilon, params.sigma))
}

/// Raw ensemble scores S for every residue. Residues are scored in
/// parallel; the per-residue accumulation is exactly rounded (see
/// [`ExactSum`]), so thread count and atom order are invisible in the
/// output.
pub fn interaction_scores(
    protein: &ProteinStructure,
    poses: &PoseEnsemble,
    params: &LjParams,
) -> Result<Vec<f64>, Error> {
    params.validate()?;
    let k = poses.n_poses() as f64;
    protein
        .residues
        .par_iter()
        .enumerate()
        .map(|(i, res)| {
            let p = res.position;
            let mut acc = ExactSum::new();
            for (ki, pose) in poses.poses.iter().enumerate() {
                for (j, a) in pose.positions.iter().enumerate() {
                    let dx = p[0] - a[0];
                    let dy = p[1] - a[1];
                    let dz = p[2] - a[2];
                    let r = (dx * dx + dy * dy + dz * dz).sqrt();
                    if r == 0.0 {
                        return Err(Error::CoincidentPositions {
                            residue: i + 1,
                            pose: ki + 1,
                            atom: j + 1,
                        });
                    }
                    acc.add(lj_energy(r.max(params.r_min_clamp), params.epsilon, params.sigma));
                }
            }
            let s = acc.value() / k;
            if !s.is_finite() {
                return Err(Error::NonFiniteScore(i + 1));
            }
            Ok(s)
        })
        .collect()
}

/// Applies the sign transform element-wise.
pub fn apply_transform(raw: &[f64], mode: Transform) -> Vec<f64> {
    match mode {
        Transform::Raw => raw.to_vec(),
        Transform::Negate => raw.iter().map(|v| -v).collect(),
        Transform::Abs => raw.iter().map(|v| v.abs()).collect(),
    }
}

/// Convex blend toward the mean: `out_i = beta*v_i + (1-beta)*mean(v)`.
/// The mean is preserved exactly up to rounding for every beta.
pub fn smooth_scores(transformed: &[f64], beta: f64) -> Result<Vec<f64>, Error> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::BetaOutOfRange(beta));
    }
    if transformed.is_empty() {
        return Err(Error::EmptyVector);
    }
    let mean = transformed.iter().sum::<f64>() / transformed.len() as f64;
    Ok(transformed
        .iter()
        .map(|v| beta * v + (1.0 - beta) * mean)
        .collect())
}

/// Full pipeline: raw ensemble scores, sign transform, smoothing.
pub fn score_pipeline(
    protein: &ProteinStructure,
    poses: &PoseEnsemble,
    params: &LjParams,
    beta: f64,
) -> Result<InteractionProfile, Error> {
    let raw = interaction_scores(protein, poses, params)?;
    let transformed = apply_transform(&raw, params.transform);
    let smoothed = smooth_scores(&transformed, beta)?;
    Ok(InteractionProfile {
        raw,
        transformed,
        smoothed,
        beta_used: beta,
    })
}

/// Serializes a profile as one float per line under `# stage:` headers.
/// The `#` comments make the file re-parseable as a single-column matrix.
pub fn format_profile(profile: &InteractionProfile) -> String {
    let mut out = format!("# beta {}\n", fmt_sig6(profile.beta_used));
    for (stage, values) in [
        ("raw", &profile.raw),
        ("transformed", &profile.transformed),
        ("smoothed", &profile.smoothed),
    ] {
        out.push_str(&format!("# stage: {stage}\n"));
        for v in values {
            out.push_str(&fmt_sig6(*v));
            out.push('\n');
        }
    }
    out
}
