//! Docking-biased attention pooling.
//!
//! A single learnable pooling query attends over the n residue embeddings;
//! the smoothed per-residue interaction scores enter as an additive logit
//! bias weighted by a learnable scalar gamma:
//!
//! ```text
//! query  = W_q^T q_pool                     (d_h)
//! keys   = E W_k                            (n x d_h)
//! values = E W_v                            (n x d_v)
//! logits_i = (query . keys_i + gamma * s_hat_i) / sqrt(d_h)
//! weights  = softmax(logits)
//! p_M      = values^T weights               (d_v)
//! ```
//!
//! Two ablations share the same machinery: standard attention drops the
//! bias term, docking-only drops the query-key term.

pub mod backward;
pub mod bundle;

pub use backward::{backward_mode, daa_backward, grad_check, grad_check_with, DaaGrads, GradCheckReport};
pub use bundle::{format_bundle, parse_bundle};

use crate::mat::{dot, Mat};
use crate::rng::SeededRng;
use crate::structio::EmbeddingMatrix;

/// Projection weights, pooling query, and the two learnable scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct DaaParams {
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
    pub q_pool: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
}

/// Which logit terms a pass uses: the full biased form, standard attention
/// (no score bias), or docking-only (no query-key term).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttnMode {
    Full,
    Standard,
    Docking,
}

/// One pooled attention evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DaaOutput {
    pub representation: Vec<f64>,
    pub weights: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Concatenation of independent heads run on the same inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadOutput {
    pub representation: Vec<f64>,
    pub heads: Vec<DaaOutput>,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite values at stage {0}")]
    NonFinite(&'static str),
    #[error("beta must lie in [0, 1], got {0}")]
    BetaOutOfRange(f64),
    #[error("head dimensions must be at least 1")]
    ZeroDimension,
    #[error("parameter entries must be finite")]
    NonFiniteParams,
    #[error("params bundle line {line}: {detail}")]
    MalformedBundle { line: usize, detail: String },
}

impl DaaParams {
    /// Seeded initialization: Glorot-uniform projections (entries uniform in
    /// +/- sqrt(6/(fan_in+fan_out))), standard-normal pooling query,
    /// gamma = 1 so the bias is active from step zero, beta = 0.5 as the
    /// neutral midpoint of the smoothing range. One RNG stream fills W_q,
    /// W_k, W_v row-major in that order, then q_pool.
    pub fn init(d: usize, d_h: usize, d_v: usize, seed: u64) -> Result<Self, Error> {
        if d == 0 || d_h == 0 || d_v == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut rng = SeededRng::new(seed);
        let limit_h = (6.0 / (d + d_h) as f64).sqrt();
        let limit_v = (6.0 / (d + d_v) as f64).sqrt();
        let fill = |rows: usize, cols: usize, limit: f64, rng: &mut SeededRng| {
            Mat::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.uniform_symmetric(limit)).collect(),
            )
        };
        let w_q = fill(d, d_h, limit_h, &mut rng);
        let w_k = fill(d, d_h, limit_h, &mut rng);
        let w_v = fill(d, d_v, limit_v, &mut rng);
        let q_pool = rng.normal_vec(d);
        Ok(Self {
            w_q,
            w_k,
            w_v,
            q_pool,
            gamma: 1.0,
            beta: 0.5,
        })
    }

    pub fn d(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_h(&self) -> usize {
        self.w_q.cols()
    }

    pub fn d_v(&self) -> usize {
        self.w_v.cols()
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.d() == 0 || self.d_h() == 0 || self.d_v() == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.w_k.rows() != self.d()
            || self.w_v.rows() != self.d()
            || self.q_pool.len() != self.d()
        {
            return Err(Error::DimensionMismatch(format!(
                "projection rows and pooling query must all have length d={}, got w_k {}x{}, w_v {}x{}, q_pool {}",
                self.d(),
                self.w_k.rows(),
                self.w_k.cols(),
                self.w_v.rows(),
                self.w_v.cols(),
                self.q_pool.len()
            )));
        }
        if self.w_k.cols() != self.d_h() {
            return Err(Error::DimensionMismatch(format!(
                "w_q and w_k disagree on d_h: {} vs {}",
                self.d_h(),
                self.w_k.cols()
            )));
        }
        let finite = self.w_q.is_finite()
            && self.w_k.is_finite()
            && self.w_v.is_finite()
            && self.q_pool.iter().all(|v| v.is_finite())
            && self.gamma.is_finite()
            && self.beta.is_finite();
        if !finite {
            return Err(Error::NonFiniteParams);
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::BetaOutOfRange(self.beta));
        }
        Ok(())
    }
}

fn ensure_finite(stage: &'static str, values: &[f64]) -> Result<(), Error> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(stage))
    }
}

/// Numerically safe softmax: subtracts the max logit before exponentiating.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Intermediates shared by the forward pass and the analytic gradients.
pub(crate) struct ForwardPieces {
    pub query: Vec<f64>,
    pub keys: Mat,
    pub values: Mat,
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
    pub inv_sqrt_dh: f64,
}

pub(crate) fn forward_pieces(
    e: &EmbeddingMatrix,
    s_hat: Option<&[f64]>,
    params: &DaaParams,
    mode: AttnMode,
) -> Result<ForwardPieces, Error> {
    params.validate()?;
    if e.d() != params.d() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have d={}, params expect d={}",
            e.d(),
            params.d()
        )));
    }
    let n = e.n();
    if let Some(s) = s_hat {
        if s.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "score vector has length {}, embeddings have {} rows",
                s.len(),
                n
            )));
        }
    }
    let query = params.w_q.t_matvec(&params.q_pool);
    ensure_finite("query", &query)?;
    let keys = e.values.matmul(&params.w_k);
    ensure_finite("keys", keys.data())?;
    let values = e.values.matmul(&params.w_v);
    ensure_finite("values", values.data())?;
    let inv_sqrt_dh = 1.0 / (params.d_h() as f64).sqrt();
    let logits: Vec<f64> = (0..n)
        .map(|i| {
            let mut l = if mode == AttnMode::Docking {
                0.0
            } else {
                dot(&query, keys.row(i))
            };
            if mode != AttnMode::Standard {
                l += params.gamma * s_hat.expect("bias modes carry scores")[i];
            }
            l * inv_sqrt_dh
        })
        .collect();
    ensure_finite("logits", &logits)?;
    let weights = softmax(&logits);
    ensure_finite("weights", &weights)?;
    Ok(ForwardPieces {
        query,
        keys,
        values,
        logits,
        weights,
        inv_sqrt_dh,
    })
}

fn output_from(pieces: ForwardPieces) -> Result<DaaOutput, Error> {
    let representation = pieces.values.t_matvec(&pieces.weights);
    ensure_finite("representation", &representation)?;
    Ok(DaaOutput {
        representation,
        weights: pieces.weights,
        logits: pieces.logits,
    })
}

/// Full biased attention: `logits = (query.keys + gamma*s_hat)/sqrt(d_h)`.
pub fn daa_forward(
    e: &EmbeddingMatrix,
    s_hat: &[f64],
    params: &DaaParams,
) -> Result<DaaOutput, Error> {
    output_from(forward_pieces(e, Some(s_hat), params, AttnMode::Full)?)
}

/// Ablation: the score-bias term omitted entirely.
pub fn standard_attention(e: &EmbeddingMatrix, params: &DaaParams) -> Result<DaaOutput, Error> {
    output_from(forward_pieces(e, None, params, AttnMode::Standard)?)
}

/// Ablation: the query-key term omitted; attention driven by scores alone.
pub fn docking_only(
    e: &EmbeddingMatrix,
    s_hat: &[f64],
    params: &DaaParams,
) -> Result<DaaOutput, Error> {
    output_from(forward_pieces(e, Some(s_hat), params, AttnMode::Docking)?)
}

/// Dispatches on the ablation mode with a uniform signature.
pub fn forward_mode(
    e: &EmbeddingMatrix,
    s_hat: &[f64],
    params: &DaaParams,
    mode: AttnMode,
) -> Result<DaaOutput, Error> {
    match mode {
        AttnMode::Full => daa_forward(e, s_hat, params),
        AttnMode::Standard => standard_attention(e, params),
        AttnMode::Docking => docking_only(e, s_hat, params),
    }
}

/// Runs h independent heads on the same inputs and concatenates their
/// pooled representations in head order.
pub fn multi_head_forward(
    e: &EmbeddingMatrix,
    s_hat: &[f64],
    heads: &[DaaParams],
) -> Result<MultiHeadOutput, Error> {
    if heads.is_empty() {
        return Err(Error::ZeroDimension);
    }
    let mut representation = Vec::new();
    let mut outputs = Vec::with_capacity(heads.len());
    for params in heads {
        let out = daa_forward(e, s_hat, params)?;
        representation.extend_from_slice(&out.representation);
        outputs.push(out);
    }
    Ok(MultiHeadOutput {
        representation,
        heads: outputs,
    })
}

#[cfg(test)]
// Reference constants below are kept at full 17-digit round-trip precision.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::structio::synth_embeddings;

    fn fixture() -> (EmbeddingMatrix, Vec<f64>, DaaParams) {
        let e = synth_embeddings(4, 3, 100).unwrap();
        let params = DaaParams::init(3, 2, 2, 101).unwrap();
        let s_hat: Vec<f64> = SeededRng::new(102).normal_vec(4).iter().map(|v| v.abs()).collect();
        (e, s_hat, params)
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{g} vs {w}");
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = DaaParams::init(16, 8, 8, 42).unwrap();
        let b = DaaParams::init(16, 8, 8, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, DaaParams::init(16, 8, 8, 43).unwrap());
        assert_eq!(a.gamma, 1.0);
        assert_eq!(a.beta, 0.5);
        let limit = (6.0 / 24.0f64).sqrt();
        assert!(a.w_q.iter().chain(a.w_k.iter()).all(|v| v.abs() <= limit));
        assert!(matches!(DaaParams::init(0, 2, 2, 1), Err(Error::ZeroDimension)));
        a.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = DaaParams::init(3, 2, 2, 1).unwrap();
        p.beta = 1.5;
        assert!(matches!(p.validate(), Err(Error::BetaOutOfRange(_))));
        let mut p = DaaParams::init(3, 2, 2, 1).unwrap();
        p.gamma = f64::NAN;
        assert!(matches!(p.validate(), Err(Error::NonFiniteParams)));
        let mut p = DaaParams::init(3, 2, 2, 1).unwrap();
        p.q_pool = vec![0.0; 4];
        assert!(matches!(p.validate(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn forward_rejects_mismatched_inputs() {
        let (e, s_hat, params) = fixture();
        let wrong_d = synth_embeddings(4, 5, 1).unwrap();
        assert!(matches!(
            daa_forward(&wrong_d, &s_hat, &params),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            daa_forward(&e, &s_hat[..3], &params),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn weights_are_a_distribution() {
        let (e, s_hat, params) = fixture();
        let out = daa_forward(&e, &s_hat, &params).unwrap();
        assert!(out.weights.iter().all(|&w| w >= 0.0));
        let sum: f64 = out.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_attends_fully_regardless_of_bias() {
        let e = synth_embeddings(1, 3, 7).unwrap();
        let params = DaaParams::init(3, 2, 2, 8).unwrap();
        let a = daa_forward(&e, &[123.0], &params).unwrap();
        let mut tweaked = params.clone();
        tweaked.gamma = -40.0;
        let b = daa_forward(&e, &[-9.0], &tweaked).unwrap();
        assert_eq!(a.weights, vec![1.0]);
        assert_eq!(a.representation, b.representation);
        let expected = e.values.matmul(&params.w_v);
        assert_eq!(a.representation, expected.row(0).to_vec());
    }

    #[test]
    fn gamma_zero_is_standard_attention_bitwise() {
        let (e, s_hat, mut params) = fixture();
        params.gamma = 0.0;
        let full = daa_forward(&e, &s_hat, &params).unwrap();
        let standard = standard_attention(&e, &params).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&full.logits), bits(&standard.logits));
        assert_eq!(bits(&full.weights), bits(&standard.weights));
        assert_eq!(bits(&full.representation), bits(&standard.representation));
    }

    #[test]
    fn constant_bias_shifts_nothing() {
        let (e, _, params) = fixture();
        let constant = vec![3.25; 4];
        let biased = daa_forward(&e, &constant, &params).unwrap();
        let plain = standard_attention(&e, &params).unwrap();
        assert_close(&biased.weights, &plain.weights, 1e-9);
        assert_close(&biased.representation, &plain.representation, 1e-9);
    }

    #[test]
    fn identical_rows_get_uniform_weights() {
        let row = [0.4, -1.1, 2.0];
        let e = EmbeddingMatrix {
            values: Mat::from_vec(5, 3, row.iter().cycle().take(15).copied().collect()),
        };
        let params = DaaParams::init(3, 2, 2, 3).unwrap();
        let out = standard_attention(&e, &params).unwrap();
        for w in out.weights {
            assert!((w - 0.2).abs() < 1e-12);
        }
    }

    /// Frozen fixture (n=4, d=3, d_h=d_v=2, embedding seed 100, param seed
    /// 101, scores |normal| from seed 102): goldens from an independent
    /// dense-matrix evaluation.
    #[test]
    fn golden_standard_attention() {
        let (e, _, params) = fixture();
        let out = standard_attention(&e, &params).unwrap();
        assert_close(
            &out.weights,
            &[
                0.25294089632779865,
                0.44234678149345391,
                0.21311711698780314,
                0.091595205190944273,
            ],
            1e-12,
        );
        assert_close(
            &out.representation,
            &[-0.044430008426730949, -0.90055053880469149],
            1e-12,
        );
    }

    #[test]
    fn golden_full_forward() {
        let (e, s_hat, mut params) = fixture();
        assert_close(
            &s_hat,
            &[
                1.9117509030429387,
                1.1664575398249153,
                1.4010431651769686,
                0.54606427915650868,
            ],
            1e-12,
        );
        params.gamma = 1.7;
        let out = daa_forward(&e, &s_hat, &params).unwrap();
        assert_close(
            &out.weights,
            &[
                0.44641312381528342,
                0.31870940225180006,
                0.20357174163212688,
                0.031305732300789681,
            ],
            1e-12,
        );
        assert_close(
            &out.representation,
            &[0.46735727350218503, -0.81311908643274511],
            1e-12,
        );
    }

    #[test]
    fn golden_docking_only() {
        let (e, s_hat, mut params) = fixture();
        params.gamma = 1.7;
        let out = docking_only(&e, &s_hat, &params).unwrap();
        assert_close(
            &out.weights,
            &[
                0.4666083629844831,
                0.19048756137014519,
                0.25254209426067176,
                0.090361981384700099,
            ],
            1e-12,
        );
        assert_close(
            &out.representation,
            &[0.59930423096323593, -0.69158909460665052],
            1e-12,
        );
    }

    #[test]
    fn docking_only_concentrates_on_dominant_score() {
        let e = synth_embeddings(3, 3, 5).unwrap();
        let mut params = DaaParams::init(3, 1, 2, 6).unwrap();
        params.gamma = 1.0;
        let out = docking_only(&e, &[10.0, 0.0, 0.0], &params).unwrap();
        assert!(out.weights[0] > 0.99, "weight {}", out.weights[0]);

        params.gamma = 0.0;
        let flat = docking_only(&e, &[10.0, 0.0, 0.0], &params).unwrap();
        for w in &flat.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        let values = e.values.matmul(&params.w_v);
        for j in 0..2 {
            let mean = (0..3).map(|i| values.get(i, j)).sum::<f64>() / 3.0;
            assert!((flat.representation[j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn raising_a_score_raises_its_weight() {
        let (e, s_hat, mut params) = fixture();
        params.gamma = 0.8;
        let base = daa_forward(&e, &s_hat, &params).unwrap();
        let mut bumped = s_hat.clone();
        bumped[2] += 0.5;
        let after = daa_forward(&e, &bumped, &params).unwrap();
        assert!(after.weights[2] > base.weights[2]);

        params.gamma = -0.8;
        let base = daa_forward(&e, &s_hat, &params).unwrap();
        let after = daa_forward(&e, &bumped, &params).unwrap();
        assert!(after.weights[2] < base.weights[2]);
    }

    #[test]
    fn representation_stays_in_value_hull() {
        for seed in 0..20 {
            let e = synth_embeddings(6, 4, seed).unwrap();
            let params = DaaParams::init(4, 3, 3, seed + 1000).unwrap();
            let s_hat = SeededRng::new(seed + 2000).normal_vec(6);
            let out = daa_forward(&e, &s_hat, &params).unwrap();
            let values = e.values.matmul(&params.w_v);
            for j in 0..3 {
                let col: Vec<f64> = (0..6).map(|i| values.get(i, j)).collect();
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(out.representation[j] >= min - 1e-9);
                assert!(out.representation[j] <= max + 1e-9);
            }
        }
    }

    #[test]
    fn permuting_residues_permutes_weights() {
        let (e, s_hat, params) = fixture();
        let perm = [2usize, 0, 3, 1];
        let permuted_rows: Vec<f64> = perm
            .iter()
            .flat_map(|&i| e.values.row(i).to_vec())
            .collect();
        let pe = EmbeddingMatrix {
            values: Mat::from_vec(4, 3, permuted_rows),
        };
        let ps: Vec<f64> = perm.iter().map(|&i| s_hat[i]).collect();
        let base = daa_forward(&e, &s_hat, &params).unwrap();
        let permuted = daa_forward(&pe, &ps, &params).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((permuted.weights[k] - base.weights[i]).abs() < 1e-12);
        }
        assert_close(&permuted.representation, &base.representation, 1e-12);
    }

    #[test]
    fn non_finite_intermediates_name_their_stage() {
        let (_, s_hat, params) = fixture();
        let ones = DaaParams {
            w_q: Mat::from_vec(3, 2, vec![1.0; 6]),
            w_k: Mat::from_vec(3, 2, vec![1.0; 6]),
            w_v: Mat::from_vec(3, 2, vec![1.0; 6]),
            q_pool: vec![1.0; 3],
            gamma: 1.0,
            beta: 0.5,
        };
        let huge = EmbeddingMatrix {
            values: Mat::from_vec(4, 3, vec![1e308; 12]),
        };
        assert!(matches!(
            daa_forward(&huge, &s_hat, &ones),
            Err(Error::NonFinite("keys"))
        ));

        let mut big_q = params.clone();
        big_q.q_pool = vec![1e200; 3];
        for r in 0..3 {
            for c in 0..2 {
                big_q.w_q.set(r, c, 1e200);
            }
        }
        assert!(matches!(
            daa_forward(&synth_embeddings(4, 3, 1).unwrap(), &s_hat, &big_q),
            Err(Error::NonFinite("query"))
        ));

        let mut big_gamma = params;
        big_gamma.gamma = 1e308;
        let e = synth_embeddings(4, 3, 1).unwrap();
        assert!(matches!(
            daa_forward(&e, &[1e10, 0.0, 0.0, 0.0], &big_gamma),
            Err(Error::NonFinite("logits"))
        ));
    }

    #[test]
    fn multi_head_concatenates_in_order() {
        let (e, s_hat, params) = fixture();
        let second = DaaParams::init(3, 2, 3, 55).unwrap();
        let a = daa_forward(&e, &s_hat, &params).unwrap();
        let b = daa_forward(&e, &s_hat, &second).unwrap();
        let multi = multi_head_forward(&e, &s_hat, &[params, second]).unwrap();
        let mut expected = a.representation.clone();
        expected.extend_from_slice(&b.representation);
        assert_eq!(multi.representation, expected);
        assert_eq!(multi.heads.len(), 2);
        assert!(matches!(
            multi_head_forward(&e, &s_hat, &[]),
            Err(Error::ZeroDimension)
        ));
    }
}
