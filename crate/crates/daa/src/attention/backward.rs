//! Analytic gradients for the pooled attention, and the finite-difference
//! checker that keeps them honest.
//!
//! For a scalar loss `L = g . p_M` the chain through the softmax gives,
//! with `a = V g` and `abar = w . a`:
//!
//! ```text
//! dL/dz_i   = w_i (a_i - abar)            (softmax Jacobian)
//! dL/dgamma = sum_i dz_i s_hat_i / sqrt(d_h)
//! dL/ds_i   = gamma dz_i / sqrt(d_h)
//! dq        = K^T dz / sqrt(d_h)
//! dW_q      = q_pool dq^T        dq_pool = W_q dq
//! dW_k      = E^T (dz q^T) / sqrt(d_h)
//! dW_v      = E^T (w g^T)
//! ```
//!
//! The ablations zero exactly the blocks their forward pass never reads.

use super::{forward_pieces, AttnMode, DaaParams, Error};
use crate::mat::{dot, Mat};
use crate::rng::SeededRng;
use crate::structio::{synth_embeddings, EmbeddingMatrix};

/// Gradients of `upstream . p_M` with respect to every learnable piece,
/// plus the pass-through gradient for the smoothed scores.
#[derive(Clone, Debug, PartialEq)]
pub struct DaaGrads {
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
    pub q_pool: Vec<f64>,
    pub gamma: f64,
    pub s_hat: Vec<f64>,
}

/// Gradients for the full biased forward pass.
pub fn daa_backward(
    e: &EmbeddingMatrix,
    s_hat: &[f64],
    params: &DaaParams,
    upstream: &[f64],
) -> Result<DaaGrads, Error> {
    backward_mode(e, s_hat, params, upstream, AttnMode::Full)
}

/// Gradients for the given ablation; blocks absent from that forward pass
/// come back as zeros.
pub fn backward_mode(
    e: &EmbeddingMatrix,
    s_hat: &[f64],
    params: &DaaParams,
    upstream: &[f64],
    mode: AttnMode,
) -> Result<DaaGrads, Error> {
    if upstream.len() != params.d_v() {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient has length {}, values have d_v={}",
            upstream.len(),
            params.d_v()
        )));
    }
    let bias = if mode == AttnMode::Standard { None } else { Some(s_hat) };
    let pieces = forward_pieces(e, bias, params, mode)?;
    let n = e.n();
    let d = params.d();
    let d_h = params.d_h();
    let scale = pieces.inv_sqrt_dh;
    let w = &pieces.weights;

    // Softmax Jacobian applied to the per-residue value scores.
    let a = pieces.values.matvec(upstream);
    let abar = dot(w, &a);
    let dz: Vec<f64> = (0..n).map(|i| w[i] * (a[i] - abar)).collect();

    // Value path, shared by every mode.
    let mut w_v = Mat::zeros(d, params.d_v());
    for (i, &w_i) in w.iter().enumerate() {
        let row = e.values.row(i);
        for (r, &e_ir) in row.iter().enumerate() {
            for (c, &g_c) in upstream.iter().enumerate() {
                let cur = w_v.get(r, c);
                w_v.set(r, c, cur + e_ir * w_i * g_c);
            }
        }
    }

    // Query-key path (absent in docking-only).
    let (w_q, w_k, q_pool) = if mode == AttnMode::Docking {
        (
            Mat::zeros(d, d_h),
            Mat::zeros(d, d_h),
            vec![0.0; d],
        )
    } else {
        let mut dq = vec![0.0; d_h];
        for (i, &dz_i) in dz.iter().enumerate() {
            let k_i = pieces.keys.row(i);
            for (c, &k_ic) in k_i.iter().enumerate() {
                dq[c] += dz_i * k_ic * scale;
            }
        }
        let w_q = Mat::outer(&params.q_pool, &dq);
        let q_pool = params.w_q.matvec(&dq);
        let mut w_k = Mat::zeros(d, d_h);
        for (i, &dz_i) in dz.iter().enumerate() {
            let row = e.values.row(i);
            for (r, &e_ir) in row.iter().enumerate() {
                for (c, &q_c) in pieces.query.iter().enumerate() {
                    let cur = w_k.get(r, c);
                    w_k.set(r, c, cur + e_ir * dz_i * q_c * scale);
                }
            }
        }
        (w_q, w_k, q_pool)
    };

    // Score-bias path (absent in standard attention).
    let (gamma, s_grad) = if mode == AttnMode::Standard {
        (0.0, vec![0.0; n])
    } else {
        let gamma = (0..n).map(|i| dz[i] * s_hat[i] * scale).sum();
        let s_grad = (0..n).map(|i| params.gamma * dz[i] * scale).collect();
        (gamma, s_grad)
    };

    Ok(DaaGrads {
        w_q,
        w_k,
        w_v,
        q_pool,
        gamma,
        s_hat: s_grad,
    })
}

/// One row of a gradient-check report: parameter block name, worst
/// relative error between analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub rows: Vec<(&'static str, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error() < tolerance
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

const FD_STEP: f64 = 1e-5;

/// Builds a seeded fixture (embeddings from `seed`, scores from `seed+1`,
/// params from `seed+2`, upstream gradient from `seed+3`) and compares
/// every analytic gradient block against central finite differences.
/// Always produces a report; `passes(1e-4)` is the usual gate.
pub fn grad_check(
    seed: u64,
    n: usize,
    d: usize,
    d_h: usize,
    d_v: usize,
) -> Result<GradCheckReport, Error> {
    grad_check_with(seed, n, d, d_h, d_v, false)
}

/// As [`grad_check`], with a negative-control hook: `corrupt` adds a 0.05
/// offset to the first entry of every analytic block, which a working
/// checker must flag.
pub fn grad_check_with(
    seed: u64,
    n: usize,
    d: usize,
    d_h: usize,
    d_v: usize,
    corrupt: bool,
) -> Result<GradCheckReport, Error> {
    if n == 0 {
        return Err(Error::ZeroDimension);
    }
    let e = synth_embeddings(n, d, seed).map_err(|_| Error::ZeroDimension)?;
    let s_hat = SeededRng::new(seed.wrapping_add(1)).normal_vec(n);
    let params = DaaParams::init(d, d_h, d_v, seed.wrapping_add(2))?;
    let upstream = SeededRng::new(seed.wrapping_add(3)).normal_vec(d_v);

    let eval = |p: &DaaParams, s: &[f64]| -> f64 {
        let out = super::daa_forward(&e, s, p).expect("seeded fixture stays finite");
        dot(&upstream, &out.representation)
    };

    let mut grads = daa_backward(&e, &s_hat, &params, &upstream)?;
    if corrupt {
        grads.w_q.data_mut()[0] += 0.05;
        grads.w_k.data_mut()[0] += 0.05;
        grads.w_v.data_mut()[0] += 0.05;
        grads.q_pool[0] += 0.05;
        grads.gamma += 0.05;
        grads.s_hat[0] += 0.05;
    }

    fn block<'a>(p: &'a mut DaaParams, name: &str) -> &'a mut Mat {
        match name {
            "w_q" => &mut p.w_q,
            "w_k" => &mut p.w_k,
            _ => &mut p.w_v,
        }
    }

    let mut rows = Vec::new();
    for (name, analytic) in [("w_q", &grads.w_q), ("w_k", &grads.w_k), ("w_v", &grads.w_v)] {
        let mut worst = 0.0f64;
        for idx in 0..analytic.data().len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            block(&mut plus, name).data_mut()[idx] += FD_STEP;
            block(&mut minus, name).data_mut()[idx] -= FD_STEP;
            let fd = (eval(&plus, &s_hat) - eval(&minus, &s_hat)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[idx], fd));
        }
        rows.push((name, worst));
    }

    let mut worst = 0.0f64;
    for idx in 0..params.q_pool.len() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus.q_pool[idx] += FD_STEP;
        minus.q_pool[idx] -= FD_STEP;
        let fd = (eval(&plus, &s_hat) - eval(&minus, &s_hat)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grads.q_pool[idx], fd));
    }
    rows.push(("q_pool", worst));

    let mut plus = params.clone();
    let mut minus = params.clone();
    plus.gamma += FD_STEP;
    minus.gamma -= FD_STEP;
    let fd = (eval(&plus, &s_hat) - eval(&minus, &s_hat)) / (2.0 * FD_STEP);
    rows.push(("gamma", rel_err(grads.gamma, fd)));

    let mut worst = 0.0f64;
    for idx in 0..s_hat.len() {
        let mut plus = s_hat.clone();
        let mut minus = s_hat.clone();
        plus[idx] += FD_STEP;
        minus[idx] -= FD_STEP;
        let fd = (eval(&params, &plus) - eval(&params, &minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grads.s_hat[idx], fd));
    }
    rows.push(("s_hat", worst));

    Ok(GradCheckReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::forward_mode;

    #[test]
    fn constant_scores_kill_the_gamma_gradient() {
        let e = synth_embeddings(5, 4, 1).unwrap();
        let params = DaaParams::init(4, 3, 2, 2).unwrap();
        let g = SeededRng::new(3).normal_vec(2);
        let grads = daa_backward(&e, &[2.5; 5], &params, &g).unwrap();
        assert!(grads.gamma.abs() < 1e-12, "gamma grad {}", grads.gamma);
    }

    #[test]
    fn zero_upstream_zeroes_everything() {
        let e = synth_embeddings(5, 4, 1).unwrap();
        let params = DaaParams::init(4, 3, 2, 2).unwrap();
        let s_hat = SeededRng::new(9).normal_vec(5);
        let grads = daa_backward(&e, &s_hat, &params, &[0.0, 0.0]).unwrap();
        assert!(grads.w_q.iter().all(|&v| v == 0.0));
        assert!(grads.w_k.iter().all(|&v| v == 0.0));
        assert!(grads.w_v.iter().all(|&v| v == 0.0));
        assert!(grads.q_pool.iter().all(|&v| v == 0.0));
        assert_eq!(grads.gamma, 0.0);
        assert!(grads.s_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upstream_length_is_checked() {
        let e = synth_embeddings(5, 4, 1).unwrap();
        let params = DaaParams::init(4, 3, 2, 2).unwrap();
        let s_hat = vec![0.0; 5];
        assert!(matches!(
            daa_backward(&e, &s_hat, &params, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn analytic_matches_finite_differences_at_default_dims() {
        let report = grad_check(42, 8, 16, 8, 8).unwrap();
        assert!(report.passes(1e-4), "{:?}", report.rows);
    }

    #[test]
    fn degenerate_head_dimension_still_checks_out() {
        let report = grad_check(7, 6, 5, 1, 3).unwrap();
        assert!(report.passes(1e-4), "{:?}", report.rows);
    }

    #[test]
    fn report_is_deterministic() {
        let a = grad_check(11, 8, 16, 8, 8).unwrap();
        let b = grad_check(11, 8, 16, 8, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_gradients_are_caught() {
        let report = grad_check_with(42, 8, 16, 8, 8, true).unwrap();
        assert!(!report.passes(1e-4));
        for (name, err) in &report.rows {
            assert!(*err > 1e-4, "block {name} slipped through at {err}");
        }
    }

    /// Finite-difference check of the ablation backward passes: active
    /// blocks must match the derivative of the matching forward pass and
    /// inactive blocks must be identically zero.
    #[test]
    fn ablation_gradients_match_their_forward_passes() {
        let n = 5;
        let (d, d_h, d_v) = (4, 3, 2);
        let e = synth_embeddings(n, d, 21).unwrap();
        let s_hat = SeededRng::new(22).normal_vec(n);
        let params = DaaParams::init(d, d_h, d_v, 23).unwrap();
        let upstream = SeededRng::new(24).normal_vec(d_v);
        for mode in [AttnMode::Standard, AttnMode::Docking] {
            let eval = |p: &DaaParams, s: &[f64]| {
                dot(
                    &upstream,
                    &forward_mode(&e, s, p, mode).unwrap().representation,
                )
            };
            let grads = backward_mode(&e, &s_hat, &params, &upstream, mode).unwrap();

            // Every W_v entry is live in both ablations.
            for idx in 0..grads.w_v.data().len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.w_v.data_mut()[idx] += FD_STEP;
                minus.w_v.data_mut()[idx] -= FD_STEP;
                let fd = (eval(&plus, &s_hat) - eval(&minus, &s_hat)) / (2.0 * FD_STEP);
                assert!(rel_err(grads.w_v.data()[idx], fd) < 1e-4);
            }

            match mode {
                AttnMode::Standard => {
                    assert_eq!(grads.gamma, 0.0);
                    assert!(grads.s_hat.iter().all(|&v| v == 0.0));
                    for idx in 0..grads.w_q.data().len() {
                        let mut plus = params.clone();
                        let mut minus = params.clone();
                        plus.w_q.data_mut()[idx] += FD_STEP;
                        minus.w_q.data_mut()[idx] -= FD_STEP;
                        let fd = (eval(&plus, &s_hat) - eval(&minus, &s_hat)) / (2.0 * FD_STEP);
                        assert!(rel_err(grads.w_q.data()[idx], fd) < 1e-4);
                    }
                }
                AttnMode::Docking => {
                    assert!(grads.w_q.iter().all(|&v| v == 0.0));
                    assert!(grads.w_k.iter().all(|&v| v == 0.0));
                    assert!(grads.q_pool.iter().all(|&v| v == 0.0));
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    plus.gamma += FD_STEP;
                    minus.gamma -= FD_STEP;
                    let fd = (eval(&plus, &s_hat) - eval(&minus, &s_hat)) / (2.0 * FD_STEP);
                    assert!(rel_err(grads.gamma, fd) < 1e-4);
                    for idx in 0..n {
                        let mut plus = s_hat.clone();
                        let mut minus = s_hat.clone();
                        plus[idx] += FD_STEP;
                        minus[idx] -= FD_STEP;
                        let fd = (eval(&params, &plus) - eval(&params, &minus)) / (2.0 * FD_STEP);
                        assert!(rel_err(grads.s_hat[idx], fd) < 1e-4);
                    }
                }
                AttnMode::Full => unreachable!(),
            }
        }
    }
}
