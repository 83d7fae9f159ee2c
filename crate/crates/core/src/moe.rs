//! Noisy-gated mixture of the three representation experts, at feature
//! level (contrastive stage) and logit level (segmentation stage).

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};
use crate::nn::{init_bias, init_xavier, Graph, ParameterStore, Real, Tensor, Var};
use crate::rng;

pub const EXPERTS: usize = 3;

/// Adds `{prefix}.zg`, `{prefix}.zn` (both `width × 3`, zero) and the
/// fusion layer `{prefix}.mlp` (`3·width → width`).
pub fn init_moe<T: Real>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    width: usize,
    rng: &mut impl rand::RngCore,
) -> Result<()> {
    store.insert(format!("{prefix}.zg"), Tensor::zeros(&[width, EXPERTS]))?;
    store.insert(format!("{prefix}.zn"), Tensor::zeros(&[width, EXPERTS]))?;
    let fan_in = EXPERTS * width;
    store.insert(
        format!("{prefix}.mlp.w"),
        init_xavier(rng, fan_in, width, fan_in, width),
    )?;
    store.insert(format!("{prefix}.mlp.b"), init_bias(width))
}

/// Standard-normal `χ`, one independent stream per `(row, expert)`.
pub fn gate_noise<T: Real>(rows: usize, seed: u64) -> Tensor<T> {
    let data = (0..rows * EXPERTS)
        .map(|i| {
            let mut r = rng::for_stream(seed, i as u64);
            let x: f64 = r.sample(StandardNormal);
            T::of(x)
        })
        .collect();
    Tensor::matrix(rows, EXPERTS, data).expect("rows x experts")
}

#[derive(Clone, Copy, Debug)]
pub struct Mixture {
    /// `α·X_r + β·X_v + γ·X_p`.
    pub output: Var,
    /// Row-softmaxed gate scores, `N × 3`.
    pub gates: Var,
}

/// `G = E·Z_g + χ·softplus(E·Z_n)` with `E = mlp([X_r ∥ X_v ∥ X_p])`; the
/// noise term is present only when `noisy`.
fn mix<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    experts: [Var; EXPERTS],
    noisy: bool,
    seed: u64,
) -> Result<Mixture> {
    let (n, d) = g.shape(experts[0]);
    if experts.iter().any(|&e| g.shape(e) != (n, d)) {
        return Err(shape_err!(
            "experts disagree: {:?}",
            experts.iter().map(|&e| g.shape(e)).collect::<Vec<_>>()
        ));
    }
    let w = g.param(store, &format!("{prefix}.mlp.w"))?;
    let b = g.param(store, &format!("{prefix}.mlp.b"))?;
    let zg = g.param(store, &format!("{prefix}.zg"))?;
    let cat = g.concat_cols(&experts)?;
    let e = g.linear(cat, w, b)?;
    let mut logits = g.matmul(e, zg)?;
    if noisy {
        let zn = g.param(store, &format!("{prefix}.zn"))?;
        let spread = g.matmul(e, zn)?;
        let spread = g.softplus(spread)?;
        let chi = g.constant(gate_noise(n, seed))?;
        let noise = g.mul(chi, spread)?;
        logits = g.add(logits, noise)?;
    }
    let gates = g.softmax_rows(logits)?;
    let mut output = None;
    for (k, &x) in experts.iter().enumerate() {
        let w = g.col(gates, k)?;
        let term = g.mul_col(x, w)?;
        output = Some(match output {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok(Mixture {
        output: output.expect("three experts"),
        gates,
    })
}

/// Feature-level fusion; noise follows the graph's train mode.
pub fn moe_fuse<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    experts: [Var; EXPERTS],
    seed: u64,
) -> Result<Mixture> {
    let noisy = g.train_mode();
    mix(g, store, prefix, experts, noisy, seed)
}

/// Logit-level fusion with the explicit noise switch `ζ`.
pub fn moe_fuse_logits<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    experts: [Var; EXPERTS],
    zeta: bool,
    seed: u64,
) -> Result<Mixture> {
    mix(g, store, prefix, experts, zeta, seed)
}

/// Gate rows as `(α, β, γ)`.
pub fn gate_scores<T: Real>(g: &Graph<T>, gates: Var) -> Vec<[f64; EXPERTS]> {
    let t = g.value(gates);
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            [row[0].as_f64(), row[1].as_f64(), row[2].as_f64()]
        })
        .collect()
}
