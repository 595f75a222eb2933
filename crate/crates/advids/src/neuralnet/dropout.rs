//! Standard and alpha dropout.
//!
//! Alpha dropout sets dropped units to `α' = −λα` and applies the affine
//! correction `y → a·y + b` with `q = 1−p`, `a = (q + α'²·q·(1−q))^(−1/2)`,
//! `b = −a·(1−q)·α'`, which restores zero mean and unit variance for
//! standard-normal inputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::activations::{SELU_ALPHA, SELU_LAMBDA};
use super::NetError;

/// Dropout flavour; fixed by the model variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutKind {
    Standard,
    Alpha,
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Forward result plus the per-unit local derivative d out / d in,
/// needed when backpropagating through the same realized mask.
#[derive(Clone, Debug)]
pub struct DropoutSample {
    pub output: Vec<f64>,
    pub dscale: Vec<f64>,
}

/// Apply dropout to one activation vector. Infer mode is the identity.
pub fn dropout_forward(
    x: &[f64],
    p: f64,
    mode: Mode,
    kind: DropoutKind,
    rng: &mut ChaCha8Rng,
) -> Result<DropoutSample, NetError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NetError::InvalidRate(p));
    }
    if mode == Mode::Infer || p == 0.0 {
        return Ok(DropoutSample {
            output: x.to_vec(),
            dscale: vec![1.0; x.len()],
        });
    }
    let mut output = Vec::with_capacity(x.len());
    let mut dscale = Vec::with_capacity(x.len());
    match kind {
        DropoutKind::Standard => {
            let keep_scale = 1.0 / (1.0 - p);
            for &v in x {
                if rng.random::<f64>() < p {
                    output.push(0.0);
                    dscale.push(0.0);
                } else {
                    output.push(v * keep_scale);
                    dscale.push(keep_scale);
                }
            }
        }
        DropoutKind::Alpha => {
            let alpha_prime = -SELU_LAMBDA * SELU_ALPHA;
            let q = 1.0 - p;
            let a = (q + alpha_prime * alpha_prime * q * (1.0 - q)).powf(-0.5);
            let b = -a * (1.0 - q) * alpha_prime;
            for &v in x {
                if rng.random::<f64>() < p {
                    output.push(a * alpha_prime + b);
                    dscale.push(0.0);
                } else {
                    output.push(a * v + b);
                    dscale.push(a);
                }
            }
        }
    }
    Ok(DropoutSample { output, dscale })
}
