//! Hidden-layer activations and the softmax output.

/// Scale factor of the self-normalizing exponential linear unit.
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
/// Negative-branch saturation factor of the same unit.
pub const SELU_ALPHA: f64 = 1.6732632423543772;

/// `max(0, x)`.
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `λx` for positive input, `λα(eˣ − 1)` otherwise.
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

/// Hidden activation kind; fixed by the model variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Selu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu(x),
            Activation::Selu => selu(x),
        }
    }

    /// Derivative; at exactly 0 the `x <= 0` branch applies.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp()
                }
            }
        }
    }
}

/// Numerically stable softmax; rows sum to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Categorical cross-entropy with a 1e-12 probability floor.
pub fn loss_cross_entropy(probs: &[f64], y_onehot: &[f64]) -> f64 {
    probs
        .iter()
        .zip(y_onehot)
        .map(|(&p, &y)| -y * p.max(1e-12).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_branches() {
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.0), 3.0);
        assert_eq!(relu(0.0), 0.0);
    }

    #[test]
    fn selu_reference_points() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - 1.0507009874).abs() < 1e-9);
        let expected = SELU_LAMBDA * SELU_ALPHA * ((-1.0f64).exp() - 1.0);
        assert!((selu(-1.0) - expected).abs() < 1e-15);
        assert!((selu(-1.0) + 1.11133).abs() < 1e-5);
    }

    #[test]
    fn derivative_uses_nonpositive_branch_at_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert!((Activation::Selu.derivative(0.0) - SELU_LAMBDA * SELU_ALPHA).abs() < 1e-15);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[3.0f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
        let p = softmax(&[1000.0, 1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_reference_points() {
        assert!(loss_cross_entropy(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).abs() < 1e-9);
        let uniform = [0.2; 5];
        let mut y = [0.0; 5];
        y[3] = 1.0;
        assert!((loss_cross_entropy(&uniform, &y) - 5.0f64.ln()).abs() < 1e-12);
        assert!((loss_cross_entropy(&[0.75, 0.25], &[0.0, 1.0]) - 1.38629).abs() < 1e-5);
    }
}
