//! Minimal full-batch gradient-descent trainer for the square loss, used to
//! produce the trained endpoints of the barrier comparison. It is a fixture
//! generator: nothing downstream depends on it converging.

use parampath::activations::Activation;
use parampath::error::{Error, Result};
use parampath::linalg::Matrix;
use parampath::network::{self, Dataset, LossKind, NetworkSpec, Params};

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub target_loss: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            max_steps: 50_000,
            target_loss: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    pub loss: f64,
    pub steps: usize,
    pub reached_target: bool,
}

fn activation_slope(act: &Activation, x: f64) -> f64 {
    match *act {
        Activation::LeakyRelu { slope } => {
            if x >= 0.0 {
                1.0
            } else {
                slope
            }
        }
        Activation::Relu => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Elu { alpha } => {
            if x >= 0.0 {
                1.0
            } else {
                alpha * x.exp()
            }
        }
        Activation::Linear => 1.0,
    }
}

/// Full-batch gradient descent with a fixed step until the square loss drops
/// to the target or the step cap is hit.
pub fn train_square(spec: &NetworkSpec, data: &Dataset, cfg: TrainConfig) -> Result<TrainOutcome> {
    if spec.loss != LossKind::Square {
        return Err(Error::InvalidInput(
            "the trainer only supports the square loss".into(),
        ));
    }
    let l_total = spec.num_layers();
    let n = data.num_samples();
    let ones = Matrix::from_element(n, 1, 1.0);
    let mut params = Params::random_init(spec, cfg.seed);
    let mut loss = network::loss(spec, &params, data)?.value;
    let mut steps = 0;
    while loss > cfg.target_loss && steps < cfg.max_steps {
        // Forward pass, keeping pre-activations.
        let mut features = vec![data.x().clone()];
        let mut pre_acts = Vec::with_capacity(l_total);
        for l in 1..=l_total {
            let layer = &params.layers[l - 1];
            let pre = features.last().unwrap() * &layer.w + &ones * layer.b.transpose();
            let post = if l == l_total {
                pre.clone()
            } else {
                spec.activation.apply(&pre)
            };
            pre_acts.push(pre);
            features.push(post);
        }
        // Backward pass.
        let mut grad = features.last().unwrap() - data.y();
        for l in (1..=l_total).rev() {
            let w_grad = features[l - 1].transpose() * &grad;
            let b_grad = grad.transpose() * &ones;
            let propagate = if l > 1 {
                let upstream = &grad * params.layers[l - 1].w.transpose();
                let pre = &pre_acts[l - 2];
                Some(upstream.zip_map(pre, |g, z| g * activation_slope(&spec.activation, z)))
            } else {
                None
            };
            params.layers[l - 1].w -= w_grad * cfg.learning_rate;
            params.layers[l - 1].b -= b_grad * cfg.learning_rate;
            if let Some(g) = propagate {
                grad = g;
            }
        }
        loss = network::loss(spec, &params, data)?.value;
        steps += 1;
    }
    Ok(TrainOutcome {
        reached_target: loss <= cfg.target_loss,
        params,
        loss,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use parampath::linalg;

    #[test]
    fn trains_small_regression_to_target() {
        let spec = NetworkSpec::new(
            vec![2, 16, 1],
            Activation::leaky_relu(0.01).unwrap(),
            LossKind::Square,
        )
        .unwrap();
        let mut rng = linalg::rng_from(5, 0x7121);
        let x = linalg::random_normal_matrix(8, 2, &mut rng);
        let y = Matrix::from_fn(8, 1, |i, _| (x[(i, 0)] - 0.3 * x[(i, 1)]).tanh());
        let data = Dataset::new(x, y).unwrap();
        let out = train_square(
            &spec,
            &data,
            TrainConfig {
                seed: 3,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(out.reached_target, "loss stuck at {:.3e}", out.loss);
        assert!(out.loss <= 1e-4);
    }

    #[test]
    fn rejects_cross_entropy() {
        let spec = NetworkSpec::new(
            vec![2, 8, 2],
            Activation::leaky_relu(0.01).unwrap(),
            LossKind::CrossEntropy,
        )
        .unwrap();
        let mut rng = linalg::rng_from(5, 1);
        let x = linalg::random_normal_matrix(4, 2, &mut rng);
        let mut y = Matrix::zeros(4, 2);
        for i in 0..4 {
            y[(i, i % 2)] = 1.0;
        }
        let data = Dataset::new(x, y).unwrap();
        assert!(train_square(&spec, &data, TrainConfig::default()).is_err());
    }
}
