use serde::{Deserialize, Serialize};

/// 1/√(2π), the mean of ReLU under a standard normal input.
pub const RELU_MEAN: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    /// ReLU minus its Gaussian mean.
    CenteredRelu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::CenteredRelu => x.max(0.0) - RELU_MEAN,
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative; the ReLU subgradient at 0 is 0.
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Activation::Relu | Activation::CenteredRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    /// Not differentiable at 0.
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::CenteredRelu)
    }
}
