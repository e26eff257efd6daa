//! Parameter initialization schemes.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Normal with std `sqrt(2 / fan_in)`. Used for convolution kernels.
    He,
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`. Used for fully connected weights.
    Glorot,
    /// All zeros. Used for biases.
    Zero,
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::He => "he",
            InitScheme::Glorot => "glorot",
            InitScheme::Zero => "zero",
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "he" => Ok(InitScheme::He),
            "glorot" => Ok(InitScheme::Glorot),
            "zero" => Ok(InitScheme::Zero),
            other => Err(Error::Config(format!("unknown init scheme '{other}'"))),
        }
    }
}

/// Fan-in/fan-out for a parameter shape.
///
/// Matrices are `[fan_out, fan_in]`; convolution kernels are
/// `[c_out, c_in, kh, kw]` with fans scaled by the receptive field.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        2 => (shape[1], shape[0]),
        4 => {
            let receptive = shape[2] * shape[3];
            (shape[1] * receptive, shape[0] * receptive)
        }
        _ => {
            let n = shape.iter().product::<usize>().max(1);
            (n, n)
        }
    }
}

pub fn init_tensor(scheme: InitScheme, shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let (fan_in, fan_out) = fans(shape);
    let data = match scheme {
        InitScheme::Zero => vec![0.0; len],
        InitScheme::He => {
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is positive");
            (0..len).map(|_| normal.sample(rng)).collect()
        }
        InitScheme::Glorot => {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        }
    };
    Tensor::from_vec(shape, data).expect("length matches shape by construction")
}
