//! Dense matrices, a reverse-mode tape, Adam, and weight persistence.

mod adam;
pub mod gradcheck;
mod matrix;
mod params;
mod serialize;
mod tape;

pub use adam::Adam;
pub use matrix::Matrix;
pub use params::{Gradients, ParamId, ParamStore};
pub use serialize::{NamedMatrix, WeightFile, WEIGHT_FORMAT_VERSION};
pub use tape::{softmax_rows, Tape, Var};

/// Elementwise nonlinearity used by every hidden layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}
