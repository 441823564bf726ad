//! Deterministic `f64` layer engine: same-padded convolutions, 2x2 pooling and
//! up-sampling, dense layers, ReLU/sigmoid/softmax, losses, and plain SGD.
//!
//! Everything operates on flat slices so a whole model's weights can live in
//! one [`ParamVector`].

pub mod activation;
pub mod conv;
pub mod dense;
pub mod error;
pub mod gemm;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod params;
pub mod pool;
pub mod sequential;
pub mod sgd;
pub mod tensor;

pub use error::{NnError, Result};
pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport};
pub use layer::{Activation, ConvSpec, DenseSpec, LayerSpec};
pub use params::{ParamVector, Segment};
pub use sequential::{Sequential, Trace};
pub use sgd::{sgd_step, sgd_step_in_place};
pub use tensor::{Batch, Shape, Tensor};
