//! Parameter containers, layers and the optimizer.

mod layers;
mod optim;
mod params;

pub use layers::{Conv2d, Linear, LEAK};
pub use optim::Adam;
pub use params::{he_uniform, Bound, Param, ParamId, ParamSet};
