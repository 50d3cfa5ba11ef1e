pub mod bump;
pub mod bundles;
pub mod cones;
pub mod describe;
pub mod error;
pub mod experiment;
pub mod foliation;
pub mod io;
pub mod linear;
pub mod lyapunov;
pub mod matfun;
pub mod model;
pub mod perturb;
pub mod sampling;
pub mod semiconj;
pub mod torus;

pub use error::{LabError, Result};
