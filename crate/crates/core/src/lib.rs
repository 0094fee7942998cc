pub mod basis;
pub mod config;
pub mod data;
pub mod error;
pub mod features;
pub mod fit;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod link;
pub mod numeric;
mod optim;
pub mod permutation;
pub mod select;
pub mod simulate;
pub mod tree;

pub use basis::BasisSpec;
pub use data::{Dataset, Response, ResponseDatum};
pub use error::{Error, Result};
pub use likelihood::{ModelParams, ModelSpec};
pub use link::Link;
