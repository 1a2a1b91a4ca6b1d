pub mod error;
pub mod geom;
pub mod ingest;
pub mod io;
pub mod par;
pub mod model;
pub mod rng;
pub mod sim;
pub mod fit;
pub mod forest;
pub mod diag;
pub mod cli;

pub use error::{Error, Result};
