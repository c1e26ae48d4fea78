pub mod canonical;
pub mod error;
pub mod experiment;
pub mod field;
pub mod flow;
pub mod lie;
pub mod linalg;
pub mod poly;
pub mod random_fields;
pub mod region;
pub mod trainer;

pub use error::{Error, Result};
