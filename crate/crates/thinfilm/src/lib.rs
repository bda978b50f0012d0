pub mod coefficients;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod lubrication;
pub mod new_model;
pub mod output;
pub mod profiles;
pub mod shallow_water;
pub mod series;
pub mod verify;

pub use error::{FilmError, Result};
