pub mod equivint;
pub mod error;
pub mod exact;
pub mod expint;
pub mod fixtures;
pub mod futaki;
pub mod io;
pub mod polytope;
pub mod verify;
pub mod volmin;

pub use error::{Error, Result};
