pub mod acquisition;
pub mod bound;
pub mod domain;
pub mod error;
pub mod gp;
pub mod journal;
pub mod kernel;
pub mod seeding;
pub mod stl;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
