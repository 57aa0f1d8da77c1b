pub mod ar;
pub mod channel;
pub mod engine;
pub mod error;
pub mod gru;
pub mod sim;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
