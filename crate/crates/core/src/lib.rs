pub mod analysis;
pub mod counting;
pub mod error;
pub mod interference;
pub mod profiles;
pub mod pump;
pub mod quadrature;
pub mod scan;
pub mod spdc;
pub mod special;

pub use error::{Error, Result};
