pub mod clickfile;
pub mod completion;
pub mod dual;
pub mod error;
pub mod keyrate;
pub mod measurement;
pub mod optimize;
pub mod oracle;
pub mod pipeline;
pub mod spectra;
pub mod states;
pub mod witness;

pub use error::{Error, Result};
