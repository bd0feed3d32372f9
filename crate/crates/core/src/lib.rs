//! Certified embedding-level robustness for small transformer classifiers.
//!
//! The crate covers the whole pipeline: contrastive pre-training of a word
//! embedding table ([`embed`]), training a transformer encoder classifier on
//! top of the frozen table ([`lm`]), and certifying with a zonotope abstract
//! domain ([`zonoset`]) that predictions survive ℓ∞ perturbations of token
//! embeddings ([`verify`]). [`dataprep`] turns tabular records and raw text
//! into `label<TAB>text` datasets.

pub mod dataprep;
pub mod embed;
pub mod error;
pub mod io;
pub mod lm;
pub mod optim;
pub mod verify;
pub mod vocab;
pub mod zonoset;

pub use error::{Error, Result};
