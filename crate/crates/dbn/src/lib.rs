//! Desk-scale restricted Boltzmann machines and deep belief networks.
//!
//! Units take values in {0, 1}. Layer 0 is the visible data and layer `l` is
//! the hidden layer of the `l`-th RBM. [`exact`] enumerates small models and
//! is the reference for every sampling path.

pub mod error;
pub mod exact;
pub mod model;
pub mod observable;
pub mod rbm;
pub mod sampling;
pub mod tap;
pub mod train;

pub use error::{DbnError, Result};
pub use model::Dbn;
pub use rbm::Rbm;
pub use train::{train_dbn, train_rbm, TrainConfig};
