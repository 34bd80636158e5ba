//! Hierarchical Feature Model (HFM) workbench.
//!
//! * [`model`]: exact arithmetic for `h_n(s) = exp(-g m_s) / Z_n`, its marginals,
//!   entropy, relevance and sampling.
//! * [`rg`]: the coarse-graining and fine-graining transformations on dense
//!   distributions, their entropy-matching solvers and the de Bruijn transition
//!   matrix.
//! * [`analysis`]: gauge fixing, permutation fitting, prefix KL curves, peak
//!   decomposition and the Kendall diagnostic for empirical layer samples.
//!
//! Feature `s_1` is the most coarse-grained one and is stored in bit 0 of a
//! packed state, so the dense index of a state is `sum_i s_i 2^(i-1)`.

pub mod analysis;
pub mod dist;
mod error;
pub mod info;
pub mod model;
pub mod rg;
pub mod sample;
pub mod state;

pub use dist::DenseDistribution;
pub use error::{HfmError, Result};
pub use model::{HfmParams, G_CRITICAL};
pub use sample::EmpiricalSample;
pub use state::FeatureState;
