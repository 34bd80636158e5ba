//! Image datasets for the deep-belief-network experiments: IDX files, block
//! downsampling with binarization, label-preserving augmentation, and the
//! narrow / medium / broad training sets of equal size.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod glyphs;
pub mod idx;
pub mod ladder;

pub use dataset::{preprocess, Dataset, Provenance};
pub use error::{DataError, Result};
pub use idx::{load_idx, RawImages};
pub use ladder::{breadth_ladder, Ladder, LadderConfig};
