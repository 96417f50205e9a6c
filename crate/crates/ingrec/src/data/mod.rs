//! Dataset ingestion, splits, image/feature I/O and the synthetic
//! shape-salad corpus generator.

mod corpus;
mod images;
mod split;
mod synth;

pub use corpus::{load_class_level, load_recipe_level, Corpus, Recipe};
pub use images::{read_ppm, write_ppm, ImageStore};
pub use split::{make_split, Split, SplitAssignment, SplitFractions};
pub use synth::{generate_synthetic, Primitive, Shape, SyntheticCorpus, SyntheticSpec};
