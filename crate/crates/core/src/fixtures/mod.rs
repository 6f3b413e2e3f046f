//! The ATPF interchange container and the planted-saliency generator.

mod container;
mod synthetic;

pub use container::{
    decode, encode, read_container, write_container, Fixture, Manifest, Metadata, TensorEntry,
    FORMAT_VERSION, MAGIC,
};
pub use synthetic::{gen_synthetic, PlantedBlock, SyntheticSpec};
