//! Synthesis of labeled centriole training patches for TEM screening images.
//!
//! The pipeline, one module per stage:
//!
//! 1. [`model`] builds a soft voxel model of an orthogonal centriole pair.
//! 2. [`slicer`] rotates it, cuts a 10-voxel slab, sum-projects and blurs.
//! 3. [`segment`] isolates the central cell of a negative screening image.
//! 4. [`sampler`] picks 60×60 background boxes inside the cell, favouring
//!    flat ones with probability ∝ σ⁻⁴.
//! 5. [`composite`] subtracts the slice from the background with a
//!    quantile floor.
//! 6. [`dataset`] drives the stages, writes PNG patches and a JSON-lines
//!    manifest ([`manifest`]); [`surrogate`] supplies procedural backgrounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod composite;
pub mod config;
pub mod dataset;
pub mod error;
pub mod image;
pub mod manifest;
pub mod model;
pub mod sampler;
pub mod seed;
pub mod segment;
pub mod slicer;
pub mod surrogate;

pub use error::{ForgeError, Result};
