//! Binary pairwise CRF toolkit: exact min-cut optimization on 4-connected
//! pixel grids, a deterministic synthetic-data factory, a small from-scratch
//! neural substrate, and an encoder-decoder network trained to mimic the
//! exact optimizer (plus the complete trainable segmentation pipeline built
//! around it).

pub mod datagen;
pub mod energy;
pub mod eval;
pub mod maxflow;
pub mod nn;
pub mod pipeline;
pub mod simulator;

pub use energy::{
    ColorImage, CrfInstance, EnergyBreakdown, Labeling, PairwiseField, ScalarField, SigmaParam,
    UnaryField,
};
pub use maxflow::{CutResult, FlowGraph};
