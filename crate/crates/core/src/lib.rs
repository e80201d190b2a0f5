//! Descriptor-based ensemble regression for the emission wavelength, radiative
//! rate constant and quantum yield of phosphorescent Pt(II) emitters.

pub mod dataset;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod physics;
pub mod pipeline;
pub mod split;
pub mod stacking;
pub mod synthetic;
pub mod tuning;
