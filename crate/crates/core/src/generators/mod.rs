//! Design construction: Latin hypercubes, cross arrays, jittered cross arrays,
//! noise-array transformations, and internal-noise levels.

mod cross;
mod internal;
mod lhd;
mod noise;

pub use cross::{
    cross_array, fill_distance, jittered_cross_array, CrossArrayStructure, FillDistance, JitteredCrossArray,
    DEFAULT_RESTARTS,
};
pub use internal::{optimal_internal_design, InternalDesign};
pub use lhd::{maximin_lhd, maxpro_criterion, maxpro_lhd, uniform_design, DEFAULT_ITERS};
pub use noise::{
    double_transformed_noise, hybrid_noise_design, optimal_1d_design, robust_1d_noise_design, transformed_noise,
    RobustDesign, RobustOptions, ThetaOptimum, Transformation1D,
};
