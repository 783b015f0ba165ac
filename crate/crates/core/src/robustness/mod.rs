//! Controlled image perturbations and robustness curves.

mod curve;
mod extract;
mod image;
mod transforms;

pub use curve::{crossing_point, mean_curve, robustness_curve, RobustnessCurve};
pub use extract::{Extractor, PatchExtractor, RemoteExtractor, PATCH_TOKEN_DIM};
pub use image::Image;
pub use transforms::{
    apply_transform, factor_grid, gaussian_blur, rotate, TransformKind, TransformSpec, PADDING,
    TILING_CELLS,
};
