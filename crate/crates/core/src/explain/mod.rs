//! Lead-wise Grad-CAM explanations, the classifier randomization check and
//! SVG rendering.

pub mod gradcam;
pub mod render;
pub mod sanity;

pub use gradcam::{
    cam_from_activation, explain_batch, explain_batch_with, grad_cam_per_backbone, lead_wise_explanation,
    lead_wise_explanation_with, mass_inside, minmax_normalize,
    overlay, upsample_linear, CamScore, Explanation,
};
pub use render::{render_explanation, render_svg};
pub use sanity::{average_ranks, compare, sanity_check, spearman, RandomizationEntry, RandomizationReport};
