//! Direct volume rendering: transfer-function classification and
//! front-to-back compositing along orthographic camera rays.

mod camera;
mod composite;
mod image;
mod raycast;
mod tf;

pub use camera::Camera;
pub use composite::{composite_back_to_front, composite_front_to_back, Accumulated};
pub use image::{decode_png, encode_png_rgba, slice_rgba, DecodedPng, Frame};
pub use raycast::{
    cast_ray, clip_to_box, render_image, RayCaster, RenderSettings, DEFAULT_STEPS,
    EARLY_TERMINATION_ALPHA,
};
pub use tf::{tf_eval, ControlPoint, Rgba, TransferFunction};
