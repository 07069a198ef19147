//! Contour authoring on a shared label volume: 2D disc and 3D sphere
//! brushes, slice views of the mask, and marching-squares contours.

mod brush;
mod contour;
mod label;

pub use brush::{apply_stroke, paint_disc, paint_sphere, BrushMode, BrushStroke, StrokeTool};
pub use contour::{
    extract_contours, point_in_polygons, rasterize_polygons, signed_area, ContourSet, Polygon,
    SliceContours,
};
pub use label::{LabelVolume, MaskFile, MaskSlice};

use crate::error::Result;
use crate::volume::Axis;

/// Free-function form of [`LabelVolume::mask_slice`].
pub fn mask_slice(m: &LabelVolume, axis: Axis, index: usize) -> Result<MaskSlice> {
    m.mask_slice(axis, index)
}
