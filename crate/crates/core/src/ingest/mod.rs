//! Point cloud files (XYZ, PLY) and the per-point feature table.

mod cloud;
mod table;

pub use cloud::{read_cloud, read_cloud_auto, write_cloud, CloudFileFormat};
pub use table::{
    format_real, read_feature_table, write_feature_table, FeatureTable, C2C, CELL_COL, CELL_ROW, FOLD, LABEL,
    OPT_N, POINT_INDEX,
};
