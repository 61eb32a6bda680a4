//! Point-cloud data model, exact kd-tree search and the XY grid used to
//! build spatially disjoint cross-validation folds.

pub(crate) mod grid;
mod kdtree;
mod point;

pub use grid::{assign_folds, grid_partition, CellId, FoldAssignment, GridPartition};
pub use kdtree::{KdTree, Neighbor};
pub use point::{Point3, PointCloud};
