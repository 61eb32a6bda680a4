use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::scalar::Scalar;

/// XY grid cell, `row` along y and `col` along x.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub row: u32,
    pub col: u32,
}

impl CellId {
    pub fn new(row: u32, col: u32) -> Self {
        CellId { row, col }
    }
}

/// Non-overlapping square XY cells anchored at the bounding-box minimum.
#[derive(Clone, Debug)]
pub struct GridPartition<T> {
    cell_size: T,
    origin: [T; 2],
    cells: Vec<CellId>,
}

impl<T: Scalar> GridPartition<T> {
    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn origin(&self) -> [T; 2] {
        self.origin
    }

    /// Cell of point `i`.
    pub fn cell_of(&self, i: usize) -> CellId {
        self.cells[i]
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Distinct occupied cells in ascending (row, col) order.
    pub fn non_empty_cells(&self) -> Vec<CellId> {
        let mut c = self.cells.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Cell of an XY coordinate under the floor rule shared by the grid partition
/// and the accumulation map.
#[inline]
pub(crate) fn floor_cell<T: Scalar>(x: T, y: T, origin: [T; 2], size: T) -> CellId {
    let row = ((y - origin[1]) / size).floor();
    let col = ((x - origin[0]) / size).floor();
    CellId::new(
        row.to_u32().unwrap_or(u32::MAX),
        col.to_u32().unwrap_or(u32::MAX),
    )
}

pub fn grid_partition<T: Scalar>(cloud: &PointCloud<T>, cell_size: T) -> Result<GridPartition<T>> {
    if !(cell_size > T::zero()) || !cell_size.is_finite() {
        return Err(Error::invalid(format!("cell_size must be positive, got {cell_size}")));
    }
    let (lo, _) = cloud.bounds().ok_or_else(|| Error::invalid("empty cloud"))?;
    let origin = [lo.x, lo.y];
    let cells = cloud
        .iter()
        .map(|p| floor_cell(p.x, p.y, origin, cell_size))
        .collect();
    Ok(GridPartition {
        cell_size,
        origin,
        cells,
    })
}

/// Whole cells dealt to folds. There is intentionally no way to move a single
/// point: a point's fold is always the fold of its cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldAssignment {
    n_folds: usize,
    seed: u64,
    fold_of_cell: BTreeMap<CellId, usize>,
}

impl FoldAssignment {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of_cell(&self, cell: CellId) -> Option<usize> {
        self.fold_of_cell.get(&cell).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = (CellId, usize)> + '_ {
        self.fold_of_cell.iter().map(|(&c, &f)| (c, f))
    }

    /// Fold of every point of the partition.
    pub fn point_folds<T: Scalar>(&self, partition: &GridPartition<T>) -> Vec<usize> {
        partition
            .cells()
            .iter()
            .map(|c| self.fold_of_cell[c])
            .collect()
    }

    /// Number of cells in each fold.
    pub fn cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_folds];
        for &f in self.fold_of_cell.values() {
            counts[f] += 1;
        }
        counts
    }
}

/// Shuffles the occupied cells with `seed` and deals them round-robin.
pub fn assign_folds<T: Scalar>(
    partition: &GridPartition<T>,
    n_folds: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    assign_cells(partition.non_empty_cells(), n_folds, seed)
}

pub(crate) fn assign_cells(mut cells: Vec<CellId>, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::invalid("n_folds must be at least 2"));
    }
    cells.sort_unstable();
    cells.dedup();
    if cells.len() < n_folds {
        return Err(Error::degenerate(format!(
            "too few cells: {} non-empty cells for {n_folds} folds",
            cells.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cells.shuffle(&mut rng);
    let fold_of_cell = cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i % n_folds))
        .collect();
    Ok(FoldAssignment {
        n_folds,
        seed,
        fold_of_cell,
    })
}
