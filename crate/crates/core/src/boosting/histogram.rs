use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-feature bin boundaries. Bin `b` holds values in
/// `(cuts[b - 1], cuts[b]]`; the last bin is unbounded above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub cuts: Vec<Vec<f64>>,
}

impl BinMapper {
    /// Quantile boundaries from the training rows, at most `max_bins` bins
    /// per feature. Features with at most `max_bins` distinct values get one
    /// bin per value, cut at the midpoints.
    pub fn fit(x: &Matrix, max_bins: usize) -> Result<Self> {
        if !(2..=256).contains(&max_bins) {
            return Err(Error::invalid("n_bins must be in [2, 256]"));
        }
        let cuts = (0..x.n_cols())
            .map(|f| {
                let mut v = x.column(f);
                v.sort_by(f64::total_cmp);
                feature_cuts(&v, max_bins)
            })
            .collect();
        Ok(BinMapper { cuts })
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, feature: usize, value: f64) -> u8 {
        self.cuts[feature].partition_point(|&c| c < value) as u8
    }

    /// Row-major binned copy of `x`.
    pub fn transform(&self, x: &Matrix) -> Vec<u8> {
        let mut out = Vec::with_capacity(x.n_rows() * x.n_cols());
        for row in x.rows() {
            out.extend(row.iter().enumerate().map(|(f, &v)| self.bin(f, v)));
        }
        out
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn feature_cuts(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = sorted.to_vec();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for j in 1..max_bins {
        let pos = j * n / max_bins;
        let lo = sorted[pos - 1];
        // First value above `lo`.
        let above = sorted[pos..].partition_point(|&v| v <= lo) + pos;
        if above >= n {
            continue;
        }
        let c = midpoint(lo, sorted[above]);
        if cuts.last().is_none_or(|&last| c > last) {
            cuts.push(c);
        }
    }
    cuts
}

/// Gradient statistics of one bin.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BinStat {
    pub grad: f64,
    pub hess: f64,
    pub count: f64,
}

impl BinStat {
    #[inline]
    pub fn add(&mut self, g: f64, h: f64) {
        self.grad += g;
        self.hess += h;
        self.count += 1.0;
    }

    #[inline]
    pub fn sub(self, o: BinStat) -> BinStat {
        BinStat {
            grad: self.grad - o.grad,
            hess: self.hess - o.hess,
            count: self.count - o.count,
        }
    }
}

/// Histograms of one tree node over the features sampled for the tree,
/// stored back to back.
#[derive(Clone, Debug)]
pub struct NodeHistogram {
    pub bins: Vec<BinStat>,
}

/// Layout of the per-node histograms for one tree.
pub struct HistogramLayout {
    pub features: Vec<usize>,
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl HistogramLayout {
    pub fn new(mapper: &BinMapper, features: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(features.len());
        let mut total = 0;
        for &f in &features {
            offsets.push(total);
            total += mapper.n_bins(f);
        }
        HistogramLayout {
            features,
            offsets,
            total,
        }
    }

    pub fn build(&self, binned: &[u8], n_cols: usize, rows: &[u32], grad: &[f64], hess: &[f64]) -> NodeHistogram {
        let mut bins = vec![BinStat::default(); self.total];
        for &r in rows {
            let r = r as usize;
            let g = grad[r];
            let h = hess[r];
            let row = &binned[r * n_cols..(r + 1) * n_cols];
            for (&f, &off) in self.features.iter().zip(&self.offsets) {
                bins[off + row[f] as usize].add(g, h);
            }
        }
        NodeHistogram { bins }
    }

    pub fn subtract(&self, parent: &NodeHistogram, child: &NodeHistogram) -> NodeHistogram {
        NodeHistogram {
            bins: parent
                .bins
                .iter()
                .zip(&child.bins)
                .map(|(p, c)| p.sub(*c))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn few_distinct_values_get_one_bin_each() {
        let x = Matrix::column_vector(&[3.0, 1.0, 2.0, 2.0, 1.0]);
        let m = BinMapper::fit(&x, 256).unwrap();
        assert_eq!(m.cuts[0], vec![1.5, 2.5]);
        assert_eq!(m.bin(0, 1.0), 0);
        assert_eq!(m.bin(0, 2.0), 1);
        assert_eq!(m.bin(0, 3.0), 2);
        assert_eq!(m.bin(0, 1.5), 0);
        assert_eq!(m.bin(0, 100.0), 2);
    }

    #[test]
    fn quantile_edges_strictly_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>().powi(3)).collect();
        // Heavy ties.
        v.extend(std::iter::repeat_n(0.5, 5000));
        let m = BinMapper::fit(&Matrix::column_vector(&v), 256).unwrap();
        let c = &m.cuts[0];
        assert!(c.len() <= 255 && c.len() > 200);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        for &x in &v {
            let b = m.bin(0, x) as usize;
            assert!(b == 0 || c[b - 1] < x);
            assert!(b == c.len() || x <= c[b]);
        }
    }

    #[test]
    fn rejects_bad_bin_count() {
        assert!(BinMapper::fit(&Matrix::column_vector(&[1.0]), 1).is_err());
        assert!(BinMapper::fit(&Matrix::column_vector(&[1.0]), 257).is_err());
    }

    #[test]
    fn subtraction_matches_direct_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<[f64; 2]> = (0..300).map(|_| [rng.random(), rng.random()]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = BinMapper::fit(&x, 16).unwrap();
        let binned = m.transform(&x);
        let g: Vec<f64> = (0..300).map(|_| rng.random::<f64>() - 0.5).collect();
        let h: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let layout = HistogramLayout::new(&m, vec![0, 1]);
        let all: Vec<u32> = (0..300).collect();
        let left: Vec<u32> = (0..300).filter(|i| i % 3 == 0).collect();
        let right: Vec<u32> = (0..300).filter(|i| i % 3 != 0).collect();
        let p = layout.build(&binned, 2, &all, &g, &h);
        let l = layout.build(&binned, 2, &left, &g, &h);
        let r = layout.build(&binned, 2, &right, &g, &h);
        let r2 = layout.subtract(&p, &l);
        for (a, b) in r.bins.iter().zip(&r2.bins) {
            assert!((a.grad - b.grad).abs() < 1e-12);
            assert!((a.hess - b.hess).abs() < 1e-12);
            assert_eq!(a.count, b.count);
        }
    }
}
