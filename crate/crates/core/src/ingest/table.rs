use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FEATURE_NAMES, N_FEATURES};
use crate::geometry::CellId;
use crate::matrix::Matrix;

pub const POINT_INDEX: &str = "point_index";
pub const OPT_N: &str = "OptN";
pub const C2C: &str = "c2c_distance";
pub const LABEL: &str = "label";
pub const FOLD: &str = "fold";
pub const CELL_ROW: &str = "cell_row";
pub const CELL_COL: &str = "cell_col";

/// Per-point table: source point index plus optional column groups, in
/// this column order: the 21 features and `OptN`, C2C distance, label,
/// fold, grid cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub point_index: Vec<usize>,
    /// `n × 21` feature rows in canonical order.
    pub features: Option<Matrix>,
    pub opt_n: Option<Vec<usize>>,
    pub c2c: Option<Vec<f64>>,
    pub label: Option<Vec<u8>>,
    pub fold: Option<Vec<usize>>,
    pub cell: Option<Vec<CellId>>,
}

impl FeatureTable {
    pub fn new(point_index: Vec<usize>) -> Self {
        FeatureTable {
            point_index,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.point_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_index.is_empty()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec![POINT_INDEX.to_string()];
        if self.features.is_some() {
            h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
            h.push(OPT_N.into());
        }
        if self.c2c.is_some() {
            h.push(C2C.into());
        }
        if self.label.is_some() {
            h.push(LABEL.into());
        }
        if self.fold.is_some() {
            h.push(FOLD.into());
        }
        if self.cell.is_some() {
            h.push(CELL_ROW.into());
            h.push(CELL_COL.into());
        }
        h
    }

    /// Checks that every present column has one entry per row.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let bad = |what: &str| Err(Error::invalid(format!("feature table: {what} column length differs from row count {n}")));
        if let Some(f) = &self.features {
            if f.n_rows() != n || f.n_cols() != N_FEATURES {
                return bad("feature");
            }
            if self.opt_n.as_ref().map(Vec::len) != Some(n) {
                return bad(OPT_N);
            }
        } else if self.opt_n.is_some() {
            return Err(Error::invalid("feature table: OptN without features"));
        }
        if self.c2c.as_ref().is_some_and(|v| v.len() != n) {
            return bad(C2C);
        }
        if self.label.as_ref().is_some_and(|v| v.len() != n) {
            return bad(LABEL);
        }
        if self.fold.as_ref().is_some_and(|v| v.len() != n) {
            return bad(FOLD);
        }
        if self.cell.as_ref().is_some_and(|v| v.len() != n) {
            return bad("cell");
        }
        Ok(())
    }

    /// Keeps the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureTable {
        fn pick<V: Clone>(v: &Option<Vec<V>>, rows: &[usize]) -> Option<Vec<V>> {
            v.as_ref().map(|v| rows.iter().map(|&r| v[r].clone()).collect())
        }
        FeatureTable {
            point_index: rows.iter().map(|&r| self.point_index[r]).collect(),
            features: self.features.as_ref().map(|m| m.select_rows(rows)),
            opt_n: pick(&self.opt_n, rows),
            c2c: pick(&self.c2c, rows),
            label: pick(&self.label, rows),
            fold: pick(&self.fold, rows),
            cell: pick(&self.cell, rows),
        }
    }
}

/// Renders a real with 9 significant digits, trailing zeros trimmed.
pub fn format_real(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let s = format!("{:.*}", (8 - exp).max(0) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

pub fn write_feature_table(table: &FeatureTable, path: &Path) -> Result<()> {
    table.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_rows(table, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_rows(t: &FeatureTable, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", t.header().join(","))?;
    let mut line = String::new();
    for i in 0..t.len() {
        line.clear();
        line.push_str(&t.point_index[i].to_string());
        let mut push = |s: String| {
            line.push(',');
            line.push_str(&s);
        };
        if let (Some(f), Some(k)) = (&t.features, &t.opt_n) {
            for &v in f.row(i) {
                push(format_real(v));
            }
            push(k[i].to_string());
        }
        if let Some(c) = &t.c2c {
            push(format_real(c[i]));
        }
        if let Some(l) = &t.label {
            push(l[i].to_string());
        }
        if let Some(f) = &t.fold {
            push(f[i].to_string());
        }
        if let Some(c) = &t.cell {
            push(c[i].row.to_string());
            push(c[i].col.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(perr(1, "empty file: header row is mandatory".into())),
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();

    let mut known: Vec<&str> = vec![POINT_INDEX];
    known.extend(FEATURE_NAMES.iter());
    known.extend([OPT_N, C2C, LABEL, FOLD, CELL_ROW, CELL_COL]);
    let unknown: Vec<&str> = cols.iter().copied().filter(|c| !known.contains(c)).collect();
    if !unknown.is_empty() {
        return Err(perr(1, format!("unknown column(s): {}", unknown.join(", "))));
    }
    let has = |c: &str| cols.contains(&c);
    let has_features = FEATURE_NAMES.iter().any(|f| has(f)) || has(OPT_N);
    let mut table = FeatureTable::new(Vec::new());
    if has_features {
        table.features = Some(Matrix::zeros(0, N_FEATURES));
        table.opt_n = Some(Vec::new());
    }
    if has(C2C) {
        table.c2c = Some(Vec::new());
    }
    if has(LABEL) {
        table.label = Some(Vec::new());
    }
    if has(FOLD) {
        table.fold = Some(Vec::new());
    }
    if has(CELL_ROW) || has(CELL_COL) {
        table.cell = Some(Vec::new());
    }
    let expected = table.header();
    if cols != expected {
        return Err(perr(
            1,
            format!("columns must appear in canonical order: {}", expected.join(",")),
        ));
    }

    let mut feats: Vec<f64> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(perr(line_no, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let mut it = fields.into_iter().zip(cols.iter());
        let mut next = || it.next().expect("arity checked");
        fn int<V: std::str::FromStr>(f: (&str, &&str), line: usize, e: &dyn Fn(usize, String) -> Error) -> Result<V> {
            f.0.trim().parse().map_err(|_| e(line, format!("invalid integer {:?} in column {}", f.0, f.1)))
        }
        fn real(f: (&str, &&str), line: usize, e: &dyn Fn(usize, String) -> Error) -> Result<f64> {
            let v: f64 = f.0.trim().parse().map_err(|_| e(line, format!("invalid number {:?} in column {}", f.0, f.1)))?;
            if !v.is_finite() {
                return Err(e(line, format!("non-finite value in column {}", f.1)));
            }
            Ok(v)
        }
        table.point_index.push(int(next(), line_no, &perr)?);
        if let Some(k) = &mut table.opt_n {
            for _ in 0..N_FEATURES {
                feats.push(real(next(), line_no, &perr)?);
            }
            k.push(int(next(), line_no, &perr)?);
        }
        if let Some(c) = &mut table.c2c {
            c.push(real(next(), line_no, &perr)?);
        }
        if let Some(l) = &mut table.label {
            let v: u8 = int(next(), line_no, &perr)?;
            if v > 1 {
                return Err(perr(line_no, format!("label {v} is not 0 or 1")));
            }
            l.push(v);
        }
        if let Some(f) = &mut table.fold {
            f.push(int(next(), line_no, &perr)?);
        }
        if let Some(c) = &mut table.cell {
            let row = int(next(), line_no, &perr)?;
            let col = int(next(), line_no, &perr)?;
            c.push(CellId::new(row, col));
        }
    }
    if table.features.is_some() {
        table.features = Some(Matrix::new(table.len(), N_FEATURES, feats)?);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(n: usize, seed: u64) -> FeatureTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for _ in 0..n * N_FEATURES {
            let mag = 10f64.powi(rng.random_range(-12..12));
            data.push((rng.random::<f64>() - 0.3) * mag);
        }
        FeatureTable {
            point_index: (0..n).map(|i| i * 3).collect(),
            features: Some(Matrix::new(n, N_FEATURES, data).unwrap()),
            opt_n: Some((0..n).map(|_| rng.random_range(10..=100)).collect()),
            c2c: Some((0..n).map(|_| rng.random::<f64>() * 0.1).collect()),
            label: Some((0..n).map(|_| rng.random_range(0..2)).collect()),
            fold: Some((0..n).map(|_| rng.random_range(0..5)).collect()),
            cell: Some((0..n).map(|_| CellId::new(rng.random_range(0..9), rng.random_range(0..9))).collect()),
        }
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-7 * a.abs().max(b.abs())
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_real(0.0), "0");
        assert_eq!(format_real(0.5), "0.5");
        assert_eq!(format_real(-3.0), "-3");
        assert_eq!(format_real(1.0 / 3.0), "0.333333333");
        assert_eq!(format_real(123456.7891234), "123456.789");
        assert_eq!(format_real(1e-7 / 3.0), "3.33333333e-8");
        assert_eq!(format_real(9.9999999999), "10");
    }

    #[test]
    fn round_trip() {
        let t = random_table(300, 1);
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        write_feature_table(&t, &p).unwrap();
        let back = read_feature_table(&p).unwrap();
        assert_eq!(back.point_index, t.point_index);
        assert_eq!(back.opt_n, t.opt_n);
        assert_eq!(back.label, t.label);
        assert_eq!(back.fold, t.fold);
        assert_eq!(back.cell, t.cell);
        for (a, b) in back.features.unwrap().as_slice().iter().zip(t.features.unwrap().as_slice()) {
            assert!(rel_close(*a, *b), "{a} {b}");
        }
        for (a, b) in back.c2c.unwrap().iter().zip(t.c2c.as_ref().unwrap()) {
            assert!(rel_close(*a, *b));
        }
    }

    #[test]
    fn empty_and_single_row() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        let mut t = random_table(0, 2);
        write_feature_table(&t, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("point_index,linearity,"));
        assert_eq!(read_feature_table(&p).unwrap(), t);
        t = random_table(1, 3);
        write_feature_table(&t, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 2);
    }

    #[test]
    fn partial_groups() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        let t = FeatureTable {
            c2c: Some(vec![0.01, 0.05]),
            label: Some(vec![1, 0]),
            ..FeatureTable::new(vec![4, 9])
        };
        write_feature_table(&t, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "point_index,c2c_distance,label\n4,0.01,1\n9,0.05,0\n");
        assert_eq!(read_feature_table(&p).unwrap(), t);
    }

    #[test]
    fn read_errors() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        std::fs::write(&p, "point_index,label,colour\n1,0,3\n").unwrap();
        let e = read_feature_table(&p).unwrap_err().to_string();
        assert!(e.contains("colour"), "{e}");
        std::fs::write(&p, "point_index,label\n1,0\n2\n").unwrap();
        assert!(matches!(read_feature_table(&p).unwrap_err(), Error::Parse { line: 3, .. }));
        std::fs::write(&p, "label,point_index\n1,0\n").unwrap();
        assert!(read_feature_table(&p).unwrap_err().to_string().contains("canonical order"));
        std::fs::write(&p, "point_index,label\n1,2\n").unwrap();
        assert!(read_feature_table(&p).is_err());
        std::fs::write(&p, "point_index,linearity\n1,0.5\n").unwrap();
        assert!(read_feature_table(&p).is_err());
    }

    proptest::proptest! {
        #[test]
        fn format_real_is_accurate(m in -1.0f64..1.0, e in -30i32..30) {
            let v = m * 10f64.powi(e);
            let s = format_real(v);
            let back: f64 = s.parse().unwrap();
            proptest::prop_assert!((back - v).abs() <= 5e-9 * v.abs(), "{} -> {}", v, s);
        }
    }
}
