//! Regression data in corrupted-sample form.
//!
//! A [`Dataset`] holds the corrupted feature matrix `X` (row `i` is `x̃_i`), the
//! observation mask `Z` (`true` = observed) and the labels `y`. Masked entries
//! of `X` are always zero.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{IrrError, Result};
use crate::rng;

/// One corrupted example `(x̃, z, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedSample {
    pub xt: DVector<f64>,
    pub z: Vec<bool>,
    pub y: f64,
}

impl CorruptedSample {
    /// Build a sample, zeroing features that are marked unobserved.
    pub fn new(mut xt: DVector<f64>, z: Vec<bool>, y: f64) -> Result<Self> {
        if xt.len() != z.len() {
            return Err(IrrError::dim(format!(
                "feature vector has length {}, mask has length {}",
                xt.len(),
                z.len()
            )));
        }
        for (v, &obs) in xt.iter_mut().zip(&z) {
            if !obs {
                *v = 0.0;
            }
        }
        Ok(Self { xt, z, y })
    }

    /// Sample from a fully observed vector.
    pub fn observed(x: DVector<f64>, y: f64) -> Self {
        let z = vec![true; x.len()];
        Self { xt: x, z, y }
    }

    pub fn dim(&self) -> usize {
        self.xt.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub n: usize,
    pub d: usize,
    pub fraction_remaining: f64,
}

/// Column selector for CSV input: either a zero-based index or a header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.trim().to_string()),
        })
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "{i}"),
            ColumnRef::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label: ColumnRef,
    pub has_header: bool,
    /// Columns dropped before parsing (e.g. categorical fields).
    pub skip: Vec<ColumnRef>,
}

impl CsvOptions {
    pub fn new(label: ColumnRef, has_header: bool) -> Self {
        Self {
            label,
            has_header,
            skip: Vec::new(),
        }
    }
}

/// `?` and empty cells mark a missing feature.
pub fn is_missing_token(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "?"
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    z: DMatrix<bool>,
    y: DVector<f64>,
    feature_ranges: Option<Vec<(f64, f64)>>,
    label_range: Option<(f64, f64)>,
    warnings: Vec<String>,
}

impl Dataset {
    /// Build a dataset; entries of `x` where `z` is false are forced to zero.
    pub fn new(mut x: DMatrix<f64>, z: DMatrix<bool>, y: DVector<f64>) -> Result<Self> {
        if x.shape() != z.shape() {
            return Err(IrrError::dim(format!(
                "X is {:?} but Z is {:?}",
                x.shape(),
                z.shape()
            )));
        }
        if x.nrows() != y.len() {
            return Err(IrrError::dim(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        x.zip_apply(&z, |v, obs| {
            if !obs {
                *v = 0.0;
            }
        });
        Ok(Self {
            x,
            z,
            y,
            feature_ranges: None,
            label_range: None,
            warnings: Vec::new(),
        })
    }

    /// Fully observed dataset.
    pub fn fully_observed(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let z = DMatrix::from_element(x.nrows(), x.ncols(), true);
        Self::new(x, z, y)
    }

    pub fn from_samples(samples: &[CorruptedSample]) -> Result<Self> {
        let d = samples.first().map_or(0, CorruptedSample::dim);
        if let Some(bad) = samples.iter().find(|s| s.dim() != d) {
            return Err(IrrError::dim(format!(
                "sample of dimension {} among samples of dimension {d}",
                bad.dim()
            )));
        }
        let m = samples.len();
        let x = DMatrix::from_fn(m, d, |i, k| samples[i].xt[k]);
        let z = DMatrix::from_fn(m, d, |i, k| samples[i].z[k]);
        let y = DVector::from_iterator(m, samples.iter().map(|s| s.y));
        Self::new(x, z, y)
    }

    /// Read a numeric CSV. Cells equal to `?` or empty are missing features.
    pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| IrrError::io(path, e))?;
        Self::read_csv(file, opts).map_err(|e| match e {
            IrrError::Io { source, .. } => IrrError::io(path, source),
            other => other,
        })
    }

    pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let mut records = rdr.records();
        let mut header: Option<Vec<String>> = None;
        if opts.has_header {
            match records.next() {
                Some(rec) => {
                    let rec = rec.map_err(csv_err)?;
                    header = Some(rec.iter().map(str::to_string).collect());
                }
                None => return Err(IrrError::invalid("CSV has no header row")),
            }
        }

        let resolve = |c: &ColumnRef| -> Result<usize> {
            match c {
                ColumnRef::Index(i) => Ok(*i),
                ColumnRef::Name(n) => header
                    .as_ref()
                    .and_then(|h| h.iter().position(|s| s == n))
                    .ok_or_else(|| IrrError::UnknownColumn(n.clone())),
            }
        };
        let label_col = resolve(&opts.label)?;
        let skip: Vec<usize> = opts.skip.iter().map(&resolve).collect::<Result<_>>()?;

        let mut width: Option<usize> = header.as_ref().map(Vec::len);
        let mut feat_cols: Vec<usize> = Vec::new();
        let mut xs: Vec<f64> = Vec::new();
        let mut zs: Vec<bool> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        let first_row = usize::from(opts.has_header);

        for (r, rec) in records.enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = r + first_row;
            if rec.len() == 1 && rec.get(0).is_some_and(|c| c.is_empty()) {
                continue;
            }
            let w = *width.get_or_insert(rec.len());
            if rec.len() != w {
                return Err(IrrError::RaggedRow {
                    row,
                    expected: w,
                    found: rec.len(),
                });
            }
            if feat_cols.is_empty() {
                if label_col >= w {
                    return Err(IrrError::UnknownColumn(opts.label.to_string()));
                }
                feat_cols = (0..w)
                    .filter(|c| *c != label_col && !skip.contains(c))
                    .collect();
            }
            let label = rec.get(label_col).unwrap_or_default();
            let y: f64 = label.parse().map_err(|_| IrrError::ParseCell {
                row,
                column: label_col,
                value: label.to_string(),
            })?;
            ys.push(y);
            for &c in &feat_cols {
                let cell = rec.get(c).unwrap_or_default();
                if is_missing_token(cell) {
                    xs.push(0.0);
                    zs.push(false);
                } else {
                    let v: f64 = cell.parse().map_err(|_| IrrError::ParseCell {
                        row,
                        column: c,
                        value: cell.to_string(),
                    })?;
                    xs.push(v);
                    zs.push(true);
                }
            }
        }

        let m = ys.len();
        let d = feat_cols.len();
        let x = DMatrix::from_row_slice(m, d, &xs);
        let z = DMatrix::from_row_slice(m, d, &zs);
        Self::new(x, z, DVector::from_vec(ys))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<bool> {
        &self.z
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn feature_ranges(&self) -> Option<&[(f64, f64)]> {
        self.feature_ranges.as_deref()
    }

    pub fn label_range(&self) -> Option<(f64, f64)> {
        self.label_range
    }

    /// Warnings recorded while producing this dataset (e.g. constant features).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    #[inline]
    pub fn is_observed(&self, i: usize, k: usize) -> bool {
        self.z[(i, k)]
    }

    /// `1 - z` as a real matrix.
    pub fn missing_indicator(&self) -> DMatrix<f64> {
        self.z.map(|o| if o { 0.0 } else { 1.0 })
    }

    pub fn sample(&self, i: usize) -> CorruptedSample {
        CorruptedSample {
            xt: self.x.row(i).transpose(),
            z: self.z.row(i).iter().copied().collect(),
            y: self.y[i],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = CorruptedSample> + '_ {
        (0..self.n()).map(|i| self.sample(i))
    }

    pub fn stats(&self) -> DatasetStats {
        let total = self.n() * self.d();
        let observed = self.z.iter().filter(|&&o| o).count();
        DatasetStats {
            n: self.n(),
            d: self.d(),
            fraction_remaining: if total == 0 {
                0.0
            } else {
                observed as f64 / total as f64
            },
        }
    }

    /// Min-max scale every feature (observed entries only) and the labels into [0, 1].
    ///
    /// Stored ranges always refer to the units of the originally loaded data,
    /// so normalizing twice is a no-op.
    pub fn normalize(&self) -> Dataset {
        let (m, d) = self.x.shape();
        let mut out = self.clone();
        let mut ranges = Vec::with_capacity(d);
        for k in 0..d {
            let (lo, hi) = (0..m)
                .filter(|&i| self.z[(i, k)])
                .map(|i| self.x[(i, k)])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            let width = hi - lo;
            if !lo.is_finite() {
                let msg = format!("feature {k} is never observed; left at 0");
                warn!("{msg}");
                out.warnings.push(msg);
                ranges.push((0.0, 0.0));
                continue;
            }
            if width <= 0.0 {
                let msg = format!("feature {k} is constant ({lo}); mapped to 0");
                warn!("{msg}");
                out.warnings.push(msg);
            }
            for i in 0..m {
                if self.z[(i, k)] {
                    out.x[(i, k)] = if width > 0.0 {
                        (self.x[(i, k)] - lo) / width
                    } else {
                        0.0
                    };
                }
            }
            ranges.push(compose_range(
                self.feature_ranges.as_ref().map(|r| r[k]),
                lo,
                hi,
            ));
        }

        let (lo, hi) = self
            .y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if m > 0 {
            let width = hi - lo;
            if width <= 0.0 {
                let msg = format!("labels are constant ({lo}); mapped to 0");
                warn!("{msg}");
                out.warnings.push(msg);
            }
            out.y = self
                .y
                .map(|v| if width > 0.0 { (v - lo) / width } else { 0.0 });
            out.label_range = Some(compose_range(self.label_range, lo, hi));
        }
        out.feature_ranges = Some(ranges);
        out
    }

    /// Map a label in normalized units back to the original scale.
    pub fn denormalize_label(&self, v: f64) -> f64 {
        match self.label_range {
            Some((lo, hi)) => lo + v * (hi - lo),
            None => v,
        }
    }

    /// Seeded shuffle; the first `train_size` rows become the training set.
    pub fn split(&self, train_size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if train_size > self.n() {
            return Err(IrrError::invalid(format!(
                "train_size {train_size} exceeds dataset size {}",
                self.n()
            )));
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut rng::rng(seed));
        let (tr, te) = idx.split_at(train_size);
        Ok((self.select_rows(tr), self.select_rows(te)))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let d = self.d();
        Dataset {
            x: DMatrix::from_fn(rows.len(), d, |i, k| self.x[(rows[i], k)]),
            z: DMatrix::from_fn(rows.len(), d, |i, k| self.z[(rows[i], k)]),
            y: DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]),
            feature_ranges: self.feature_ranges.clone(),
            label_range: self.label_range,
            warnings: self.warnings.clone(),
        }
    }

    /// Intersect the current mask with `mask` and zero the newly hidden entries.
    pub fn with_mask(&self, mask: &DMatrix<bool>) -> Result<Dataset> {
        if mask.shape() != self.z.shape() {
            return Err(IrrError::dim(format!(
                "mask is {:?}, dataset is {:?}",
                mask.shape(),
                self.z.shape()
            )));
        }
        let mut out = self.clone();
        out.z.zip_apply(mask, |a, b| *a = *a && b);
        let z = &out.z;
        out.x.zip_apply(z, |v, obs| {
            if !obs {
                *v = 0.0;
            }
        });
        Ok(out)
    }

    /// Replace the labels, keeping features and mask.
    pub fn with_labels(&self, y: DVector<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(IrrError::dim(format!(
                "{} labels for {} rows",
                y.len(),
                self.n()
            )));
        }
        let mut out = self.clone();
        out.y = y;
        out.label_range = None;
        Ok(out)
    }

    /// Drop every mask, treating the stored values as fully observed.
    pub fn uncorrupted(&self) -> Dataset {
        let mut out = self.clone();
        out.z.fill(true);
        out
    }
}

fn compose_range(prev: Option<(f64, f64)>, lo: f64, hi: f64) -> (f64, f64) {
    match prev {
        Some((plo, phi)) => (plo + lo * (phi - plo), plo + hi * (phi - plo)),
        None => (lo, hi),
    }
}

fn csv_err(e: csv::Error) -> IrrError {
    let row = e.position().map_or(0, |p| p.record() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IrrError::Io {
            path: Default::default(),
            source: io,
        },
        other => IrrError::invalid(format!("CSV error at record {row}: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(text: &str, label: usize) -> Result<Dataset> {
        Dataset::read_csv(
            text.as_bytes(),
            &CsvOptions::new(ColumnRef::Index(label), false),
        )
    }

    #[test]
    fn fully_observed_csv() {
        let ds = read("1,2,3\n4,5,6\n7,8,9\n", 2).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert!(ds.z().iter().all(|&o| o));
        assert_eq!(ds.y().as_slice(), &[3.0, 6.0, 9.0]);
        assert_eq!(ds.stats().fraction_remaining, 1.0);
    }

    #[test]
    fn missing_tokens_become_masked_zeros() {
        let text = "1,?,3,0\n?,2,?,1\n4,5,6,0\n,?,1,1\n7,8,?,0\n";
        let ds = read(text, 3).unwrap();
        // expected mask computed column by column from the literal text
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        for k in 0..3 {
            let missing_in_text = rows.iter().filter(|r| is_missing_token(r[k])).count();
            let masked = (0..5).filter(|&i| !ds.is_observed(i, k)).count();
            assert_eq!(missing_in_text, masked, "column {k}");
            for i in 0..5 {
                assert_eq!(ds.is_observed(i, k), !is_missing_token(rows[i][k]));
                if !ds.is_observed(i, k) {
                    assert_eq!(ds.x()[(i, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn header_and_named_label() {
        let text = "a,b,target\n1,2,3\n4,?,6\n";
        let ds = Dataset::read_csv(
            text.as_bytes(),
            &CsvOptions::new(ColumnRef::Name("target".into()), true),
        )
        .unwrap();
        assert_eq!(ds.d(), 2);
        assert!(!ds.is_observed(1, 1));
        let err = Dataset::read_csv(
            text.as_bytes(),
            &CsvOptions::new(ColumnRef::Name("nope".into()), true),
        );
        assert!(matches!(err, Err(IrrError::UnknownColumn(_))));
    }

    #[test]
    fn skip_columns() {
        let mut opts = CsvOptions::new(ColumnRef::Index(3), false);
        opts.skip.push(ColumnRef::Index(0));
        let ds = Dataset::read_csv("M,1,2,3\nF,4,5,6\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.x()[(1, 0)], 4.0);
    }

    #[test]
    fn ragged_and_bad_cells_report_position() {
        match read("1,2,3\n4,5\n", 2) {
            Err(IrrError::RaggedRow {
                row,
                expected,
                found,
            }) => {
                assert_eq!((row, expected, found), (1, 3, 2))
            }
            other => panic!("unexpected {other:?}"),
        }
        match read("1,2,3\n4,abc,6\n", 2) {
            Err(IrrError::ParseCell { row, column, .. }) => assert_eq!((row, column), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read("1,2,?\n", 2),
            Err(IrrError::ParseCell { column: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = Dataset::load_csv(
            "/definitely/not/here.csv",
            &CsvOptions::new(ColumnRef::Index(0), false),
        );
        assert!(matches!(err, Err(IrrError::Io { .. })));
    }

    #[test]
    fn normalize_maps_observed_range_to_unit_interval() {
        let x = DMatrix::from_row_slice(4, 1, &[2.0, 4.0, 0.0, 6.0]);
        let z = DMatrix::from_row_slice(4, 1, &[true, true, false, true]);
        let y = DVector::from_vec(vec![1.0, 3.0, 1.0, 3.0]);
        let ds = Dataset::new(x, z, y).unwrap().normalize();
        assert_eq!(ds.x().as_slice(), &[0.0, 0.5, 0.0, 1.0]);
        assert_eq!(ds.y().as_slice(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(ds.feature_ranges().unwrap()[0], (2.0, 6.0));
        assert_eq!(ds.denormalize_label(1.0), 3.0);
        assert!(ds.warnings().is_empty());
    }

    #[test]
    fn normalize_degenerate_feature_warns() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 5.0, 0.0]);
        let z = DMatrix::from_row_slice(3, 1, &[false, true, false]);
        let ds = Dataset::new(x, z, DVector::from_vec(vec![0.0, 1.0, 2.0]))
            .unwrap()
            .normalize();
        assert_eq!(ds.x()[(1, 0)], 0.0);
        assert_eq!(ds.warnings().len(), 1);
    }

    #[test]
    fn split_partitions_rows() {
        let x = DMatrix::from_fn(10, 2, |i, k| (i * 2 + k) as f64);
        let y = DVector::from_fn(10, |i, _| i as f64);
        let ds = Dataset::fully_observed(x, y).unwrap();
        let (tr, te) = ds.split(7, 11).unwrap();
        assert_eq!((tr.n(), te.n()), (7, 3));
        let mut all: Vec<i64> = tr
            .y()
            .iter()
            .chain(te.y().iter())
            .map(|v| *v as i64)
            .collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let (tr2, te2) = ds.split(7, 11).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        assert_eq!(tr.stats().d, ds.d());
        assert!(ds.split(11, 0).is_err());
    }

    #[test]
    fn stats_extremes() {
        let x = DMatrix::zeros(3, 2);
        let ds = Dataset::new(
            x.clone(),
            DMatrix::from_element(3, 2, false),
            DVector::zeros(3),
        )
        .unwrap();
        assert_eq!(ds.stats().fraction_remaining, 0.0);
        let ds = Dataset::fully_observed(x, DVector::zeros(3)).unwrap();
        assert_eq!(ds.stats().fraction_remaining, 1.0);
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..8, 1usize..5).prop_flat_map(|(m, d)| {
            (
                proptest::collection::vec(-50.0f64..50.0, m * d),
                proptest::collection::vec(any::<bool>(), m * d),
                proptest::collection::vec(-10.0f64..10.0, m),
            )
                .prop_map(move |(xs, zs, ys)| {
                    Dataset::new(
                        DMatrix::from_row_slice(m, d, &xs),
                        DMatrix::from_row_slice(m, d, &zs),
                        DVector::from_vec(ys),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(ds in arb_dataset()) {
            let once = ds.normalize();
            let twice = once.normalize();
            for (a, b) in once.x().iter().zip(twice.x().iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            for (a, b) in once.y().iter().zip(twice.y().iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn masked_entries_stay_zero(ds in arb_dataset(), seed in any::<u64>()) {
            let n = ds.normalize();
            let (tr, te) = n.split(n.n() / 2, seed).unwrap();
            for d in [&ds, &n, &tr, &te] {
                for (v, o) in d.x().iter().zip(d.z().iter()) {
                    prop_assert!(*o || *v == 0.0);
                }
            }
            for (v, o) in n.x().iter().zip(n.z().iter()) {
                if *o { prop_assert!((0.0..=1.0).contains(v)); }
            }
        }
    }
}
