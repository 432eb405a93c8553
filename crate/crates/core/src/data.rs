//! Dataset loading, scaling and seeded train/test partitions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combine::Labels;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// The 683-row Wisconsin breast-cancer table shipped in `data/cancer.csv`.
pub const CANCER_CSV: &str = include_str!("../../../data/cancer.csv");

/// SHA-256 of [`CANCER_CSV`].
pub const CANCER_SHA256: &str = "f8fcf8aa9d007ad3581cbe3898a0b044312215fdb51580ae37a68c3abfb52268";

pub const CANCER_ID: &str = "bundled:cancer";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Matrix,
    y: Labels,
    feature_names: Option<Vec<String>>,
    source_id: String,
}

impl LabeledDataset {
    pub fn new(x: Matrix, y: Labels, feature_names: Option<Vec<String>>, source_id: impl Into<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if !x.all_finite() {
            return Err(Error::NonFinite);
        }
        if let Some(names) = &feature_names {
            if names.len() != x.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: x.ncols(),
                    got: names.len(),
                });
            }
        }
        Ok(Self {
            x,
            y,
            feature_names,
            source_id: source_id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Labels {
        &self.y
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: self.y.select(indices),
            feature_names: self.feature_names.clone(),
            source_id: self.source_id.clone(),
        }
    }

    /// Same rows with the feature matrix replaced.
    pub fn with_features(&self, x: Matrix) -> Result<Self> {
        Self::new(x, self.y.clone(), self.feature_names.clone(), self.source_id.clone())
    }
}

/// Raw label text to ±1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap(Vec<(String, i8)>);

impl LabelMap {
    pub fn new(entries: Vec<(String, i8)>) -> Result<Self> {
        for (name, v) in &entries {
            if *v != 1 && *v != -1 {
                return Err(Error::invalid(format!("label `{name}` must map to +1 or -1")));
            }
        }
        Ok(Self(entries))
    }

    /// `malignant → +1`, `benign → −1`.
    pub fn cancer() -> Self {
        Self(vec![("malignant".into(), 1), ("benign".into(), -1)])
    }

    pub fn get(&self, raw: &str) -> Option<i8> {
        let raw = raw.trim();
        self.0.iter().find(|(k, _)| k == raw).map(|&(_, v)| v)
    }
}

impl Default for LabelMap {
    fn default() -> Self {
        Self(vec![("+1".into(), 1), ("1".into(), 1), ("-1".into(), -1)])
    }
}

/// `name=+1,other=-1`.
impl FromStr for LabelMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|pair| {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("label mapping `{pair}` is not name=value")))?;
                let v: i8 = v
                    .trim()
                    .trim_start_matches('+')
                    .parse()
                    .map_err(|_| Error::invalid(format!("label value `{v}`")))?;
                Ok((k.trim().to_string(), v))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelimitedOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: LabelColumn,
    pub label_map: LabelMap,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            label_column: LabelColumn::Last,
            label_map: LabelMap::default(),
        }
    }
}

pub fn load_delimited(path: &Path, opts: &DelimitedOptions) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_delimited(&text, &path.display().to_string(), opts)
}

/// Parses delimited text. Missing cells (empty or `?`) are rejected.
pub fn parse_delimited(text: &str, source: &str, opts: &DelimitedOptions) -> Result<LabeledDataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header: Option<Vec<String>> = if opts.has_header {
        let h = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut label_at = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let cols = record.len();
        if cols < 2 {
            return Err(parse_err(line, "need at least one feature and a label".into()));
        }
        let li = *label_at.get_or_insert(match &opts.label_column {
            LabelColumn::Last => cols - 1,
            LabelColumn::Index(i) => *i,
            LabelColumn::Name(name) => header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| parse_err(1, format!("no label column named `{name}`")))?,
        });
        if li >= cols {
            return Err(parse_err(line, format!("label column {} out of range", li + 1)));
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => return Err(parse_err(line, format!("expected {w} columns, found {cols}"))),
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            if j == li {
                let y = opts
                    .label_map
                    .get(cell)
                    .ok_or_else(|| parse_err(line, format!("column {}: unknown label `{cell}`", j + 1)))?;
                labels.push(y);
                continue;
            }
            if cell.is_empty() || cell == "?" {
                return Err(parse_err(line, format!("column {}: missing value", j + 1)));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: not a number: `{cell}`", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value", j + 1)));
            }
            data.push(v);
        }
    }
    let (Some(w), Some(li)) = (width, label_at) else {
        return Err(Error::Empty("delimited file has no data rows"));
    };
    let d = w - 1;
    let names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|&(j, _)| j != li)
            .map(|(_, s)| s)
            .collect()
    });
    let x = Matrix::from_row_major(labels.len(), d, data);
    LabeledDataset::new(x, Labels::new(labels)?, names, source)
}

pub fn load_sparse_format(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sparse(&text, &path.display().to_string())
}

/// `label idx:val ...` lines with 1-based indices; absent indices are zero
/// and the dimension is the largest index seen.
pub fn parse_sparse(text: &str, source: &str) -> Result<LabeledDataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let map = LabelMap::default();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0usize;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().unwrap_or_default();
        let y = map
            .get(label)
            .ok_or_else(|| parse_err(line, format!("unknown label `{label}`")))?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line, format!("expected idx:val, found `{tok}`")))?;
            let i: usize = i
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| parse_err(line, format!("bad index `{i}`")))?;
            let v: f64 = v
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad value `{v}`")))?;
            if row.iter().any(|&(k, _)| k == i) {
                return Err(parse_err(line, format!("duplicate index {i}")));
            }
            d = d.max(i);
            row.push((i, v));
        }
        rows.push(row);
        labels.push(y);
    }
    if rows.is_empty() {
        return Err(Error::Empty("sparse file has no data lines"));
    }
    let mut x = Matrix::zeros(rows.len(), d);
    for (r, row) in rows.iter().enumerate() {
        for &(i, v) in row {
            x[(r, i - 1)] = v;
        }
    }
    LabeledDataset::new(x, Labels::new(labels)?, None, source)
}

/// The bundled cancer table with `malignant → +1`.
pub fn cancer_dataset() -> Result<LabeledDataset> {
    let opts = DelimitedOptions {
        has_header: true,
        label_column: LabelColumn::Name("class".into()),
        label_map: LabelMap::cancer(),
        ..Default::default()
    };
    parse_delimited(CANCER_CSV, CANCER_ID, &opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlan {
    pub master_seed: u64,
    pub repetitions: usize,
    pub train_fraction: f64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            master_seed: 0,
            repetitions: 10,
            train_fraction: 0.7,
        }
    }
}

impl SplitPlan {
    pub fn train_size(&self, n: usize) -> Result<usize> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        let k = (self.train_fraction * n as f64).floor() as usize;
        if k == 0 || k >= n {
            return Err(Error::invalid(format!(
                "train fraction {} leaves an empty side for n = {n}",
                self.train_fraction
            )));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Repetition `r` shuffles `0..n` with ChaCha8 seeded from `master_seed` on
/// stream `r`, then takes the first `⌊fraction·n⌋` indices for training.
/// Both index lists are returned sorted.
pub fn make_splits(n: usize, plan: &SplitPlan) -> Result<Vec<Split>> {
    let k = plan.train_size(n)?;
    Ok((0..plan.repetitions)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.master_seed);
            rng.set_stream(r as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i as u64) as usize;
                perm.swap(i, j);
            }
            let mut train = perm[..k].to_vec();
            let mut test = perm[k..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalingMode {
    #[default]
    None,
    UnitInterval,
    ZScore,
}

impl FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "raw" => Ok(ScalingMode::None),
            "unit" | "unit_interval" => Ok(ScalingMode::UnitInterval),
            "zscore" => Ok(ScalingMode::ZScore),
            other => Err(Error::invalid(format!("unknown scaling mode `{other}`"))),
        }
    }
}

impl fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingMode::None => "none",
            ScalingMode::UnitInterval => "unit",
            ScalingMode::ZScore => "zscore",
        })
    }
}

/// Per-feature `(v − shift) / scale`, fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTransform {
    mode: ScalingMode,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl ScalingTransform {
    pub fn fit(train: &Matrix, mode: ScalingMode) -> Self {
        let d = train.ncols();
        let n = train.nrows();
        let (shift, scale) = match mode {
            ScalingMode::None => (vec![0.0; d], vec![1.0; d]),
            ScalingMode::UnitInterval => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for row in train.rows() {
                    for j in 0..d {
                        lo[j] = lo[j].min(row[j]);
                        hi[j] = hi[j].max(row[j]);
                    }
                }
                let scale = lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| if h > l { h - l } else { f64::INFINITY })
                    .collect();
                let lo = lo.into_iter().map(|l| if l.is_finite() { l } else { 0.0 }).collect();
                (lo, scale)
            }
            ScalingMode::ZScore => {
                let mut mean = vec![0.0; d];
                for row in train.rows() {
                    for j in 0..d {
                        mean[j] += row[j];
                    }
                }
                for m in &mut mean {
                    *m /= n.max(1) as f64;
                }
                let mut var = vec![0.0; d];
                for row in train.rows() {
                    for j in 0..d {
                        var[j] += (row[j] - mean[j]).powi(2);
                    }
                }
                let scale = var
                    .iter()
                    .map(|v| {
                        let sd = (v / n.max(1) as f64).sqrt();
                        if sd > 0.0 {
                            sd
                        } else {
                            1.0
                        }
                    })
                    .collect();
                (mean, scale)
            }
        };
        Self { mode, shift, scale }
    }

    pub fn mode(&self) -> ScalingMode {
        self.mode
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Constant training features (infinite scale) map to zero.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.shift.len() {
            return Err(Error::DimensionMismatch {
                expected: self.shift.len(),
                got: x.ncols(),
            });
        }
        if self.mode == ScalingMode::None {
            return Ok(x.clone());
        }
        Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            let s = self.scale[j];
            if s.is_infinite() {
                0.0
            } else {
                (x[(i, j)] - self.shift[j]) / s
            }
        }))
    }
}

pub fn fit_apply_scaling(
    train: &Matrix,
    test: &Matrix,
    mode: ScalingMode,
) -> Result<(Matrix, Matrix, ScalingTransform)> {
    let t = ScalingTransform::fit(train, mode);
    Ok((t.apply(train)?, t.apply(test)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_file() {
        let ds = parse_delimited("1,2,+1\n3,4,-1\n", "t", &DelimitedOptions::default()).unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 2));
        assert_eq!(ds.y().as_slice(), &[1, -1]);
        assert_eq!(ds.x().row(1), &[3.0, 4.0]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let err = parse_delimited("1,2,+1\n3,x,-1\n", "t", &DelimitedOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("column 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_and_unknown_rejected() {
        let o = DelimitedOptions::default();
        assert!(parse_delimited("1,,+1\n", "t", &o).is_err());
        assert!(parse_delimited("1,?,+1\n", "t", &o).is_err());
        assert!(parse_delimited("1,2,3\n", "t", &o).is_err());
        assert!(parse_delimited("1,2,1\n1,1\n", "t", &o).is_err());
        assert!(parse_delimited("", "t", &o).is_err());
    }

    #[test]
    fn cancer_table() {
        let ds = cancer_dataset().unwrap();
        assert_eq!((ds.n(), ds.d()), (683, 9));
        let malignant = ds.y().as_slice().iter().filter(|&&v| v == 1).count();
        assert_eq!(malignant, 239);
        assert_eq!(ds.feature_names().unwrap()[0], "clump_thickness");
    }

    #[test]
    fn sparse_lines() {
        let ds = parse_sparse("+1 1:0.5 3:2\n", "t").unwrap();
        assert_eq!(ds.x().row(0), &[0.5, 0.0, 2.0]);
        assert!(parse_sparse("", "t").is_err());
        match parse_sparse("-1 1:1\n+1 2:1 2:3\n", "t").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_sparse("+1 0:1\n", "t").is_err());
    }

    #[test]
    fn split_sizes() {
        let plan = SplitPlan::default();
        let splits = make_splits(683, &plan).unwrap();
        assert_eq!(splits.len(), 10);
        for s in &splits {
            assert_eq!((s.train.len(), s.test.len()), (478, 205));
        }
        assert_eq!(splits, make_splits(683, &plan).unwrap());
        assert_ne!(splits[0], splits[1]);
        assert!(make_splits(
            3,
            &SplitPlan {
                train_fraction: 0.2,
                ..plan
            }
        )
        .is_err());
        assert!(make_splits(
            10,
            &SplitPlan {
                train_fraction: 1.0,
                ..plan
            }
        )
        .is_err());
    }

    #[test]
    fn unit_interval_example() {
        let train = Matrix::from_rows(&[[0.0, 3.0], [10.0, 3.0]]).unwrap();
        let test = Matrix::from_rows(&[[5.0, 7.0]]).unwrap();
        let (a, b, _) = fit_apply_scaling(&train, &test, ScalingMode::UnitInterval).unwrap();
        assert_eq!(a.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(b.as_slice(), &[0.5, 0.0]);
    }

    #[test]
    fn zscore_constant_feature() {
        let train = Matrix::from_rows(&[[2.0, 1.0], [2.0, 3.0]]).unwrap();
        let (a, _, t) = fit_apply_scaling(&train, &train, ScalingMode::ZScore).unwrap();
        assert_eq!(a.as_slice(), &[0.0, -1.0, 0.0, 1.0]);
        assert_eq!(t.scale(), &[1.0, 1.0]);
    }

    #[test]
    fn none_is_identity() {
        let m = Matrix::from_rows(&[[1.5, -2.0]]).unwrap();
        let (a, b, _) = fit_apply_scaling(&m, &m, ScalingMode::None).unwrap();
        assert_eq!((a, b), (m.clone(), m));
    }

    #[test]
    fn label_map_parsing() {
        let m: LabelMap = "yes=+1, no=-1".parse().unwrap();
        assert_eq!(m.get("yes"), Some(1));
        assert_eq!(m.get("no"), Some(-1));
        assert!("a=2".parse::<LabelMap>().is_err());
    }
}
