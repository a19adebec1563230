//! CSV ingestion and score files.
//!
//! Datasets are comma-separated with a header row. Numeric columns are parsed
//! as `f64`; categorical columns are expanded with a sorted category index,
//! either one-hot or binary (`ceil(log2 k)` columns, least significant bit
//! first, at least one column). The label column holds `0` or `1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EventSink, ScoredEvent};
use crate::error::{Error, Result};
use crate::types::RawRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    #[default]
    OneHot,
    Binary,
}

impl std::str::FromStr for CategoricalEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "one_hot" | "onehot" => Ok(Self::OneHot),
            "binary" => Ok(Self::Binary),
            other => Err(Error::config(format!("unknown categorical encoding '{other}'"))),
        }
    }
}

/// Which columns to read and how.
///
/// Columns not listed as categorical or ignored are numeric. `label: None`
/// reads an unlabelled file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSchema {
    pub label: Option<String>,
    pub categorical: Vec<String>,
    pub ignore: Vec<String>,
    pub encoding: CategoricalEncoding,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        Self {
            label: Some("label".into()),
            categorical: Vec::new(),
            ignore: Vec::new(),
            encoding: CategoricalEncoding::OneHot,
        }
    }
}

impl DatasetSchema {
    /// Reads a TOML sidecar, e.g. `label = "attack"`, `categorical = ["proto"]`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse { row: None, message: format!("{}: {e}", path.display()) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMap {
    pub column: String,
    /// Sorted; a category's code is its position.
    pub categories: Vec<String>,
    pub encoding: CategoricalEncoding,
}

impl CategoryMap {
    pub fn width(&self) -> usize {
        match self.encoding {
            CategoricalEncoding::OneHot => self.categories.len(),
            CategoricalEncoding::Binary => binary_width(self.categories.len()),
        }
    }

    fn encode_into(&self, value: &str, out: &mut Vec<f64>) {
        let code = self
            .categories
            .binary_search_by(|c| c.as_str().cmp(value))
            .expect("category collected in the first pass");
        match self.encoding {
            CategoricalEncoding::OneHot => {
                out.extend((0..self.categories.len()).map(|i| f64::from(u8::from(i == code))));
            }
            CategoricalEncoding::Binary => {
                out.extend((0..self.width()).map(|b| ((code >> b) & 1) as f64));
            }
        }
    }
}

/// `ceil(log2 k)` with a minimum of one column.
pub fn binary_width(categories: usize) -> usize {
    if categories <= 2 {
        1
    } else {
        (usize::BITS - (categories - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub records: Vec<RawRecord>,
    /// Names of the expanded feature columns, in record order.
    pub feature_names: Vec<String>,
    pub category_maps: Vec<CategoryMap>,
}

impl LoadedDataset {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> Option<Vec<bool>> {
        self.records.iter().map(|r| r.label).collect()
    }
}

enum Column {
    Numeric,
    Categorical(usize),
    Label,
    Ignored,
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(Some(1), e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::parse(None, format!("{}: empty file or missing header", path.display())));
    }
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // Rows are numbered as lines: header is line 1.
        let row = row.map_err(|e| Error::parse(Some(i + 2), e.to_string()))?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<LoadedDataset> {
    let (header, rows) = read_rows(path)?;
    for name in schema.categorical.iter().chain(&schema.ignore).chain(&schema.label) {
        if !header.contains(name) {
            let what = if Some(name) == schema.label.as_ref() { "label" } else { "schema" };
            return Err(Error::parse(None, format!("{what} column '{name}' not in header of {}", path.display())));
        }
    }

    let mut columns = Vec::with_capacity(header.len());
    let mut cat_columns = Vec::new();
    for (j, name) in header.iter().enumerate() {
        columns.push(if Some(name) == schema.label.as_ref() {
            Column::Label
        } else if schema.ignore.contains(name) {
            Column::Ignored
        } else if schema.categorical.contains(name) {
            cat_columns.push(j);
            Column::Categorical(cat_columns.len() - 1)
        } else {
            Column::Numeric
        });
    }

    let mut seen: Vec<BTreeSet<String>> = vec![BTreeSet::new(); cat_columns.len()];
    for row in &rows {
        for (k, &j) in cat_columns.iter().enumerate() {
            if let Some(v) = row.get(j) {
                seen[k].insert(v.to_owned());
            }
        }
    }
    let category_maps: Vec<CategoryMap> = cat_columns
        .iter()
        .zip(seen)
        .map(|(&j, set)| CategoryMap {
            column: header[j].clone(),
            categories: set.into_iter().collect(),
            encoding: schema.encoding,
        })
        .collect();

    let mut feature_names = Vec::new();
    for (name, col) in header.iter().zip(&columns) {
        match col {
            Column::Numeric => feature_names.push(name.clone()),
            Column::Categorical(k) => {
                let map = &category_maps[*k];
                match map.encoding {
                    CategoricalEncoding::OneHot => {
                        feature_names.extend(map.categories.iter().map(|c| format!("{name}={c}")))
                    }
                    CategoricalEncoding::Binary => {
                        feature_names.extend((0..map.width()).map(|b| format!("{name}#bit{b}")))
                    }
                }
            }
            Column::Label | Column::Ignored => {}
        }
    }
    if feature_names.is_empty() {
        return Err(Error::parse(None, "no feature columns"));
    }

    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        if row.len() != header.len() {
            return Err(Error::parse(
                Some(line),
                format!("{} fields, header has {}", row.len(), header.len()),
            ));
        }
        let mut values = Vec::with_capacity(feature_names.len());
        let mut label = None;
        for (j, (field, col)) in row.iter().zip(&columns).enumerate() {
            match col {
                Column::Numeric => {
                    let v: f64 = field.parse().map_err(|_| {
                        Error::parse(Some(line), format!("column '{}': '{field}' is not a number", header[j]))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::parse(Some(line), format!("column '{}' is not finite", header[j])));
                    }
                    values.push(v);
                }
                Column::Categorical(k) => category_maps[*k].encode_into(field, &mut values),
                Column::Label => {
                    label = Some(match field {
                        "0" => false,
                        "1" => true,
                        other => {
                            return Err(Error::parse(Some(line), format!("label must be 0 or 1, got '{other}'")))
                        }
                    })
                }
                Column::Ignored => {}
            }
        }
        records.push(RawRecord { index: i, values, label });
    }
    Ok(LoadedDataset { records, feature_names, category_maps })
}

/// Writes `x0..x{d-1}[,label]` with shortest round-trip number formatting.
pub fn write_dataset(path: &Path, records: &[RawRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let d = records.first().map_or(1, RawRecord::dim);
    let labelled = records.first().is_none_or(|r| r.label.is_some());
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if labelled {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in records {
        if r.dim() != d || r.label.is_some() != labelled {
            return Err(Error::config(format!("record {} does not match the first record's shape", r.index)));
        }
        let mut line = String::new();
        for (j, v) in r.values.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        if let Some(l) = r.label {
            line.push_str(if l { ",1" } else { ",0" });
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub const SCORES_HEADER: &str = "index,score,updated";

/// Streams events to a scores file as they arrive.
pub struct ScoresWriter {
    path: std::path::PathBuf,
    out: BufWriter<File>,
}

impl ScoresWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::with_capacity(1 << 16, file);
        writeln!(out, "{SCORES_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_owned(), out })
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl EventSink for ScoresWriter {
    fn emit(&mut self, e: &ScoredEvent) -> Result<()> {
        // 17 significant digits: exact round trip for f64.
        writeln!(self.out, "{},{:.16e},{}", e.index, e.score, u8::from(e.memory_updated))
            .map_err(|err| Error::io(&self.path, err))
    }
}

pub fn write_scores(events: &[ScoredEvent], path: &Path) -> Result<()> {
    let mut w = ScoresWriter::create(path)?;
    for e in events {
        w.emit(e)?;
    }
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub index: usize,
    pub score: f64,
    pub updated: bool,
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let (header, rows) = read_rows(path)?;
    if header.join(",") != SCORES_HEADER {
        return Err(Error::parse(Some(1), format!("expected header '{SCORES_HEADER}'")));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 2;
            let bad = |what: &str| Error::parse(Some(line), format!("bad {what}"));
            if row.len() != 3 {
                return Err(bad("field count"));
            }
            Ok(ScoreRow {
                index: row[0].parse().map_err(|_| bad("index"))?,
                score: row[1].parse().map_err(|_| bad("score"))?,
                updated: match &row[2] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("updated flag")),
                },
            })
        })
        .collect()
}

/// Label per record index, for aligning score files with their dataset.
pub fn labels_by_index(dataset: &LoadedDataset) -> Result<BTreeMap<usize, bool>> {
    dataset
        .records
        .iter()
        .map(|r| {
            r.label
                .map(|l| (r.index, l))
                .ok_or_else(|| Error::config("dataset has no label column"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn numeric_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,c,label\n1,2,3,0\n4,5,6,1\n7,8,9,0\n1.5,-2,3e2,0\n0,0,0,1\n");
        let ds = load_dataset(&p, &DatasetSchema::default()).unwrap();
        assert_eq!(ds.records.len(), 5);
        assert!(ds.records.iter().all(|r| r.dim() == 3));
        assert_eq!(ds.records[3].values, vec![1.5, -2.0, 300.0]);
        assert_eq!(ds.labels().unwrap(), vec![false, true, false, false, true]);
    }

    #[test]
    fn one_hot() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,cat,label\n1,c,0\n2,b,0\n3,a,1\n");
        let schema = DatasetSchema { categorical: vec!["cat".into()], ..Default::default() };
        let ds = load_dataset(&p, &schema).unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.records[1].values, vec![2.0, 0.0, 1.0, 0.0]);
        assert_eq!(ds.feature_names, vec!["x", "cat=a", "cat=b", "cat=c"]);
    }

    #[test]
    fn binary_encoding_lsb_first() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("cat,label\n");
        for c in ["h", "g", "f", "e", "d", "c", "b", "a"] {
            text.push_str(&format!("{c},0\n"));
        }
        let p = write(&dir, "a.csv", &text);
        let schema = DatasetSchema { categorical: vec!["cat".into()], encoding: CategoricalEncoding::Binary, ..Default::default() };
        let ds = load_dataset(&p, &schema).unwrap();
        assert_eq!(ds.dim(), 3);
        // "f" has sorted index 5 = 0b101.
        assert_eq!(ds.records[2].values, vec![1.0, 0.0, 1.0]);
        for r in &ds.records {
            let code = r.values.iter().enumerate().map(|(b, v)| (*v as usize) << b).sum::<usize>();
            let c = (b'a' + code as u8) as char;
            assert_eq!(c, ["h", "g", "f", "e", "d", "c", "b", "a"][r.index].chars().next().unwrap());
        }
    }

    #[test]
    fn binary_width_oracle() {
        for k in 1..=300usize {
            let mut w = 0;
            while (1usize << w) < k {
                w += 1;
            }
            assert_eq!(binary_width(k), w.max(1), "k = {k}");
        }
    }

    #[test]
    fn encoding_ignores_row_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(&dir, "a.csv", "cat,label\nx,0\ny,0\nz,1\n");
        let b = write(&dir, "b.csv", "cat,label\nz,1\nx,0\ny,0\n");
        let schema = DatasetSchema { categorical: vec!["cat".into()], ..Default::default() };
        let da = load_dataset(&a, &schema).unwrap();
        let db = load_dataset(&b, &schema).unwrap();
        assert_eq!(da.category_maps, db.category_maps);
        assert_eq!(da.records[2].values, db.records[0].values);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let schema = DatasetSchema::default();
        let cases = [
            ("empty.csv", ""),
            ("nolabel.csv", "a,b\n1,2\n"),
            ("width.csv", "a,label\n1,0\n1,2,0\n"),
            ("nan.csv", "a,label\n1,0\nfoo,1\n"),
            ("lab.csv", "a,label\n1,0\n1,2\n"),
        ];
        for (name, text) in cases {
            let p = write(&dir, name, text);
            assert!(load_dataset(&p, &schema).is_err(), "{name}");
        }
        let p = write(&dir, "nan.csv", "a,label\n1,0\nfoo,1\n");
        match load_dataset(&p, &schema) {
            Err(Error::Parse { row: Some(3), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_dataset(&dir.path().join("missing.csv"), &schema), Err(Error::Io { .. })));
    }

    #[test]
    fn unlabelled_schema() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n");
        let ds = load_dataset(&p, &DatasetSchema { label: None, ..Default::default() }).unwrap();
        assert_eq!(ds.records[0].label, None);
        assert!(ds.labels().is_none());
    }

    #[test]
    fn schema_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.toml", "label = \"y\"\ncategorical = [\"proto\"]\nencoding = \"binary\"\n");
        let s = DatasetSchema::from_file(&p).unwrap();
        assert_eq!(s.label.as_deref(), Some("y"));
        assert_eq!(s.encoding, CategoricalEncoding::Binary);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = crate::datagen::generate_syn(&crate::datagen::SynParams { samples: 300, seed: 1, ..Default::default() }).unwrap();
        let p = dir.path().join("syn.csv");
        write_dataset(&p, &recs).unwrap();
        let back = load_dataset(&p, &DatasetSchema::default()).unwrap();
        assert_eq!(back.records, recs);
    }

    #[test]
    fn scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_scores(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "index,score,updated\n");

        let mut rng = crate::rng::SeededRng::new(3);
        let events: Vec<ScoredEvent> = (0..500)
            .map(|i| ScoredEvent {
                index: i,
                score: rng.normal().exp() * 10f64.powi(i as i32 % 40 - 20),
                memory_updated: i % 3 == 0,
                neighbour_distances: vec![],
            })
            .collect();
        write_scores(&events, &p).unwrap();
        let back = read_scores(&p).unwrap();
        for (e, r) in events.iter().zip(&back) {
            assert_eq!(e.score.to_bits(), r.score.to_bits());
            assert_eq!((e.index, e.memory_updated), (r.index, r.updated));
        }
    }
}
