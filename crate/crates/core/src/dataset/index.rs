use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::dataset::record::{BinaryClass, Magnification, SampleRecord};
use crate::error::{Error, Result};

/// Image totals usually quoted for the public corpus: the per-class table
/// total and the larger figure cited for the full release.
pub const QUOTED_CORPUS_TOTALS: [u64; 2] = [7909, 9109];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRow {
    pub benign: u64,
    pub malignant: u64,
    pub total: u64,
}

impl CountRow {
    pub fn consistent(&self) -> bool {
        self.benign + self.malignant == self.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnificationRow {
    pub magnification: Magnification,
    pub counts: CountRow,
}

/// Magnification × class count table. `total` is stored, not derived, so a
/// table transcribed from elsewhere can be checked for internal
/// consistency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountTable {
    pub rows: Vec<MagnificationRow>,
    pub total: CountRow,
}

/// One failed consistency or reconciliation check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discrepancy {
    /// `"40X"`, `"total"` or a column name.
    pub location: String,
    pub detail: String,
}

impl CountTable {
    pub fn from_records(records: &[SampleRecord]) -> Self {
        let mut per_mag: BTreeMap<Magnification, CountRow> = Magnification::ALL.iter().map(|&m| (m, CountRow::default())).collect();
        for r in records {
            let row = per_mag.get_mut(&r.magnification).expect("all magnifications present");
            match r.binary_class {
                BinaryClass::Benign => row.benign += 1,
                BinaryClass::Malignant => row.malignant += 1,
            }
            row.total += 1;
        }
        let mut total = CountRow::default();
        for row in per_mag.values() {
            total.benign += row.benign;
            total.malignant += row.malignant;
            total.total += row.total;
        }
        Self {
            rows: per_mag
                .into_iter()
                .map(|(magnification, counts)| MagnificationRow { magnification, counts })
                .collect(),
            total,
        }
    }

    /// The per-magnification table as commonly transcribed for BreakHis 1.0,
    /// including its misprinted 40X benign cell.
    pub fn breakhis_v1_transcribed() -> Self {
        let row = |m: u16, benign, malignant, total| MagnificationRow {
            magnification: Magnification::new(m).expect("valid"),
            counts: CountRow { benign, malignant, total },
        };
        Self {
            rows: vec![
                row(40, 652, 1370, 1995),
                row(100, 644, 1437, 2081),
                row(200, 623, 1390, 2013),
                row(400, 588, 1232, 1820),
            ],
            total: CountRow {
                benign: 2480,
                malignant: 5429,
                total: 7909,
            },
        }
    }

    pub fn row(&self, m: Magnification) -> Option<&CountRow> {
        self.rows.iter().find(|r| r.magnification == m).map(|r| &r.counts)
    }

    /// Rows whose class counts do not add up to their total, and columns
    /// whose per-magnification entries do not add up to the total row.
    pub fn internal_inconsistencies(&self) -> Vec<Discrepancy> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !r.counts.consistent() {
                out.push(Discrepancy {
                    location: r.magnification.to_string(),
                    detail: format!(
                        "{} + {} = {} but total reads {}",
                        r.counts.benign,
                        r.counts.malignant,
                        r.counts.benign + r.counts.malignant,
                        r.counts.total
                    ),
                });
            }
        }
        if !self.total.consistent() {
            out.push(Discrepancy {
                location: "total".into(),
                detail: format!("{} + {} != {}", self.total.benign, self.total.malignant, self.total.total),
            });
        }
        let columns: [(&str, fn(&CountRow) -> u64); 3] = [
            ("benign", |c| c.benign),
            ("malignant", |c| c.malignant),
            ("total", |c| c.total),
        ];
        for (name, get) in columns {
            let sum: u64 = self.rows.iter().map(|r| get(&r.counts)).sum();
            if sum != get(&self.total) {
                out.push(Discrepancy {
                    location: format!("{name} column"),
                    detail: format!("rows sum to {sum} but total row reads {}", get(&self.total)),
                });
            }
        }
        out
    }

    /// Cell-by-cell differences between counted values (`self`) and a
    /// reference table.
    pub fn reconcile(&self, reference: &CountTable) -> Vec<Discrepancy> {
        let mut out = Vec::new();
        let mut compare = |location: String, actual: &CountRow, expected: &CountRow| {
            for (name, a, e) in [
                ("benign", actual.benign, expected.benign),
                ("malignant", actual.malignant, expected.malignant),
                ("total", actual.total, expected.total),
            ] {
                if a != e {
                    out.push(Discrepancy {
                        location: location.clone(),
                        detail: format!("{name}: counted {a}, reference {e}"),
                    });
                }
            }
        };
        for r in &reference.rows {
            let actual = self.row(r.magnification).copied().unwrap_or_default();
            compare(r.magnification.to_string(), &actual, &r.counts);
        }
        compare("total".into(), &self.total, &reference.total);
        out
    }

    /// Notes when the counted total matches none of the commonly quoted
    /// corpus sizes.
    pub fn quoted_total_notes(&self) -> Vec<String> {
        QUOTED_CORPUS_TOTALS
            .iter()
            .filter(|&&q| q != self.total.total)
            .map(|q| format!("counted {} images; quoted corpus size {q} differs by {}", self.total.total, q.abs_diff(self.total.total)))
            .collect()
    }

    /// Plain-text table with one row per magnification and a totals row.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16}{:>8}{:>11}{:>8}", "Magnification", "Benign", "Malignant", "Total");
        for r in &self.rows {
            let c = r.counts;
            let _ = writeln!(s, "{:<16}{:>8}{:>11}{:>8}", r.magnification.to_string(), c.benign, c.malignant, c.total);
        }
        let t = self.total;
        let _ = writeln!(s, "{:<16}{:>8}{:>11}{:>8}", "Total of Images", t.benign, t.malignant, t.total);
        s
    }
}

/// Indexed corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    records: Vec<SampleRecord>,
    counts: CountTable,
    patients: BTreeMap<String, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    records: Vec<SampleRecord>,
    counts: CountTable,
}

impl DatasetIndex {
    pub fn from_records(records: Vec<SampleRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("dataset index"));
        }
        let counts = CountTable::from_records(&records);
        let mut patients: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            patients.entry(r.patient_id.clone()).or_default().push(i);
        }
        Ok(Self { records, counts, patients })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    /// Patient id → indices into [`records`](Self::records).
    pub fn patients(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.patients
    }

    pub fn patient_image_counts(&self) -> Vec<(String, usize)> {
        self.patients.iter().map(|(p, v)| (p.clone(), v.len())).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&IndexFile {
            records: self.records.clone(),
            counts: self.counts.clone(),
        })?)
    }

    /// Parses an index file; the stored counts must match the records.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: IndexFile = serde_json::from_str(text)?;
        let index = Self::from_records(file.records)?;
        if index.counts != file.counts {
            return Err(Error::Index("stored counts do not match the records".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Result of scanning a corpus directory.
#[derive(Debug, Clone)]
pub struct IndexReport {
    pub index: DatasetIndex,
    /// `(relative path, reason)` for PNG files whose names did not parse.
    pub skipped: Vec<(String, String)>,
}

/// Recursively indexes every `.png` under `root`. Records are ordered by
/// relative path, so the result does not depend on traversal order.
pub fn build_index(root: &Path) -> Result<IndexReport> {
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let is_png = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        paths.push(rel.join("/"));
    }
    paths.sort();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        match SampleRecord::from_path(p.clone()) {
            Ok(r) => records.push(r),
            Err(e) => skipped.push((p, e.to_string())),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    Ok(IndexReport {
        index: DatasetIndex::from_records(records)?,
        skipped,
    })
}
