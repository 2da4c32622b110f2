//! Per-image metadata and the BreakHis file naming convention
//! `SOB_<B|M>_<SUBTYPE>-<YEAR>-<SLIDE>-<MAG>-<SEQ>.png`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryClass {
    Benign,
    Malignant,
}

impl BinaryClass {
    fn code(self) -> &'static str {
        match self {
            BinaryClass::Benign => "B",
            BinaryClass::Malignant => "M",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtype {
    Adenosis,
    Fibroadenoma,
    PhyllodesTumor,
    TubularAdenoma,
    DuctalCarcinoma,
    LobularCarcinoma,
    MucinousCarcinoma,
    PapillaryCarcinoma,
}

impl Subtype {
    pub const ALL: [Subtype; 8] = [
        Subtype::Adenosis,
        Subtype::Fibroadenoma,
        Subtype::PhyllodesTumor,
        Subtype::TubularAdenoma,
        Subtype::DuctalCarcinoma,
        Subtype::LobularCarcinoma,
        Subtype::MucinousCarcinoma,
        Subtype::PapillaryCarcinoma,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Subtype::Adenosis => "A",
            Subtype::Fibroadenoma => "F",
            Subtype::PhyllodesTumor => "PT",
            Subtype::TubularAdenoma => "TA",
            Subtype::DuctalCarcinoma => "DC",
            Subtype::LobularCarcinoma => "LC",
            Subtype::MucinousCarcinoma => "MC",
            Subtype::PapillaryCarcinoma => "PC",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }

    pub fn binary_class(self) -> BinaryClass {
        match self {
            Subtype::Adenosis | Subtype::Fibroadenoma | Subtype::PhyllodesTumor | Subtype::TubularAdenoma => {
                BinaryClass::Benign
            }
            _ => BinaryClass::Malignant,
        }
    }

    /// Benign subtypes collapse into one label; each malignant subtype keeps
    /// its own.
    pub fn five_class(self) -> FiveClass {
        match self {
            Subtype::DuctalCarcinoma => FiveClass::DuctalCarcinoma,
            Subtype::LobularCarcinoma => FiveClass::LobularCarcinoma,
            Subtype::MucinousCarcinoma => FiveClass::MucinousCarcinoma,
            Subtype::PapillaryCarcinoma => FiveClass::PapillaryCarcinoma,
            _ => FiveClass::Benign,
        }
    }
}

/// The five diagnostic categories, in label-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FiveClass {
    #[serde(rename = "Benign")]
    Benign,
    #[serde(rename = "Ductal_Carcinoma")]
    DuctalCarcinoma,
    #[serde(rename = "Lobular_Carcinoma")]
    LobularCarcinoma,
    #[serde(rename = "Mucinous_Carcinoma")]
    MucinousCarcinoma,
    #[serde(rename = "Papillary_Carcinoma")]
    PapillaryCarcinoma,
}

impl FiveClass {
    pub const ALL: [FiveClass; 5] = [
        FiveClass::Benign,
        FiveClass::DuctalCarcinoma,
        FiveClass::LobularCarcinoma,
        FiveClass::MucinousCarcinoma,
        FiveClass::PapillaryCarcinoma,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FiveClass::Benign => "Benign",
            FiveClass::DuctalCarcinoma => "Ductal_Carcinoma",
            FiveClass::LobularCarcinoma => "Lobular_Carcinoma",
            FiveClass::MucinousCarcinoma => "Mucinous_Carcinoma",
            FiveClass::PapillaryCarcinoma => "Papillary_Carcinoma",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

/// Optical magnification factor: 40, 100, 200 or 400.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct Magnification(u16);

impl Magnification {
    pub const ALL: [Magnification; 4] = [Magnification(40), Magnification(100), Magnification(200), Magnification(400)];

    pub fn new(factor: u16) -> Result<Self, String> {
        if Self::ALL.iter().any(|m| m.0 == factor) {
            Ok(Self(factor))
        } else {
            Err(format!("magnification {factor} not in 40/100/200/400"))
        }
    }

    pub fn factor(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for Magnification {
    type Error = String;

    fn try_from(v: u16) -> Result<Self, String> {
        Self::new(v)
    }
}

impl From<Magnification> for u16 {
    fn from(m: Magnification) -> u16 {
        m.0
    }
}

impl fmt::Display for Magnification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}X", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    /// Path relative to the corpus root, `/`-separated.
    pub path: String,
    pub binary_class: BinaryClass,
    pub subtype: Subtype,
    pub five_class: FiveClass,
    pub magnification: Magnification,
    /// `SUBTYPE-YEAR-SLIDE`; the slide stands in for the patient.
    pub patient_id: String,
    pub seq: u32,
}

/// Fields encoded in one file name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameFields {
    pub binary_class: BinaryClass,
    pub subtype: Subtype,
    pub five_class: FiveClass,
    pub magnification: Magnification,
    pub patient_id: String,
    pub seq: u32,
}

const METHOD: &str = "SOB";

pub fn parse_filename(name: &str) -> Result<NameFields> {
    let fail = |segment: &'static str, detail: String| Error::FileName {
        name: name.to_string(),
        segment,
        detail,
    };
    let stem = name
        .strip_suffix(".png")
        .ok_or_else(|| fail("extension", "expected .png".into()))?;
    let mut parts = stem.splitn(3, '_');
    let (method, class, rest) = match (parts.next(), parts.next(), parts.next()) {
        (Some(m), Some(c), Some(r)) => (m, c, r),
        _ => return Err(fail("layout", "expected METHOD_CLASS_SUBTYPE-YEAR-SLIDE-MAG-SEQ".into())),
    };
    if method != METHOD {
        return Err(fail("method", format!("expected {METHOD}, got {method:?}")));
    }
    let binary_class = match class {
        "B" => BinaryClass::Benign,
        "M" => BinaryClass::Malignant,
        _ => return Err(fail("class", format!("expected B or M, got {class:?}"))),
    };
    let fields: Vec<&str> = rest.split('-').collect();
    let [subtype, year, slide, mag, seq] = fields[..] else {
        return Err(fail("layout", format!("expected 5 dash-separated fields, got {}", fields.len())));
    };
    let subtype = Subtype::from_code(subtype).ok_or_else(|| {
        let valid: Vec<&str> = Subtype::ALL.iter().map(|s| s.code()).collect();
        fail("subtype", format!("unknown code {subtype:?}; valid codes: {}", valid.join(", ")))
    })?;
    if subtype.binary_class() != binary_class {
        return Err(fail("class", format!("{class} does not match subtype {}", subtype.code())));
    }
    if year.is_empty() || !year.bytes().all(|b| b.is_ascii_digit()) {
        return Err(fail("year", format!("expected digits, got {year:?}")));
    }
    if slide.is_empty() || !slide.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err(fail("slide", format!("expected alphanumeric id, got {slide:?}")));
    }
    let magnification = mag
        .parse::<u16>()
        .map_err(|e| e.to_string())
        .and_then(Magnification::new)
        .map_err(|e| fail("magnification", e))?;
    let seq_num: u32 = seq
        .parse()
        .ok()
        .filter(|_| seq.bytes().all(|b| b.is_ascii_digit()))
        .ok_or_else(|| fail("seq", format!("expected digits, got {seq:?}")))?;
    if format!("{seq_num:03}") != seq {
        return Err(fail("seq", format!("expected zero-padded 3-digit form, got {seq:?}")));
    }
    Ok(NameFields {
        binary_class,
        subtype,
        five_class: subtype.five_class(),
        magnification,
        patient_id: format!("{}-{year}-{slide}", subtype.code()),
        seq: seq_num,
    })
}

impl NameFields {
    pub fn file_name(&self) -> String {
        format!(
            "{METHOD}_{}_{}-{}-{:03}.png",
            self.binary_class.code(),
            self.patient_id,
            self.magnification.factor(),
            self.seq
        )
    }
}

impl SampleRecord {
    pub fn from_path(path: String) -> Result<Self> {
        let name = path.rsplit('/').next().unwrap_or(&path);
        let f = parse_filename(name)?;
        Ok(Self {
            path,
            binary_class: f.binary_class,
            subtype: f.subtype,
            five_class: f.five_class,
            magnification: f.magnification,
            patient_id: f.patient_id,
            seq: f.seq,
        })
    }

    pub fn file_name(&self) -> String {
        NameFields {
            binary_class: self.binary_class,
            subtype: self.subtype,
            five_class: self.five_class,
            magnification: self.magnification,
            patient_id: self.patient_id.clone(),
            seq: self.seq,
        }
        .file_name()
    }

    pub fn label(&self) -> usize {
        self.five_class.index()
    }
}
