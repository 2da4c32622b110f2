//! Synthetic five-class texture images and BreakHis-shaped corpora for
//! desk-scale runs and tests.
//!
//! Each class has its own base tint and texture family:
//!
//! | label | tint            | texture                                   |
//! |-------|-----------------|-------------------------------------------|
//! | 0     | pale pink       | smooth low-frequency blobs                |
//! | 1     | purple          | fine oriented stripes (period ≈ 3 px)     |
//! | 2     | blue            | dot lattice (period ≈ 6 px)               |
//! | 3     | straw           | checkerboard (cell ≈ 2 px)                |
//! | 4     | dark maroon     | per-pixel speckle                         |
//!
//! Orientation, phase and tint jitter are drawn per image, plus additive
//! noise, so no two images are identical.

use std::f64::consts::PI;
use std::path::Path;

use crate::dataset::image_io::write_png;
use crate::dataset::record::{Magnification, Subtype};
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const TINTS: [[f64; 3]; 5] = [
    [0.90, 0.70, 0.80],
    [0.55, 0.30, 0.65],
    [0.35, 0.40, 0.75],
    [0.80, 0.80, 0.55],
    [0.40, 0.20, 0.30],
];

/// One `h×w×3` texture image of class `label` (0..5), values in `[0, 1]`.
pub fn texture_image<T: Scalar>(label: usize, h: usize, w: usize, rng: &mut Rng) -> Tensor<T> {
    assert!(label < TINTS.len(), "label {label} out of range");
    let angle = rng.uniform_range(0.0, PI);
    let (sin, cos) = angle.sin_cos();
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let phase2 = rng.uniform_range(0.0, 2.0 * PI);
    let mut tint = TINTS[label];
    for t in &mut tint {
        *t += rng.uniform_range(-0.06, 0.06);
    }
    let mut out = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let u = xf * cos + yf * sin;
            let v = -xf * sin + yf * cos;
            let pattern = match label {
                0 => 0.5 * ((2.0 * PI * u / 16.0 + phase).sin() + (2.0 * PI * v / 13.0 + phase2).sin()),
                1 => (2.0 * PI * u / 3.0 + phase).sin(),
                2 => (2.0 * PI * u / 6.0 + phase).cos() * (2.0 * PI * v / 6.0 + phase2).cos(),
                3 => {
                    if ((xf / 2.0).floor() + (yf / 2.0).floor()) as i64 % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => rng.uniform_range(-1.0, 1.0),
            };
            for t in tint {
                let v = t + 0.15 * pattern + rng.uniform_range(-0.04, 0.04);
                out.push(T::from_f64_lossy(v.clamp(0.0, 1.0)));
            }
        }
    }
    Tensor::new(vec![h, w, 3], out).expect("sized")
}

/// `n` textures with labels cycling `0, 1, 2, 3, 4, 0, …`; image `i` is
/// drawn from the sub-stream `[i]` of `seed`.
pub fn texture_set<T: Scalar>(n: usize, h: usize, w: usize, seed: u64) -> LabeledSet<T> {
    let root = Rng::new(seed);
    let mut set = LabeledSet::default();
    for i in 0..n {
        let label = i % TINTS.len();
        let mut rng = root.fork(&[i as u64]);
        set.images.push(texture_image(label, h, w, &mut rng));
        set.labels.push(label);
    }
    set
}

/// A synthetic patient: subtype, slide id and image count per
/// magnification (40, 100, 200, 400).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPatient {
    pub subtype: Subtype,
    pub slide: String,
    pub images: [usize; 4],
}

impl SyntheticPatient {
    pub fn patient_id(&self) -> String {
        format!("{}-14-{}", self.subtype.code(), self.slide)
    }

    pub fn total(&self) -> usize {
        self.images.iter().sum()
    }

    pub fn file_names(&self) -> Vec<String> {
        let class = match self.subtype.binary_class() {
            crate::dataset::BinaryClass::Benign => "B",
            crate::dataset::BinaryClass::Malignant => "M",
        };
        let mut names = Vec::with_capacity(self.total());
        for (m, &count) in Magnification::ALL.iter().zip(&self.images) {
            for seq in 1..=count {
                names.push(format!("SOB_{class}_{}-{}-{seq:03}.png", self.patient_id(), m.factor()));
            }
        }
        names
    }
}

/// Per-magnification benign/malignant image counts of the public BreakHis
/// 1.0 release (40X, 100X, 200X, 400X).
pub const BREAKHIS_COUNTS: [(usize, usize); 4] = [(625, 1370), (644, 1437), (623, 1390), (588, 1232)];

/// Patients per subtype in the public release (82 in total).
pub const BREAKHIS_PATIENTS: [(Subtype, usize); 8] = [
    (Subtype::Adenosis, 4),
    (Subtype::Fibroadenoma, 10),
    (Subtype::PhyllodesTumor, 3),
    (Subtype::TubularAdenoma, 7),
    (Subtype::DuctalCarcinoma, 38),
    (Subtype::LobularCarcinoma, 5),
    (Subtype::MucinousCarcinoma, 9),
    (Subtype::PapillaryCarcinoma, 6),
];

/// 82 synthetic patients with the public release's subtype mix; each
/// (class, magnification) cell of `counts` is spread as evenly as possible
/// over that class's patients.
pub fn breakhis_like_patients(counts: &[(usize, usize); 4]) -> Vec<SyntheticPatient> {
    let mut patients: Vec<SyntheticPatient> = Vec::new();
    let mut slide = 1000;
    for &(subtype, n) in &BREAKHIS_PATIENTS {
        for _ in 0..n {
            patients.push(SyntheticPatient {
                subtype,
                slide: slide.to_string(),
                images: [0; 4],
            });
            slide += 1;
        }
    }
    for benign in [true, false] {
        let members: Vec<usize> = (0..patients.len())
            .filter(|&i| (patients[i].subtype.binary_class() == crate::dataset::BinaryClass::Benign) == benign)
            .collect();
        for (m, &(b, mal)) in counts.iter().enumerate() {
            let total = if benign { b } else { mal };
            let (each, extra) = (total / members.len(), total % members.len());
            for (k, &i) in members.iter().enumerate() {
                patients[i].images[m] = each + usize::from(k < extra);
            }
        }
    }
    patients
}

/// What to put inside generated corpus files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusContent {
    /// Zero-byte files; enough for indexing and splitting.
    Empty,
    /// Texture PNGs of the given square size, class-matched.
    Textures { size: usize },
}

/// Writes a corpus laid out as `<root>/<benign|malignant>/<patient>/<file>`.
/// Returns the number of files written.
pub fn write_corpus(root: &Path, patients: &[SyntheticPatient], content: CorpusContent, seed: u64) -> Result<usize> {
    let base = Rng::new(seed);
    let mut written = 0;
    for (pi, p) in patients.iter().enumerate() {
        let class_dir = match p.subtype.binary_class() {
            crate::dataset::BinaryClass::Benign => "benign",
            crate::dataset::BinaryClass::Malignant => "malignant",
        };
        let dir = root.join(class_dir).join(p.patient_id());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, name) in p.file_names().into_iter().enumerate() {
            let path = dir.join(name);
            match content {
                CorpusContent::Empty => std::fs::write(&path, []).map_err(|e| Error::io(&path, e))?,
                CorpusContent::Textures { size } => {
                    let mut rng = base.fork(&[pi as u64, k as u64]);
                    let img: Tensor<f32> = texture_image(p.subtype.five_class().index(), size, size, &mut rng);
                    write_png(&img, &path)?;
                }
            }
            written += 1;
        }
    }
    Ok(written)
}
