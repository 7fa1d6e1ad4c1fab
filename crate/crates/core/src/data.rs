//! Dataset loading (IDX images, Heart Disease CSV), seeded per-class
//! sampling with explicit exclusion sets, and image downsampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ClassId;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// One raw data point: features plus class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub features: Vec<f64>,
    pub class: ClassId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<RawSample>,
    /// `(rows, cols)` for image data.
    pub image_shape: Option<(usize, usize)>,
    /// SHA-256 of the source documents.
    pub digest: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    /// Distinct class ids in ascending order.
    pub fn classes(&self) -> Vec<ClassId> {
        let set: BTreeSet<ClassId> = self.samples.iter().map(|s| s.class).collect();
        set.into_iter().collect()
    }

    /// Sample indices per class, ascending.
    pub fn indices_by_class(&self) -> BTreeMap<ClassId, Vec<usize>> {
        let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (k, s) in self.samples.iter().enumerate() {
            by_class.entry(s.class).or_default().push(k);
        }
        by_class
    }

    /// Copy with every image block-mean downsampled by `factor`.
    pub fn downsampled(&self, factor: usize) -> Result<Dataset> {
        let (rows, cols) = self
            .image_shape
            .ok_or_else(|| Error::invalid("only image datasets can be downsampled"))?;
        let mut shape = (rows, cols);
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let (img, r, c) = downsample(&s.features, rows, cols, factor)?;
                shape = (r, c);
                Ok(RawSample {
                    features: img,
                    class: s.class,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            name: format!("{}/{factor}", self.name),
            samples,
            image_shape: Some(shape),
            digest: self.digest.clone(),
        })
    }
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> IdxReader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let chunk = self.bytes.get(self.offset..self.offset + 4).ok_or(Error::Format {
            offset: self.offset,
            message: "truncated header".into(),
        })?;
        self.offset += 4;
        Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
    }

    fn header(&mut self, magic: u32, dims: usize) -> Result<Vec<usize>> {
        let got = self.u32()?;
        if got != magic {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {got:#010x}, expected {magic:#010x}"),
            });
        }
        (0..dims).map(|_| self.u32().map(|d| d as usize)).collect()
    }

    fn payload(&self, len: usize) -> Result<&'a [u8]> {
        let end = self.offset + len;
        if self.bytes.len() < end {
            return Err(Error::Format {
                offset: self.bytes.len(),
                message: format!("truncated payload, expected {len} bytes after header"),
            });
        }
        if self.bytes.len() > end {
            return Err(Error::Format {
                offset: end,
                message: format!("{} surplus bytes", self.bytes.len() - end),
            });
        }
        Ok(&self.bytes[self.offset..end])
    }
}

/// Parse an IDX image document and its label document.
pub fn load_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut img = IdxReader {
        bytes: images,
        offset: 0,
    };
    let dims = img.header(IDX_IMAGES, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = img.payload(count * rows * cols)?;

    let mut lab = IdxReader {
        bytes: labels,
        offset: 0,
    };
    let label_count = lab.header(IDX_LABELS, 1)?[0];
    if label_count != count {
        return Err(Error::Format {
            offset: 4,
            message: format!("{count} images but {label_count} labels"),
        });
    }
    let label_bytes = lab.payload(label_count)?;

    let size = rows * cols;
    let samples = label_bytes
        .iter()
        .enumerate()
        .map(|(k, &class)| {
            if class > 9 {
                return Err(Error::Format {
                    offset: lab.offset + k,
                    message: format!("label {class} is outside 0-9"),
                });
            }
            Ok(RawSample {
                features: pixels[k * size..(k + 1) * size]
                    .iter()
                    .map(|&p| f64::from(p))
                    .collect(),
                class: u32::from(class),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: "idx".into(),
        samples,
        image_shape: Some((rows, cols)),
        digest: sha256_hex(&[images, labels]),
    })
}

/// Read `train-images-idx3-ubyte` and `train-labels-idx1-ubyte` from `dir`.
pub fn load_idx_dir(dir: &std::path::Path, name: &str) -> Result<Dataset> {
    load_idx_files(dir, "train", name)
}

/// Read `{prefix}-images-idx3-ubyte` and `{prefix}-labels-idx1-ubyte` from
/// `dir` (prefix `train` or `t10k` in the standard distributions).
pub fn load_idx_files(dir: &std::path::Path, prefix: &str, name: &str) -> Result<Dataset> {
    let read = |file: String| {
        let path = dir.join(file);
        std::fs::read(&path).map_err(|e| Error::io(path, e))
    };
    let images = read(format!("{prefix}-images-idx3-ubyte"))?;
    let labels = read(format!("{prefix}-labels-idx1-ubyte"))?;
    let mut ds = load_idx(&images, &labels)?;
    ds.name = name.to_string();
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// Rows dropped for missing values.
    pub dropped_rows: usize,
}

const HEART_FEATURES: usize = 13;

/// Parse a 13-feature Heart Disease CSV (label in column 14; any positive
/// label counts as class 1) and split it with a seeded shuffle.
pub fn load_csv_heart(document: &str, test_fraction: f64, seed: u64) -> Result<HeartSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(document.as_bytes());
    let mut samples = Vec::new();
    let mut dropped = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format {
            offset: row,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != HEART_FEATURES + 1 {
            return Err(Error::Format {
                offset: row,
                message: format!("row {} has {} columns, expected 14", row + 1, record.len()),
            });
        }
        let numeric: Vec<Option<f64>> = record.iter().map(|c| c.parse().ok()).collect();
        if row == 0 && numeric.iter().all(Option::is_none) {
            continue; // header
        }
        if record.iter().any(|c| c == "?" || c.is_empty()) {
            dropped += 1;
            continue;
        }
        if let Some(col) = numeric.iter().position(Option::is_none) {
            return Err(Error::Format {
                offset: row,
                message: format!("row {}, column {}: not a number", row + 1, col + 1),
            });
        }
        let values: Vec<f64> = numeric.into_iter().map(|v| v.expect("checked")).collect();
        samples.push(RawSample {
            features: values[..HEART_FEATURES].to_vec(),
            class: u32::from(values[HEART_FEATURES] > 0.0),
        });
    }
    let digest = sha256_hex(&[document.as_bytes()]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (samples.len() as f64 * test_fraction).round() as usize;
    let pick = |ids: &[usize], name: &str| Dataset {
        name: name.into(),
        samples: ids.iter().map(|&k| samples[k].clone()).collect(),
        image_shape: None,
        digest: digest.clone(),
    };
    Ok(HeartSplit {
        test: pick(&order[..n_test], "heart-test"),
        train: pick(&order[n_test..], "heart-train"),
        dropped_rows: dropped,
    })
}

/// Indices already used by earlier draws.
pub type ExclusionSet = BTreeSet<usize>;

/// Draw `r` unseen samples per class, uniformly without replacement.
/// Returns the draws per class and the exclusion set extended by them.
pub fn sample_per_class(
    dataset: &Dataset,
    classes: &[ClassId],
    r: usize,
    seed: u64,
    exclusion: &ExclusionSet,
) -> Result<(BTreeMap<ClassId, Vec<usize>>, ExclusionSet)> {
    let by_class = dataset.indices_by_class();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = BTreeMap::new();
    let mut updated = exclusion.clone();
    for &class in classes {
        let unseen: Vec<usize> = by_class
            .get(&class)
            .map(|ids| ids.iter().copied().filter(|k| !exclusion.contains(k)).collect())
            .unwrap_or_default();
        if unseen.len() < r {
            return Err(Error::Capacity {
                class,
                needed: r,
                available: unseen.len(),
            });
        }
        let picks: Vec<usize> = unseen.choose_multiple(&mut rng, r).copied().collect();
        updated.extend(picks.iter().copied());
        drawn.insert(class, picks);
    }
    Ok((drawn, updated))
}

/// A balanced test set of `per_class` samples per class, drawn from the
/// samples outside `exclusion`.
pub fn build_test_set(
    dataset: &Dataset,
    classes: &[ClassId],
    per_class: usize,
    seed: u64,
    exclusion: &ExclusionSet,
) -> Result<Vec<usize>> {
    let (drawn, _) = sample_per_class(dataset, classes, per_class, seed, exclusion)?;
    Ok(drawn.into_values().flatten().collect())
}

/// Block-mean pooling of a `rows × cols` image by `factor`, rounding half
/// up. Edge blocks of sizes that `factor` does not divide are averaged over
/// the pixels they actually cover, split symmetrically between the two ends.
/// Returns the image and its new shape.
pub fn downsample(
    image: &[f64],
    rows: usize,
    cols: usize,
    factor: usize,
) -> Result<(Vec<f64>, usize, usize)> {
    if factor < 1 {
        return Err(Error::invalid("downsampling factor must be at least 1"));
    }
    if image.len() != rows * cols {
        return Err(Error::Dimension {
            what: "image pixels",
            expected: rows * cols,
            actual: image.len(),
        });
    }
    // block boundaries with the padding split symmetrically
    let edges = |n: usize| -> Vec<(usize, usize)> {
        let blocks = n.div_ceil(factor);
        let pad = blocks * factor - n;
        let before = pad / 2;
        (0..blocks)
            .map(|b| {
                let lo = (b * factor).saturating_sub(before);
                let hi = ((b + 1) * factor).saturating_sub(before).min(n);
                (lo, hi)
            })
            .collect()
    };
    let (row_blocks, col_blocks) = (edges(rows), edges(cols));
    let mut out = Vec::with_capacity(row_blocks.len() * col_blocks.len());
    for &(r0, r1) in &row_blocks {
        for &(c0, c1) in &col_blocks {
            let mut sum = 0.0;
            for r in r0..r1 {
                sum += image[r * cols + c0..r * cols + c1].iter().sum::<f64>();
            }
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            out.push((sum / count + 0.5).floor());
        }
    }
    Ok((out, row_blocks.len(), col_blocks.len()))
}

/// Integer-valued synthetic data: each class is a random prototype over
/// `0..=max_value`, and samples perturb a fraction `noise` of its features.
pub fn synthetic(
    classes: usize,
    per_class: usize,
    features: usize,
    max_value: u32,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || features == 0 || !(0.0..=1.0).contains(&noise) {
        return Err(Error::invalid(
            "synthetic data needs at least two classes, one feature and noise in [0, 1]",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<u32>> = (0..classes)
        .map(|_| (0..features).map(|_| rng.gen_range(0..=max_value)).collect())
        .collect();
    let mut samples = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (class, proto) in prototypes.iter().enumerate() {
            let features = proto
                .iter()
                .map(|&v| {
                    if rng.gen_bool(noise) {
                        f64::from(rng.gen_range(0..=max_value))
                    } else {
                        f64::from(v)
                    }
                })
                .collect();
            samples.push(RawSample {
                features,
                class: class as ClassId,
            });
        }
    }
    let digest = sha256_hex(&[format!("synthetic:{classes}:{per_class}:{features}:{max_value}:{noise}:{seed}").as_bytes()]);
    Ok(Dataset {
        name: "synthetic".into(),
        samples,
        image_shape: None,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_fixture(pixels: &[u8], labels: &[u8], rows: u32, cols: u32) -> (Vec<u8>, Vec<u8>) {
        let mut img = IDX_IMAGES.to_be_bytes().to_vec();
        img.extend((labels.len() as u32).to_be_bytes());
        img.extend(rows.to_be_bytes());
        img.extend(cols.to_be_bytes());
        img.extend(pixels);
        let mut lab = IDX_LABELS.to_be_bytes().to_vec();
        lab.extend((labels.len() as u32).to_be_bytes());
        lab.extend(labels);
        (img, lab)
    }

    #[test]
    fn one_image_fixture() {
        let pixels: Vec<u8> = (0..784).map(|i| (i % 256) as u8).collect();
        let (img, lab) = idx_fixture(&pixels, &[7], 28, 28);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples[0].class, 7);
        assert_eq!(ds.samples[0].features.len(), 784);
        assert_eq!(ds.samples[0].features[255], 255.0);
    }

    #[test]
    fn idx_errors() {
        let (img, lab) = idx_fixture(&[0; 4], &[10], 2, 2);
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
        let (mut img, lab) = idx_fixture(&[0; 4], &[1], 2, 2);
        img.push(0);
        assert!(load_idx(&img, &lab).is_err());
        img.truncate(img.len() - 2);
        assert!(load_idx(&img, &lab).is_err());
        let (mut img, lab) = idx_fixture(&[0; 4], &[1], 2, 2);
        img[3] = 0x01;
        assert!(load_idx(&img, &lab).is_err());
    }

    #[test]
    fn downsample_examples() {
        let constant = vec![7.0; 784];
        for f in 1..=7 {
            let (out, _, _) = downsample(&constant, 28, 28, f).unwrap();
            assert!(out.iter().all(|&v| v == 7.0), "factor {f}");
        }
        let checker: Vec<f64> = (0..784)
            .map(|k| if (k / 28 + k % 28) % 2 == 0 { 0.0 } else { 255.0 })
            .collect();
        let (out, r, c) = downsample(&checker, 28, 28, 2).unwrap();
        assert_eq!((r, c), (14, 14));
        assert!(out.iter().all(|&v| v == 128.0));
        assert_eq!(downsample(&checker, 28, 28, 1).unwrap().0, checker);
        assert!(downsample(&checker, 28, 28, 0).is_err());
        assert_eq!(downsample(&checker, 28, 28, 3).unwrap().1, 10);
    }

    #[test]
    fn sampling_is_disjoint_and_deterministic() {
        let ds = synthetic(3, 20, 4, 255, 0.1, 1).unwrap();
        let none = ExclusionSet::new();
        let (a, ex) = sample_per_class(&ds, &[0, 1, 2], 5, 9, &none).unwrap();
        let (a2, _) = sample_per_class(&ds, &[0, 1, 2], 5, 9, &none).unwrap();
        assert_eq!(a, a2);
        let (b, ex2) = sample_per_class(&ds, &[0, 1, 2], 5, 9, &ex).unwrap();
        let first: BTreeSet<usize> = a.values().flatten().copied().collect();
        assert!(b.values().flatten().all(|k| !first.contains(k)));
        assert_eq!(ex2.len(), 30);
        let (empty, same) = sample_per_class(&ds, &[0, 1], 0, 9, &ex).unwrap();
        assert!(empty.values().all(Vec::is_empty));
        assert_eq!(same, ex);
        assert!(matches!(
            sample_per_class(&ds, &[0], 11, 9, &ex2),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn heart_split_and_missing_rows() {
        let mut doc = String::from("age,sex,cp,trestbps,chol,fbs,restecg,thalach,exang,oldpeak,slope,ca,thal,num\n");
        for k in 0..200 {
            doc.push_str(&format!("{},1,3,120,240,0,0,150,0,1.5,2,0,3,{}\n", 40 + k % 30, k % 3));
        }
        doc.push_str("50,1,3,120,240,0,0,150,0,1.5,2,?,3,1\n");
        let split = load_csv_heart(&doc, 0.2, 5).unwrap();
        assert_eq!(split.train.len(), 160);
        assert_eq!(split.test.len(), 40);
        assert_eq!(split.dropped_rows, 1);
        assert_eq!(split, load_csv_heart(&doc, 0.2, 5).unwrap());
        assert!(load_csv_heart(&doc, 0.0, 5).is_err());
        assert!(load_csv_heart("1,2,3,4,5,6,7,8,9,10,11,12,x,1\n", 0.5, 1).is_err());
    }
}
