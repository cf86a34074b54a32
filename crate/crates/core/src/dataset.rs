//! JSON dataset manifests and loading of annotation sets from disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{AnnotatedSlice, AnnotationSet};
use crate::pgm;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceEntry {
    pub image: String,
    /// One entry per expert, `None` where the annotation is missing.
    pub masks: Vec<Option<String>>,
}

/// `{"dataset": str, "seed": int, "experts": [str], "slices": [...]}`.
/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub seed: u64,
    pub experts: Vec<String>,
    pub slices: Vec<SliceEntry>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        manifest.validate().map_err(|reason| Error::Manifest {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.experts.is_empty() {
            return Err("no experts listed".into());
        }
        for (i, s) in self.slices.iter().enumerate() {
            if s.masks.len() != self.experts.len() {
                return Err(format!(
                    "slice {i} has {} mask entries for {} experts",
                    s.masks.len(),
                    self.experts.len()
                ));
            }
        }
        Ok(())
    }

    pub fn n_missing(&self) -> usize {
        self.slices
            .iter()
            .map(|s| s.masks.iter().filter(|m| m.is_none()).count())
            .sum()
    }
}

/// Stable identifier for the i-th slice in output file names and reports.
pub fn slice_id(index: usize) -> String {
    format!("slice_{index:04}")
}

/// A manifest resolved against its directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub annotations: AnnotationSet,
}

impl Dataset {
    pub fn image_path(&self, slice: usize) -> PathBuf {
        self.root.join(&self.manifest.slices[slice].image)
    }

    /// `name` in the directory holding the slice's image (ground truth and
    /// withheld-mask sidecars live there).
    pub fn sidecar_path(&self, slice: usize, name: &str) -> PathBuf {
        let image = self.image_path(slice);
        image
            .parent()
            .map(|p| p.join(name))
            .unwrap_or_else(|| PathBuf::from(name))
    }
}

/// Loads every image and mask a manifest references.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut slices = Vec::with_capacity(manifest.slices.len());
    for entry in &manifest.slices {
        let image = pgm::read_image(&root.join(&entry.image))?;
        let masks = entry
            .masks
            .iter()
            .map(|m| match m {
                Some(rel) => pgm::read_mask(&root.join(rel)).map(Some),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        slices.push(AnnotatedSlice { image, masks });
    }
    let annotations = AnnotationSet::new(manifest.experts.clone(), slices)?;
    Ok(Dataset {
        root,
        manifest,
        annotations,
    })
}

/// Convenience wrapper returning only the annotations.
pub fn load_annotations(manifest_path: &Path) -> Result<AnnotationSet> {
    load_dataset(manifest_path).map(|d| d.annotations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Mask;
    use crate::pgm::{write_mask, RawPgm};

    fn write_fixture(dir: &Path, null_mask: bool) -> PathBuf {
        for s in 0..2 {
            RawPgm {
                width: 4,
                height: 3,
                maxval: 255,
                samples: (0..12).map(|v| (v * 10) as u16).collect(),
            }
            .write(&dir.join(format!("img{s}.pgm")))
            .unwrap();
            for r in 0..3 {
                let m = Mask::from_fn(4, 3, |x, y| x + y > r);
                write_mask(&m, &dir.join(format!("m{s}_{r}.pgm"))).unwrap();
            }
        }
        let manifest = DatasetManifest {
            dataset: "fixture".into(),
            seed: 3,
            experts: vec!["a".into(), "b".into(), "c".into()],
            slices: (0..2)
                .map(|s| SliceEntry {
                    image: format!("img{s}.pgm"),
                    masks: (0..3)
                        .map(|r| {
                            (!(null_mask && s == 1 && r == 2)).then(|| format!("m{s}_{r}.pgm"))
                        })
                        .collect(),
                })
                .collect(),
        };
        let path = dir.join("manifest.json");
        manifest.write(&path).unwrap();
        path
    }

    #[test]
    fn loads_manifest_with_one_missing_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), true);
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.annotations.slices().len(), 2);
        assert_eq!(ds.annotations.n_experts(), 3);
        assert_eq!(ds.annotations.n_missing(), 1);
        assert!(ds.annotations.slices()[1].masks[2].is_none());
        let img = &ds.annotations.slices()[0].image;
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(3, 2), 1.0);
    }

    #[test]
    fn manifest_schema_uses_explicit_nulls() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), true);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert!(v["slices"][1]["masks"][2].is_null());
        assert_eq!(v["seed"], 3);
        assert_eq!(v["experts"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn missing_file_reports_io() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), false);
        fs::remove_file(dir.path().join("m0_1.pgm")).unwrap();
        assert_eq!(load_dataset(&path).unwrap_err().category(), "io");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), false);
        write_mask(&Mask::zeros(2, 2), &dir.path().join("m1_0.pgm")).unwrap();
        assert_eq!(
            load_dataset(&path).unwrap_err().category(),
            "dimension-mismatch"
        );
    }

    #[test]
    fn slice_with_only_nulls_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), false);
        let mut m = DatasetManifest::read(&path).unwrap();
        m.slices[0].masks = vec![None, None, None];
        m.write(&path).unwrap();
        assert_eq!(
            load_dataset(&path).unwrap_err().category(),
            "all-experts-missing"
        );
    }

    #[test]
    fn malformed_pgm_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), false);
        fs::write(dir.path().join("img0.pgm"), b"P5\n4 3\n255\n\x00").unwrap();
        assert_eq!(load_dataset(&path).unwrap_err().category(), "malformed-pgm");
    }
}
