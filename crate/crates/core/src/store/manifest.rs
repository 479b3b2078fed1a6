//! Ensemble manifests: a JSON document naming the logits, mask and catalog
//! files of one image. Relative paths resolve against the manifest's folder.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, ElemType, Tensor};
use super::StoreError;
use crate::catalog::ClassCatalog;
use crate::per_sample::{EnsembleBatch, EnsembleDims};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub image_id: String,
    pub samples: usize,
    pub proposals: usize,
    pub classes: usize,
    pub mask_height: usize,
    pub mask_width: usize,
    pub height: usize,
    pub width: usize,
    pub logits_path: PathBuf,
    pub masks_path: PathBuf,
    pub class_catalog_path: PathBuf,
}

impl EnsembleManifest {
    pub fn dims(&self) -> EnsembleDims {
        EnsembleDims {
            samples: self.samples,
            proposals: self.proposals,
            classes: self.classes,
            mask_height: self.mask_height,
            mask_width: self.mask_width,
            height: self.height,
            width: self.width,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| StoreError::json(path, e))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_f32(path: &Path, what: &'static str, expected: Vec<usize>) -> Result<Vec<f32>, StoreError> {
    let t = read_tensor(path)?;
    if t.dims() != expected.as_slice() {
        return Err(StoreError::ShapeMismatch {
            what,
            expected,
            found: t.dims().to_vec(),
        });
    }
    if t.elem_type() != ElemType::F32 {
        return Err(StoreError::WrongElemType { what });
    }
    Ok(t.into_f32().expect("checked f32"))
}

/// Reads a manifest and the files it references, validating every shape
/// against the declared dims.
pub fn load_ensemble(manifest_path: impl AsRef<Path>) -> Result<(EnsembleManifest, EnsembleBatch), StoreError> {
    let manifest_path = manifest_path.as_ref();
    let m = EnsembleManifest::read(manifest_path)?;
    let dims = m.dims();
    dims.validate()
        .map_err(|e| StoreError::InvalidManifest(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let cat_path = resolve(base, &m.class_catalog_path);
    let cat_text = fs::read_to_string(&cat_path).map_err(|e| StoreError::io(&cat_path, e))?;
    let catalog: ClassCatalog = serde_json::from_str(&cat_text).map_err(|e| StoreError::json(&cat_path, e))?;

    let logits = load_f32(
        &resolve(base, &m.logits_path),
        "logits",
        vec![dims.samples, dims.proposals, dims.classes],
    )?;
    let masks = load_f32(
        &resolve(base, &m.masks_path),
        "mask logits",
        vec![dims.samples, dims.proposals, dims.mask_height, dims.mask_width],
    )?;
    let batch = EnsembleBatch::new(dims, logits, masks, catalog)?;
    Ok((m, batch))
}

/// Writes `logits.pftn`, `masks.pftn`, `catalog.json` and `manifest.json`
/// into `dir`, returning the manifest path.
pub fn write_ensemble(batch: &EnsembleBatch, image_id: &str, dir: impl AsRef<Path>) -> Result<PathBuf, StoreError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let d = *batch.dims();
    write_tensor(
        &Tensor::from_f32(vec![d.samples, d.proposals, d.classes], batch.logits().to_vec())?,
        dir.join("logits.pftn"),
    )?;
    write_tensor(
        &Tensor::from_f32(
            vec![d.samples, d.proposals, d.mask_height, d.mask_width],
            batch.mask_logits().to_vec(),
        )?,
        dir.join("masks.pftn"),
    )?;
    let cat_path = dir.join("catalog.json");
    let cat = serde_json::to_string_pretty(batch.catalog()).map_err(|e| StoreError::json(&cat_path, e))?;
    fs::write(&cat_path, cat).map_err(|e| StoreError::io(&cat_path, e))?;

    let manifest = EnsembleManifest {
        image_id: image_id.to_string(),
        samples: d.samples,
        proposals: d.proposals,
        classes: d.classes,
        mask_height: d.mask_height,
        mask_width: d.mask_width,
        height: d.height,
        width: d.width,
        logits_path: "logits.pftn".into(),
        masks_path: "masks.pftn".into(),
        class_catalog_path: "catalog.json".into(),
    };
    let mpath = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| StoreError::json(&mpath, e))?;
    fs::write(&mpath, text).map_err(|e| StoreError::io(&mpath, e))?;
    Ok(mpath)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(q: usize, n: usize, c: usize) -> EnsembleBatch {
        let dims = EnsembleDims {
            samples: q,
            proposals: n,
            classes: c,
            mask_height: 2,
            mask_width: 3,
            height: 4,
            width: 6,
        };
        EnsembleBatch::new(
            dims,
            (0..dims.logits_len()).map(|i| (i % 7) as f32).collect(),
            (0..dims.masks_len()).map(|i| (i % 5) as f32 - 2.0).collect(),
            ClassCatalog::synthetic(c, 1).unwrap(),
        )
        .unwrap()
    }

    fn rewrite_manifest(path: &Path, edit: impl FnOnce(&mut EnsembleManifest)) {
        let mut m = EnsembleManifest::read(path).unwrap();
        edit(&mut m);
        fs::write(path, serde_json::to_string(&m).unwrap()).unwrap();
    }

    #[test]
    fn passes_dims_through() {
        let dir = tempfile::tempdir().unwrap();
        let b = batch(15, 100, 21);
        let p = write_ensemble(&b, "img", dir.path()).unwrap();
        let (m, loaded) = load_ensemble(&p).unwrap();
        assert_eq!(m.image_id, "img");
        assert_eq!(loaded.dims().samples, 15);
        assert_eq!(loaded.dims().proposals, 100);
        assert_eq!(loaded.dims().classes, 21);
        assert_eq!(loaded, b);
    }

    #[test]
    fn sample_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_ensemble(&batch(14, 3, 4), "img", dir.path()).unwrap();
        rewrite_manifest(&p, |m| m.samples = 15);
        assert!(matches!(
            load_ensemble(&p),
            Err(StoreError::ShapeMismatch { what: "logits", .. })
        ));
    }

    #[test]
    fn single_class_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_ensemble(&batch(1, 3, 4), "img", dir.path()).unwrap();
        rewrite_manifest(&p, |m| m.classes = 1);
        assert!(matches!(load_ensemble(&p), Err(StoreError::InvalidManifest(_))));
    }

    #[test]
    fn missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_ensemble(dir.path().join("nope.json"))
            .unwrap_err()
            .is_missing_file());
        let p = write_ensemble(&batch(1, 3, 4), "img", dir.path()).unwrap();
        fs::remove_file(dir.path().join("masks.pftn")).unwrap();
        assert!(load_ensemble(&p).unwrap_err().is_missing_file());
    }

    #[test]
    fn catalog_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_ensemble(&batch(1, 3, 4), "img", dir.path()).unwrap();
        let cat = ClassCatalog::synthetic(5, 1).unwrap();
        fs::write(dir.path().join("catalog.json"), serde_json::to_string(&cat).unwrap()).unwrap();
        assert!(matches!(
            load_ensemble(&p),
            Err(StoreError::Batch(crate::per_sample::BatchError::CatalogMismatch { .. }))
        ));
    }

    #[derive(Debug, Clone)]
    enum Corruption {
        None,
        Samples(usize),
        Proposals(usize),
        Classes(usize),
        MaskHeight(usize),
        NonFinite,
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn accepts_iff_consistent(
            q in 1usize..4, n in 1usize..4, c in 2usize..5,
            corruption in prop_oneof![
                Just(Corruption::None),
                (0usize..6).prop_map(Corruption::Samples),
                (0usize..6).prop_map(Corruption::Proposals),
                (0usize..6).prop_map(Corruption::Classes),
                (0usize..4).prop_map(Corruption::MaskHeight),
                Just(Corruption::NonFinite),
            ],
        ) {
            let dir = tempfile::tempdir().unwrap();
            let b = batch(q, n, c);
            let p = write_ensemble(&b, "x", dir.path()).unwrap();
            let consistent = match corruption {
                Corruption::None => true,
                Corruption::Samples(v) => { rewrite_manifest(&p, |m| m.samples = v); v == q }
                Corruption::Proposals(v) => { rewrite_manifest(&p, |m| m.proposals = v); v == n }
                Corruption::Classes(v) => { rewrite_manifest(&p, |m| m.classes = v); v == c }
                Corruption::MaskHeight(v) => { rewrite_manifest(&p, |m| m.mask_height = v); v == 2 }
                Corruption::NonFinite => {
                    let mut l = b.logits().to_vec();
                    l[0] = f32::NAN;
                    write_tensor(&Tensor::from_f32(vec![q, n, c], l).unwrap(), dir.path().join("logits.pftn")).unwrap();
                    false
                }
            };
            prop_assert_eq!(load_ensemble(&p).is_ok(), consistent);
        }
    }
}
