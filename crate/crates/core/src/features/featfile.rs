//! Precomputed region features, one JSON record per image:
//!
//! ```json
//! {"image_id": "img1", "image_w": 640, "image_h": 480,
//!  "objects": [{"label": "car", "bbox": [0, 0, 10, 10], "fr": [...]}],
//!  "ocr": [{"text": "stop", "bbox": [5, 5, 20, 12], "fr": [...]}]}
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{BBox, FeatureDims};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    #[serde(alias = "label")]
    pub text: String,
    pub bbox: [f64; 4],
    pub fr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageFeatures {
    pub image_id: String,
    pub image_w: f64,
    pub image_h: f64,
    #[serde(default)]
    pub objects: Vec<RegionRecord>,
    #[serde(default)]
    pub ocr: Vec<RegionRecord>,
}

impl ImageFeatures {
    pub fn bbox(&self, b: &[f64; 4]) -> Result<BBox> {
        BBox::new(b[0], b[1], b[2], b[3], self.image_w, self.image_h)
    }
}

/// Loads a feature file keyed by image id, validating vector widths and boxes.
pub fn load_feature_file(path: &Path, dims: &FeatureDims) -> Result<BTreeMap<String, ImageFeatures>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let rec: ImageFeatures = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        for r in rec.objects.iter().chain(&rec.ocr) {
            if r.fr.len() != dims.region {
                return Err(schema(format!(
                    "region vector for {:?} has {} values, expected {}",
                    r.text,
                    r.fr.len(),
                    dims.region
                )));
            }
            rec.bbox(&r.bbox).map_err(|e| schema(e.to_string()))?;
        }
        if out.insert(rec.image_id.clone(), rec).is_some() {
            return Err(schema("duplicate image id".into()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn dims() -> FeatureDims {
        FeatureDims {
            contextual: 4,
            subword: 4,
            region: 3,
        }
    }

    #[test]
    fn loads_and_validates() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"image_id":"a","image_w":10,"image_h":10,"objects":[{{"label":"car","bbox":[0,0,5,5],"fr":[1,2,3]}}]}}"#
        )
        .unwrap();
        writeln!(f).unwrap();
        writeln!(
            f,
            r#"{{"image_id":"b","image_w":10,"image_h":10,"ocr":[{{"text":"x","bbox":[0,0,5,5],"fr":[1,2]}}]}}"#
        )
        .unwrap();
        let err = load_feature_file(f.path(), &dims()).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 3, .. }), "{err}");
    }

    #[test]
    fn accepts_valid_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"image_id":"a","image_w":10,"image_h":10,"objects":[{{"label":"car","bbox":[0,0,5,5],"fr":[1,2,3]}}]}}"#
        )
        .unwrap();
        let map = load_feature_file(f.path(), &dims()).unwrap();
        assert_eq!(map["a"].objects[0].text, "car");
    }
}
