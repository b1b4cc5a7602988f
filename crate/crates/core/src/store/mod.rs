//! Descriptor sets, the GDSC file format and dataset manifests.

mod gdsc;
mod manifest;

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub use gdsc::{encode_descriptor_set, decode_descriptor_set, encoded_len, read_descriptor_file, write_descriptor_file, GDSC_MAGIC, GDSC_VERSION};
pub use manifest::{parse_manifest, parse_manifest_str, DatasetManifest, MetricKind, Query};

/// Named collection of fixed-dimension vectors keyed by image id.
///
/// Vectors are stored as `f32`, which is also the on-disk precision, so a
/// write/read round trip is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    metadata: BTreeMap<String, String>,
    lookup: HashMap<String, usize>,
}

impl DescriptorSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("descriptor dimension must be positive".into()));
        }
        Ok(DescriptorSet {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            metadata: BTreeMap::new(),
            lookup: HashMap::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    /// Appends a record, enforcing dimension, uniqueness and finiteness.
    pub fn push(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        let index = self.ids.len();
        if vector.len() != self.dim {
            return Err(Error::InvalidRecord {
                index,
                id,
                detail: format!("expected {} components, found {}", self.dim, vector.len()),
            });
        }
        if let Some(pos) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                index,
                id,
                detail: format!("non-finite component at position {pos}"),
            });
        }
        if self.lookup.contains_key(&id) {
            return Err(Error::InvalidRecord {
                index,
                id,
                detail: "duplicate image id".into(),
            });
        }
        self.lookup.insert(id.clone(), index);
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.lookup.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }
}

/// One dense SIFT descriptor with its sampling location.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptor {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub vector: Vec<f32>,
}

/// All local descriptors of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptorSet {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub descriptors: Vec<LocalDescriptor>,
}

pub const LOCAL_DESCRIPTOR_DIM: usize = 128;

impl LocalDescriptorSet {
    pub fn new(image_id: impl Into<String>, width: usize, height: usize) -> Self {
        LocalDescriptorSet {
            image_id: image_id.into(),
            width,
            height,
            descriptors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Checks the location bounds and the SIFT norm contract.
    pub fn validate(&self) -> Result<()> {
        for (index, d) in self.descriptors.iter().enumerate() {
            let fail = |detail: String| Error::InvalidRecord {
                index,
                id: self.image_id.clone(),
                detail,
            };
            if !(d.x >= 0.0 && d.x < self.width as f64 && d.y >= 0.0 && d.y < self.height as f64) {
                return Err(fail(format!("location ({}, {}) outside {}x{}", d.x, d.y, self.width, self.height)));
            }
            if !(d.scale > 0.0) {
                return Err(fail(format!("non-positive scale {}", d.scale)));
            }
            if d.vector.len() != LOCAL_DESCRIPTOR_DIM {
                return Err(fail(format!("descriptor length {}", d.vector.len())));
            }
            let n = d.vector.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if !(n <= 1.0 + 1e-6) {
                return Err(fail(format!("descriptor norm {n} exceeds 1")));
            }
        }
        Ok(())
    }

    /// Packs the set into GDSC form. Record ids carry the sampling location
    /// as `x=<x>;y=<y>;scale=<s>`; the image id and size go to metadata.
    pub fn to_descriptor_set(&self) -> DescriptorSet {
        let mut set = DescriptorSet::new(LOCAL_DESCRIPTOR_DIM)
            .expect("nonzero dim")
            .with_metadata("kind", "local")
            .with_metadata("image_id", self.image_id.clone())
            .with_metadata("width", self.width.to_string())
            .with_metadata("height", self.height.to_string());
        for d in &self.descriptors {
            set.push(local_record_id(d.x, d.y, d.scale), d.vector.clone())
                .expect("local descriptors are finite with unique locations");
        }
        set
    }

    pub fn from_descriptor_set(set: &DescriptorSet) -> Result<Self> {
        if set.dim() != LOCAL_DESCRIPTOR_DIM {
            return Err(Error::DimensionMismatch {
                expected: LOCAL_DESCRIPTOR_DIM,
                found: set.dim(),
            });
        }
        let meta = set.metadata();
        let field = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("local descriptor file lacks metadata key {k:?}")))
        };
        let parse_usize = |k: &str| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| Error::Format(format!("metadata {k:?} is not an integer")))
        };
        let mut out = LocalDescriptorSet::new(field("image_id")?, parse_usize("width")?, parse_usize("height")?);
        for (index, (id, v)) in set.iter().enumerate() {
            let (x, y, scale) = parse_local_record_id(id).ok_or_else(|| Error::InvalidRecord {
                index,
                id: id.to_string(),
                detail: "record id is not of the form x=..;y=..;scale=..".into(),
            })?;
            out.descriptors.push(LocalDescriptor {
                x,
                y,
                scale,
                vector: v.to_vec(),
            });
        }
        Ok(out)
    }
}

fn local_record_id(x: f64, y: f64, scale: f64) -> String {
    format!("x={x};y={y};scale={scale}")
}

fn parse_local_record_id(id: &str) -> Option<(f64, f64, f64)> {
    let mut parts = id.split(';');
    let mut get = |key: &str| -> Option<f64> {
        let (k, v) = parts.next()?.split_once('=')?;
        (k == key).then(|| v.parse().ok()).flatten()
    };
    let out = (get("x")?, get("y")?, get("scale")?);
    parts.next().is_none().then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_rejects_wrong_dim_nan_and_duplicates() {
        let mut s = DescriptorSet::new(2).unwrap();
        s.push("a", vec![1.0, 0.0]).unwrap();
        assert!(matches!(s.push("b", vec![1.0]), Err(Error::InvalidRecord { index: 1, .. })));
        assert!(s.push("c", vec![f32::NAN, 0.0]).is_err());
        assert!(s.push("d", vec![f32::INFINITY, 0.0]).is_err());
        assert!(s.push("a", vec![0.0, 0.0]).is_err());
        assert_eq!(s.len(), 1);
        assert_eq!(s.get("a"), Some(&[1.0f32, 0.0][..]));
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(DescriptorSet::new(0).is_err());
    }

    #[test]
    fn local_set_round_trips_through_descriptor_set() {
        let mut l = LocalDescriptorSet::new("img/a.pgm", 40, 30);
        let mut v = vec![0.0f32; 128];
        v[3] = 1.0;
        l.descriptors.push(LocalDescriptor { x: 12.0, y: 12.5, scale: 4.0, vector: v.clone() });
        l.descriptors.push(LocalDescriptor { x: 16.0, y: 12.5, scale: 4.0, vector: v });
        l.validate().unwrap();
        let back = LocalDescriptorSet::from_descriptor_set(&l.to_descriptor_set()).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn local_validation_catches_bad_location_and_norm() {
        let mut l = LocalDescriptorSet::new("a", 10, 10);
        l.descriptors.push(LocalDescriptor { x: 10.0, y: 1.0, scale: 1.0, vector: vec![0.0; 128] });
        assert!(l.validate().is_err());
        l.descriptors[0].x = 5.0;
        l.descriptors[0].vector[0] = 1.1;
        assert!(l.validate().is_err());
        l.descriptors[0].vector[0] = 1.0;
        l.validate().unwrap();
        l.descriptors[0].scale = 0.0;
        assert!(l.validate().is_err());
    }
}
