//! Self-describing model container.
//!
//! Layout: the magic line `FSHD1\n`, a little-endian `u32` header length, a
//! JSON header (architecture, purpose, class count or representation mode,
//! parameter count), then the parameters as little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, ArchitectureSpec, Model, Purpose, ReconstructionModel, SegmenterModel};
use crate::error::{Error, Result};
use crate::frequency::RepresentationMode;

pub const MODEL_MAGIC: &[u8] = b"FSHD1\n";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    purpose: Purpose,
    architecture: ArchitectureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<RepresentationMode>,
    param_count: usize,
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let (header, params) = match model {
        Model::Segmenter(m) => (
            Header {
                purpose: Purpose::Segment,
                architecture: m.architecture,
                num_classes: Some(m.num_classes),
                mode: None,
                param_count: m.net.param_count(),
            },
            &m.net.params,
        ),
        Model::Reconstructor(m) => (
            Header {
                purpose: Purpose::Reconstruct,
                architecture: m.architecture,
                num_classes: None,
                mode: Some(m.mode),
                param_count: m.net.param_count(),
            },
            &m.net.params,
        ),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut bytes = Vec::with_capacity(MODEL_MAGIC.len() + 4 + header.len() + 4 * params.len());
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header);
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    let fail = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    let rest = bytes.strip_prefix(MODEL_MAGIC).ok_or_else(|| fail("missing FSHD1 magic"))?;
    if rest.len() < 4 {
        return Err(fail("truncated header length"));
    }
    let hlen = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
    let rest = &rest[4..];
    if rest.len() < hlen {
        return Err(fail("truncated header"));
    }
    let header: Header = serde_json::from_slice(&rest[..hlen]).map_err(|e| fail(&format!("bad header: {e}")))?;
    let body = &rest[hlen..];
    if body.len() != 4 * header.param_count {
        return Err(fail(&format!("expected {} parameter bytes, found {}", 4 * header.param_count, body.len())));
    }
    let num_classes = header.num_classes.unwrap_or(header.architecture.in_channels);
    let mut model = build_model(header.architecture, header.purpose, num_classes, 0)?;
    let params = match &mut model {
        Model::Segmenter(m) => &mut m.net.params,
        Model::Reconstructor(m) => {
            m.mode = header.mode.ok_or_else(|| fail("reconstructor without representation mode"))?;
            &mut m.net.params
        }
    };
    if params.len() != header.param_count {
        return Err(fail("parameter count does not match architecture"));
    }
    for (p, chunk) in params.iter_mut().zip(body.chunks_exact(4)) {
        *p = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
    }
    Ok(model)
}

pub fn load_segmenter(path: &Path) -> Result<SegmenterModel> {
    load_model(path)?.into_segmenter()
}

pub fn load_reconstructor(path: &Path) -> Result<ReconstructionModel> {
    load_model(path)?.into_reconstructor()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;
    use ndarray::Array2;

    #[test]
    fn round_trip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let seg = SegmenterModel::new(ArchitectureSpec::new(Family::Densenet, 3).with_size(4, 2), 3, 9).unwrap();
        let p = dir.path().join("seg.fshd");
        save_model(&Model::Segmenter(seg.clone()), &p).unwrap();
        let back = load_segmenter(&p).unwrap();
        let img = Array2::from_shape_fn((8, 8), |(y, x)| (x * y) as f64 / 64.0);
        assert_eq!(seg.logits(&img).unwrap(), back.logits(&img).unwrap());

        let rec = ReconstructionModel::new(ArchitectureSpec::new(Family::AutoencoderI, 1).with_size(4, 2), RepresentationMode::Frequency, 2).unwrap();
        let q = dir.path().join("rec.fshd");
        save_model(&Model::Reconstructor(rec.clone()), &q).unwrap();
        assert_eq!(load_reconstructor(&q).unwrap(), rec);
    }

    #[test]
    fn purpose_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let seg = SegmenterModel::new(ArchitectureSpec::new(Family::Segnet, 2).with_size(4, 2), 2, 0).unwrap();
        let p = dir.path().join("seg.fshd");
        save_model(&Model::Segmenter(seg), &p).unwrap();
        assert!(matches!(load_reconstructor(&p), Err(Error::PurposeMismatch { .. })));
    }

    #[test]
    fn truncated_and_garbage_files() {
        let dir = tempfile::tempdir().unwrap();
        let seg = SegmenterModel::new(ArchitectureSpec::new(Family::Segnet, 2).with_size(4, 2), 2, 0).unwrap();
        let p = dir.path().join("seg.fshd");
        save_model(&Model::Segmenter(seg), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        for cut in [3, 8, 20, bytes.len() - 1] {
            fs::write(&p, &bytes[..cut]).unwrap();
            assert!(matches!(load_model(&p), Err(Error::Format(_))), "cut at {cut}");
        }
        fs::write(&p, b"not a model").unwrap();
        assert!(matches!(load_model(&p), Err(Error::Format(_))));
    }
}
