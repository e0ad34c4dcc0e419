use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::ImageFormat;
use parking_lot::RwLock;
use radeval_core::corpus::CaseRecord;
use radeval_core::text::sha256_hex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("case {case_id}: {source}")]
    Decode { case_id: String, source: image::ImageError },
    #[error("image index: {0}")]
    Index(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImageError + '_ {
    move |source| ImageError::Io { path: path.display().to_string(), source }
}

/// Case images converted to PNG at ingest and stored under the SHA-256 of
/// the PNG bytes. `index.json` maps case ids to digests.
#[derive(Debug)]
pub struct ImageStore {
    dir: PathBuf,
    index: RwLock<BTreeMap<String, String>>,
}

impl ImageStore {
    pub fn open(dir: &Path) -> Result<Self, ImageError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let index_path = dir.join("index.json");
        let index = match std::fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(io_err(&index_path)(e)),
        };
        Ok(ImageStore { dir: dir.to_path_buf(), index: RwLock::new(index) })
    }

    fn blob_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.png"))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }

    /// Decodes any supported format, re-encodes losslessly as PNG at the
    /// original resolution and returns the content digest.
    pub fn ingest_bytes(&self, case_id: &str, bytes: &[u8]) -> Result<String, ImageError> {
        let decode = |source| ImageError::Decode { case_id: case_id.to_string(), source };
        let img = image::load_from_memory(bytes).map_err(decode)?;
        let mut png = Vec::new();
        img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png).map_err(decode)?;
        let digest = sha256_hex(&png);
        let blob = self.blob_path(&digest);
        if !blob.exists() {
            Self::write_atomic(&blob, &png)?;
        }
        let mut index = self.index.write();
        index.insert(case_id.to_string(), digest.clone());
        Self::write_atomic(&self.dir.join("index.json"), &serde_json::to_vec_pretty(&*index)?)?;
        Ok(digest)
    }

    pub fn ingest_file(&self, case_id: &str, source: &Path) -> Result<String, ImageError> {
        let bytes = std::fs::read(source).map_err(io_err(source))?;
        self.ingest_bytes(case_id, &bytes)
    }

    /// Ingests `root/<image_ref>` for every case not yet in the store.
    /// Returns how many were added.
    pub fn ingest_cases<'a>(&self, cases: impl IntoIterator<Item = &'a CaseRecord>, root: &Path) -> Result<usize, ImageError> {
        let mut added = 0;
        for case in cases {
            if self.digest(&case.case_id).is_none() {
                self.ingest_file(&case.case_id, &root.join(&case.image_ref))?;
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn digest(&self, case_id: &str) -> Option<String> {
        self.index.read().get(case_id).cloned()
    }

    /// Digest and PNG bytes for a case.
    pub fn read(&self, case_id: &str) -> Result<Option<(String, Vec<u8>)>, ImageError> {
        let Some(digest) = self.digest(case_id) else { return Ok(None) };
        let path = self.blob_path(&digest);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        Ok(Some((digest, bytes)))
    }
}
