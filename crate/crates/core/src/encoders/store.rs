//! Binary embedding store.
//!
//! Layout (little endian): magic `EMB1`, `u32` count, `u32` width, `u8` kind,
//! then `count * width` `f32` values row-major. Keys live in a sidecar
//! `<path>.idx`, one per line in row order.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmbeddingKind {
    Text,
    Visual,
}

impl EmbeddingKind {
    fn to_byte(self) -> u8 {
        match self {
            EmbeddingKind::Text => 0,
            EmbeddingKind::Visual => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(EmbeddingKind::Text),
            1 => Some(EmbeddingKind::Visual),
            _ => None,
        }
    }
}

/// Keyed rows of equal width, stored as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    kind: EmbeddingKind,
    width: usize,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(kind: EmbeddingKind, width: usize) -> Self {
        Self {
            kind,
            width,
            keys: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| f64::from(x)).collect()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index_of(key).map(|i| self.row(i))
    }

    pub fn get_f64(&self, key: &str) -> Option<Vec<f64>> {
        self.index_of(key).map(|i| self.row_f64(i))
    }

    pub fn push_f32(&mut self, key: impl Into<String>, row: &[f32]) -> Result<usize> {
        let key = key.into();
        if row.len() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                actual: row.len(),
            });
        }
        if key.contains('\n') || key.contains('\r') {
            return Err(Error::invalid(format!("store key {key:?} contains a line break")));
        }
        if let Some(bad) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("column {bad} of row `{key}`")));
        }
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        let i = self.keys.len();
        self.index.insert(key.clone(), i);
        self.keys.push(key);
        self.data.extend_from_slice(row);
        Ok(i)
    }

    /// Appends a row, rounding to `f32`.
    pub fn push(&mut self, key: impl Into<String>, row: &[f64]) -> Result<usize> {
        let r: Vec<f32> = row.iter().map(|&x| x as f32).collect();
        self.push_f32(key, &r)
    }

    pub fn index_path(path: &Path) -> PathBuf {
        let mut s: OsString = path.as_os_str().to_owned();
        s.push(".idx");
        PathBuf::from(s)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.push(self.kind.to_byte());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let idx = Self::index_path(path);
        let file = std::fs::File::create(&idx).map_err(|e| Error::io(&idx, e))?;
        let mut w = BufWriter::new(file);
        for k in &self.keys {
            writeln!(w, "{k}").map_err(|e| Error::io(&idx, e))?;
        }
        w.flush().map_err(|e| Error::io(&idx, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let idx = Self::index_path(path);
        let keys_text = std::fs::read_to_string(&idx).map_err(|e| Error::io(&idx, e))?;
        let keys: Vec<String> = keys_text.lines().map(str::to_string).collect();
        Self::from_parts(path, &bytes, keys)
    }

    /// Reads a store and checks its kind and width.
    pub fn read_expecting(
        path: impl AsRef<Path>,
        kind: EmbeddingKind,
        width: usize,
    ) -> Result<Self> {
        let store = Self::read(path.as_ref())?;
        if store.width != width {
            return Err(Error::WidthMismatch {
                expected: width,
                actual: store.width,
            });
        }
        if store.kind != kind {
            return Err(Error::invalid(format!(
                "{} holds {:?} embeddings, expected {kind:?}",
                path.as_ref().display(),
                store.kind
            )));
        }
        Ok(store)
    }

    pub fn from_parts(path: &Path, bytes: &[u8], keys: Vec<String>) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != STORE_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "EMB1",
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                detail: format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let count = u32_at(4);
        let width = u32_at(8);
        let kind = EmbeddingKind::from_byte(bytes[12]).ok_or_else(|| {
            Error::invalid(format!("{}: unknown embedding kind {}", path.display(), bytes[12]))
        })?;
        let expected = HEADER_LEN + count * width * 4;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                detail: format!("expected {expected} bytes, found {}", bytes.len()),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                detail: format!("{} trailing bytes after the last row", bytes.len() - expected),
            });
        }
        if keys.len() != count {
            return Err(Error::IndexMismatch {
                path: Self::index_path(path),
                detail: format!("{} keys for {count} rows", keys.len()),
            });
        }
        let data: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut index = HashMap::with_capacity(count);
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::DuplicateKey(k.clone()));
            }
        }
        Ok(Self {
            kind,
            width,
            keys,
            index,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &EmbeddingStore) -> Vec<u32> {
        (0..s.len()).flat_map(|i| s.row(i).iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect()
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.emb");
        let s = EmbeddingStore::new(EmbeddingKind::Text, 768);
        s.write(&p).unwrap();
        let back = EmbeddingStore::read(&p).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, s);
    }

    #[test]
    fn small_store_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.emb");
        let mut s = EmbeddingStore::new(EmbeddingKind::Visual, 4);
        s.push_f32("a", &[1.0, -0.0, 3.5e-38, f32::MIN_POSITIVE]).unwrap();
        s.push_f32("b", &[0.1, 0.2, 0.3, 1e30]).unwrap();
        s.push_f32("c", &[f32::MAX, -f32::MAX, 1.0e-45, -7.25]).unwrap();
        s.write(&p).unwrap();
        let back = EmbeddingStore::read(&p).unwrap();
        assert_eq!(back.keys(), s.keys());
        assert_eq!(bits(&back), bits(&s));
        assert_eq!(back.kind(), EmbeddingKind::Visual);
    }

    #[test]
    fn corrupted_magic_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.emb");
        let mut s = EmbeddingStore::new(EmbeddingKind::Text, 2);
        s.push("k", &[1.0, 2.0]).unwrap();
        s.write(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(EmbeddingStore::read(&p), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncation_width_and_index_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.emb");
        let mut s = EmbeddingStore::new(EmbeddingKind::Text, 3);
        s.push("k0", &[1.0, 2.0, 3.0]).unwrap();
        s.push("k1", &[4.0, 5.0, 6.0]).unwrap();
        s.write(&p).unwrap();
        assert!(matches!(
            EmbeddingStore::read_expecting(&p, EmbeddingKind::Text, 4),
            Err(Error::WidthMismatch { expected: 4, actual: 3 })
        ));
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(EmbeddingStore::read(&p), Err(Error::Truncated { .. })));
        std::fs::write(&p, &bytes).unwrap();
        std::fs::write(EmbeddingStore::index_path(&p), "k0\n").unwrap();
        assert!(matches!(EmbeddingStore::read(&p), Err(Error::IndexMismatch { .. })));
    }

    #[test]
    fn push_validates_rows() {
        let mut s = EmbeddingStore::new(EmbeddingKind::Text, 2);
        assert!(matches!(s.push("a", &[1.0]), Err(Error::WidthMismatch { .. })));
        assert!(matches!(s.push("a", &[f64::NAN, 1.0]), Err(Error::NonFinite(_))));
        s.push("a", &[1.0, 1.0]).unwrap();
        assert!(matches!(s.push("a", &[1.0, 1.0]), Err(Error::DuplicateKey(_))));
        assert!(s.push("x\ny", &[1.0, 1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn round_trip_is_bit_exact(
            width in prop::sample::select(vec![4usize, 768, 4096]),
            rows in 0usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = EmbeddingStore::new(EmbeddingKind::Visual, width);
            for r in 0..rows {
                let row: Vec<f32> = (0..width)
                    .map(|_| f32::from_bits(rng.random::<u32>() & 0xBF7F_FFFF))
                    .collect();
                s.push_f32(format!("row{r}"), &row).unwrap();
            }
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("p.emb");
            s.write(&p).unwrap();
            let back = EmbeddingStore::read(&p).unwrap();
            prop_assert_eq!(bits(&back), bits(&s));
            prop_assert_eq!(back.keys(), s.keys());
        }
    }
}
