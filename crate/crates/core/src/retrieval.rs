//! Exact nearest-neighbour search by Euclidean distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::binio::Reader;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cannot build an index from zero items")]
    EmptyInput,
    #[error("k must be positive")]
    ZeroK,
    #[error("corrupt index snapshot: {0}")]
    CorruptSnapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Euclidean distance.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(squared_l2(a, b).sqrt())
}

#[inline]
fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// One search hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub ordinal: usize,
    pub distance: f64,
}

/// Immutable flat index. Entries keep insertion order; the ordinal of an
/// entry is its position in that order and breaks distance ties.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
}

pub fn build_index<I, V>(items: I) -> Result<FlatIndex, RetrievalError>
where
    I: IntoIterator<Item = (String, V)>,
    V: AsRef<[f64]>,
{
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (id, v) in items {
        let v = v.as_ref();
        let expected = *dim.get_or_insert(v.len());
        if v.len() != expected {
            return Err(RetrievalError::DimensionMismatch {
                expected,
                actual: v.len(),
            });
        }
        ids.push(id);
        data.extend_from_slice(v);
    }
    match dim {
        None | Some(0) => Err(RetrievalError::EmptyInput),
        Some(dim) => Ok(FlatIndex { dim, ids, data }),
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    ordinal: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.ordinal.cmp(&other.ordinal))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlatIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, ordinal: usize) -> &str {
        &self.ids[ordinal]
    }

    pub fn vector(&self, ordinal: usize) -> &[f64] {
        &self.data[ordinal * self.dim..(ordinal + 1) * self.dim]
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &str, &[f64])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (i, id.as_str(), self.vector(i)))
    }

    /// The `min(k, n)` nearest entries, ordered by (distance, ordinal).
    /// Selection keeps a max-heap of size k.
    pub fn query(&self, q: &[f64], k: usize) -> Result<Vec<Neighbor>, RetrievalError> {
        if q.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let k = k.min(self.len());
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        for ordinal in 0..self.len() {
            let dist = squared_l2(q, self.vector(ordinal)).sqrt();
            let entry = HeapEntry { dist, ordinal };
            if heap.len() < k {
                heap.push(entry);
            } else if entry < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(entry);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Neighbor {
                id: self.ids[e.ordinal].clone(),
                ordinal: e.ordinal,
                distance: e.dist,
            })
            .collect())
    }

    /// Snapshot layout (little-endian): magic `CPFLAT\0\0`, version `u32`,
    /// dim `u32`, n `u64`, header CRC32; then per entry `(ordinal u64,
    /// id_len u32, id bytes, dim × f64 bits, CRC32)`.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        for (ordinal, id, v) in self.entries() {
            let start = out.len();
            out.extend_from_slice(&(ordinal as u64).to_le_bytes());
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
            let crc = crc32fast::hash(&out[start..]);
            out.extend_from_slice(&crc.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bytes = fs::read(path)?;
        let corrupt = |m: &str| RetrievalError::CorruptSnapshot(m.to_string());
        let mut r = Reader::new(&bytes);
        if r.take(8) != Some(SNAPSHOT_MAGIC.as_slice()) {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32().ok_or_else(|| corrupt("truncated header"))?;
        if version != SNAPSHOT_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let dim = r.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
        let n = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
        let header_end = r.pos;
        if r.u32() != Some(crc32fast::hash(&bytes[..header_end])) {
            return Err(corrupt("header checksum mismatch"));
        }
        if dim == 0 || n == 0 {
            return Err(corrupt("empty index"));
        }
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut data = Vec::with_capacity(n.saturating_mul(dim).min(1 << 24));
        for i in 0..n {
            let truncated = || corrupt(&format!("truncated entry {i}"));
            let start = r.pos;
            let ordinal = r.u64().ok_or_else(truncated)?;
            if ordinal != i as u64 {
                return Err(corrupt(&format!("entry {i} has ordinal {ordinal}")));
            }
            let len = r.u32().ok_or_else(truncated)? as usize;
            let id = r.take(len).ok_or_else(truncated)?;
            let id = String::from_utf8(id.to_vec()).map_err(|_| corrupt("id not utf-8"))?;
            for _ in 0..dim {
                data.push(f64::from_bits(r.u64().ok_or_else(truncated)?));
            }
            let end = r.pos;
            if r.u32() != Some(crc32fast::hash(&bytes[start..end])) {
                return Err(corrupt(&format!("entry {i} checksum mismatch")));
            }
            ids.push(id);
        }
        if !r.at_end() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(FlatIndex { dim, ids, data })
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"CPFLAT\0\0";
const SNAPSHOT_VERSION: u32 = 1;
