//! Dataset loading, set grouping, and seeded synthetic data.
//!
//! The on-disk vector format is fvecs: each record is one little-endian
//! signed 32-bit dimension count d followed by d little-endian IEEE-754
//! 32-bit floats, and every record in a file must share d.

use crate::error::{Error, Result};
use crate::types::{Vector, VectorSet};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Reads until the buffer is full or the stream ends; returns bytes read.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Parses a whole fvecs file. The dimension of the first record is enforced
/// on all subsequent records.
pub fn load_fvecs(path: impl AsRef<Path>) -> Result<Vec<Vector>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut vectors = Vec::new();
    let mut consumed: u64 = 0;
    let mut expected: Option<usize> = None;
    loop {
        let mut dim_bytes = [0u8; 4];
        match read_full(&mut r, &mut dim_bytes)? {
            0 => break,
            4 => {}
            _ => {
                return Err(Error::Format(format!(
                    "{}: truncated record header after {} vectors",
                    path.display(),
                    vectors.len()
                )))
            }
        }
        consumed += 4;
        let d = i32::from_le_bytes(dim_bytes);
        if d <= 0 {
            return Err(Error::Format(format!(
                "{}: record {} claims dimension {d}",
                path.display(),
                vectors.len()
            )));
        }
        // Reject implausible headers before allocating the payload buffer;
        // a corrupt dimension can claim gigabytes.
        if consumed + 4 * d as u64 > file_len {
            return Err(Error::Format(format!(
                "{}: record {} claims dimension {d} but only {} bytes remain",
                path.display(),
                vectors.len(),
                file_len - consumed
            )));
        }
        consumed += 4 * d as u64;
        let d = d as usize;
        match expected {
            None => expected = Some(d),
            Some(e) if e != d => {
                return Err(Error::Format(format!(
                    "{}: record {} has dimension {d}, file started with {e}",
                    path.display(),
                    vectors.len()
                )))
            }
            Some(_) => {}
        }
        let mut components = vec![0.0f32; d];
        r.read_f32_into::<LittleEndian>(&mut components)
            .map_err(|e| {
                if e.kind() == io::ErrorKind::UnexpectedEof {
                    Error::Format(format!(
                        "{}: record {} truncated mid-payload",
                        path.display(),
                        vectors.len()
                    ))
                } else {
                    Error::Io(e)
                }
            })?;
        vectors.push(Vector::new(components)?);
    }
    Ok(vectors)
}

/// Writes vectors in fvecs format. All vectors must share one dimension.
pub fn write_fvecs(path: impl AsRef<Path>, vectors: &[Vector]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let dim = vectors.first().map(Vector::dim);
    for v in vectors {
        if v.dim() != dim.unwrap() {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap(),
                actual: v.dim(),
            });
        }
        w.write_i32::<LittleEndian>(v.dim() as i32)?;
        for x in v.components() {
            w.write_f32::<LittleEndian>(*x)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups consecutive runs of `n` vectors into sets with sequential ids
/// starting at 0. A final incomplete group is dropped.
pub fn group_sets(vectors: Vec<Vector>, n: usize) -> Result<Vec<VectorSet>> {
    if n == 0 {
        return Err(Error::InvalidInput("set size must be at least 1".into()));
    }
    let mut sets = Vec::with_capacity(vectors.len() / n);
    let mut chunk = Vec::with_capacity(n);
    for v in vectors {
        chunk.push(v);
        if chunk.len() == n {
            let id = sets.len() as u64;
            sets.push(VectorSet::new(id, std::mem::take(&mut chunk))?);
            chunk = Vec::with_capacity(n);
        }
    }
    Ok(sets)
}

/// One line of a sets manifest: an explicit set built from fvecs rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetManifestEntry {
    pub id: u64,
    pub rows: Vec<usize>,
}

/// Parses a newline-delimited JSON sets manifest. Blank lines are skipped.
pub fn load_sets_manifest(path: impl AsRef<Path>) -> Result<Vec<SetManifestEntry>> {
    let path = path.as_ref();
    let r = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: SetManifestEntry = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Materializes manifest entries against a loaded vector table.
pub fn sets_from_manifest(
    vectors: &[Vector],
    entries: &[SetManifestEntry],
) -> Result<Vec<VectorSet>> {
    let mut sets = Vec::with_capacity(entries.len());
    for entry in entries {
        let mut members = Vec::with_capacity(entry.rows.len());
        for &row in &entry.rows {
            let v = vectors.get(row).ok_or_else(|| {
                Error::Format(format!(
                    "set {}: row {row} out of range ({} vectors loaded)",
                    entry.id,
                    vectors.len()
                ))
            })?;
            members.push(v.clone());
        }
        sets.push(VectorSet::new(entry.id, members)?);
    }
    Ok(sets)
}

/// Default mixture shape for generated data. A handful of well-separated
/// directions with moderate within-cluster spread mimics the cluster
/// structure of real embedding corpora, which is what makes an inverted
/// file index worth probing selectively.
pub const SYNTHETIC_CLUSTERS: usize = 64;
pub const SYNTHETIC_SPREAD: f64 = 0.45;
/// Consecutive vectors sharing one component draw, sized to the default
/// grouping so a grouped set models several views of one underlying item.
pub const SYNTHETIC_COHERENCE: usize = 3;

/// Parameters for the seeded synthetic generator: a Gaussian mixture with
/// `clusters` unit-scale centers and per-coordinate noise `spread`. Runs
/// of `coherence` consecutive vectors share a component draw, so that
/// consecutive grouping produces sets of mutually related vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub count: usize,
    pub dim: usize,
    pub clusters: usize,
    pub spread: f64,
    pub coherence: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(count: usize, dim: usize, seed: u64) -> Self {
        Self {
            count,
            dim,
            clusters: SYNTHETIC_CLUSTERS,
            spread: SYNTHETIC_SPREAD,
            coherence: SYNTHETIC_COHERENCE,
            seed,
        }
    }
}

/// Draws `spec.count` vectors from the mixture. Deterministic for a given
/// spec.
pub fn synthetic_vectors(spec: &SyntheticSpec) -> Result<Vec<Vector>> {
    if spec.dim == 0 || spec.clusters == 0 || spec.coherence == 0 {
        return Err(Error::InvalidInput(
            "synthetic dim, clusters, and coherence must be positive".into(),
        ));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::InvalidInput(
            "synthetic spread must be finite and nonnegative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers = vec![0.0f64; spec.clusters * spec.dim];
    for c in centers.iter_mut() {
        *c = StandardNormal.sample(&mut rng);
    }
    let mut out = Vec::with_capacity(spec.count);
    let mut pick = 0;
    for i in 0..spec.count {
        if i % spec.coherence == 0 {
            pick = rng.random_range(0..spec.clusters);
        }
        let center = &centers[pick * spec.dim..(pick + 1) * spec.dim];
        let components: Vec<f32> = center
            .iter()
            .map(|c| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                (c + spec.spread * noise) as f32
            })
            .collect();
        out.push(Vector::new(components)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn single_record_round_trip() {
        let dir = tmp();
        let path = dir.path().join("one.fvecs");
        let v = vec![Vector::new(vec![1.0, 0.0]).unwrap()];
        write_fvecs(&path, &v).unwrap();
        let loaded = load_fvecs(&path).unwrap();
        assert_eq!(loaded, v);
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tmp();
        let path = dir.path().join("empty.fvecs");
        fs::write(&path, b"").unwrap();
        assert!(load_fvecs(&path).unwrap().is_empty());
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tmp();
        let path = dir.path().join("cut.fvecs");
        let mut bytes = 3i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_fvecs(&path), Err(Error::Format(_))));
    }

    #[test]
    fn implausible_dimension_rejected_without_allocating() {
        let dir = tmp();
        let path = dir.path().join("huge.fvecs");
        // Header claims ~1.6e9 components; the file holds 3 bytes.
        let mut bytes = 1_651_761_511i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0u8; 3]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_fvecs(&path), Err(Error::Format(_))));
    }

    #[test]
    fn negative_dimension_rejected() {
        let dir = tmp();
        let path = dir.path().join("neg.fvecs");
        let mut bytes = (-2i32).to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_fvecs(&path), Err(Error::Format(_))));
    }

    #[test]
    fn inconsistent_dimension_rejected() {
        let dir = tmp();
        let path = dir.path().join("mixed.fvecs");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        bytes.extend_from_slice(&3i32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_fvecs(&path), Err(Error::Format(_))));
    }

    #[test]
    fn grouping_drops_remainder() {
        let vectors: Vec<Vector> = (0..7)
            .map(|i| Vector::new(vec![i as f32 + 1.0, 1.0]).unwrap())
            .collect();
        let sets = group_sets(vectors, 3).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].id(), 0);
        assert_eq!(sets[1].id(), 1);
        assert!(sets.iter().all(|s| s.card() == 3));
        assert!(group_sets(vec![], 0).is_err());
    }

    #[test]
    fn manifest_round_trip_and_bounds() {
        let dir = tmp();
        let path = dir.path().join("sets.ndjson");
        fs::write(
            &path,
            "{\"id\": 10, \"rows\": [0, 2]}\n\n{\"id\": 11, \"rows\": [1]}\n",
        )
        .unwrap();
        let entries = load_sets_manifest(&path).unwrap();
        assert_eq!(entries.len(), 2);
        let vectors: Vec<Vector> = (0..3)
            .map(|i| Vector::new(vec![i as f32 + 1.0, 0.5]).unwrap())
            .collect();
        let sets = sets_from_manifest(&vectors, &entries).unwrap();
        assert_eq!(sets[0].id(), 10);
        assert_eq!(sets[0].card(), 2);
        assert_eq!(sets[1].card(), 1);

        let bad = vec![SetManifestEntry {
            id: 1,
            rows: vec![99],
        }];
        assert!(matches!(
            sets_from_manifest(&vectors, &bad),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            count: 50,
            dim: 10,
            clusters: 4,
            spread: 0.3,
            coherence: 1,
            seed: 9,
        };
        let a = synthetic_vectors(&spec).unwrap();
        let b = synthetic_vectors(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|v| v.dim() == 10));
        let other = synthetic_vectors(&SyntheticSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn synthetic_coherence_repeats_components_per_run() {
        // With zero spread, every vector equals its component's center, so
        // runs of `coherence` are identical.
        let spec = SyntheticSpec {
            count: 12,
            dim: 6,
            clusters: 5,
            spread: 0.0,
            coherence: 3,
            seed: 11,
        };
        let v = synthetic_vectors(&spec).unwrap();
        for run in v.chunks(3) {
            assert_eq!(run[0], run[1]);
            assert_eq!(run[1], run[2]);
        }
        // Distinct runs must not all share one component.
        assert!(v.chunks(3).any(|run| run[0] != v[0]));
    }
}
