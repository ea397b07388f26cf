//! Index persistence.
//!
//! One binary file per index:
//!
//! ```text
//! magic "VSLV1"
//! u32 target_card, u32 candidate_card, u32 dim      (little-endian)
//! u32 variant (0 flat, 1 ivf), u32 entries, u32 leaves (0 for flat)
//! ivf only: leaves * row_len centroid f32s
//! per entry: u64 set_id, row_len f32s
//! ```
//!
//! Posting lists are not stored; loading reassigns rows to the stored
//! centroids, which reproduces the build-time lists exactly.

use super::MipsIndex;
use crate::encode::Shape;
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"VSLV1";

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format(format!("index file truncated while reading {what}"))
    } else {
        Error::Io(e)
    }
}

pub(super) fn save(index: &MipsIndex, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let shape = index.shape;
    let (variant, leaves) = match index.centroids() {
        None => (0u32, 0u32),
        Some(c) => (1u32, (c.len() / shape.len()) as u32),
    };
    for field in [
        shape.target_card,
        shape.candidate_card,
        shape.dim,
        variant as usize,
        index.ids.len(),
        leaves as usize,
    ] {
        w.write_u32::<LittleEndian>(u32::try_from(field).map_err(|_| {
            Error::InvalidInput(format!("index field {field} exceeds the u32 file format"))
        })?)?;
    }
    if let Some(centroids) = index.centroids() {
        for x in centroids {
            w.write_f32::<LittleEndian>(*x)?;
        }
    }
    let row_len = shape.len();
    for (row, id) in index.ids.iter().enumerate() {
        w.write_u64::<LittleEndian>(*id)?;
        for x in &index.data[row * row_len..(row + 1) * row_len] {
            w.write_f32::<LittleEndian>(*x)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_f32s(r: &mut impl Read, count: usize, what: &str) -> Result<Vec<f32>> {
    let mut out = vec![0.0f32; count];
    r.read_f32_into::<LittleEndian>(&mut out)
        .map_err(|e| truncated(e, what))?;
    Ok(out)
}

pub(super) fn load(path: &Path) -> Result<MipsIndex> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|e| truncated(e, "magic"))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}; not an index file"
        )));
    }
    let mut fields = [0u32; 6];
    for (slot, name) in fields.iter_mut().zip([
        "target_card",
        "candidate_card",
        "dim",
        "variant",
        "entry count",
        "leaves",
    ]) {
        *slot = r.read_u32::<LittleEndian>().map_err(|e| truncated(e, name))?;
    }
    let [n, k, d, variant, entries, leaves] = fields.map(|x| x as usize);
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::Format(format!("degenerate shape ({n}, {k}, {d})")));
    }
    let shape = Shape::new(n, k, d);
    let row_len = n
        .checked_mul(k)
        .and_then(|x| x.checked_mul(d))
        .filter(|&x| x <= u32::MAX as usize)
        .ok_or_else(|| Error::Format(format!("implausible shape ({n}, {k}, {d})")))?;
    if entries == 0 {
        return Err(Error::Format("index file has no entries".into()));
    }

    let centroids = match variant {
        0 => {
            if leaves != 0 {
                return Err(Error::Format(format!(
                    "flat index claims {leaves} leaves"
                )));
            }
            None
        }
        1 => {
            if leaves == 0 || leaves > entries {
                return Err(Error::Format(format!(
                    "{leaves} leaves for {entries} entries"
                )));
            }
            Some(read_f32s(&mut r, leaves * row_len, "centroids")?)
        }
        other => return Err(Error::Format(format!("unknown index variant {other}"))),
    };

    let mut ids = Vec::with_capacity(entries);
    let mut data = Vec::with_capacity(entries * row_len);
    let mut row = vec![0.0f32; row_len];
    for e in 0..entries {
        let id = r
            .read_u64::<LittleEndian>()
            .map_err(|e| truncated(e, "set id"))?;
        r.read_f32_into::<LittleEndian>(&mut row)
            .map_err(|err| truncated(err, &format!("entry {e}")))?;
        ids.push(id);
        data.extend_from_slice(&row);
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::Format(
                "trailing bytes after the last entry".into(),
            ))
        }
        Err(e) => return Err(e.into()),
    }
    {
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(*id) {
                return Err(Error::Format(format!("duplicate set id {id} in index")));
            }
        }
    }
    Ok(MipsIndex::from_stored(shape, ids, data, centroids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::{LongKind, LongVector};
    use crate::mips::IvfParams;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::fs;

    fn random_index(ivf: bool) -> MipsIndex {
        let shape = Shape::new(2, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let entries: Vec<_> = (0..40u64)
            .map(|i| {
                let data: Vec<f32> =
                    (0..shape.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
                (i * 17, LongVector::from_parts(shape, LongKind::Candidate, data))
            })
            .collect();
        if ivf {
            let params = IvfParams {
                leaves: 5,
                probes: 5,
                kmeans_iters: 6,
                seed: 1,
            };
            MipsIndex::build_ivf(entries, &params).unwrap()
        } else {
            MipsIndex::build_flat(entries).unwrap()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for ivf in [false, true] {
            let dir = tempfile::tempdir().unwrap();
            let first = dir.path().join("a.vslv");
            let second = dir.path().join("b.vslv");
            let idx = random_index(ivf);
            idx.save(&first).unwrap();
            let loaded = MipsIndex::load(&first).unwrap();
            assert_eq!(idx, loaded);
            loaded.save(&second).unwrap();
            assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
        }
    }

    #[test]
    fn loaded_index_searches_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ivf.vslv");
        let idx = random_index(true);
        idx.save(&path).unwrap();
        let loaded = MipsIndex::load(&path).unwrap();
        let shape = idx.shape();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let q = LongVector::from_parts(
                shape,
                LongKind::Target,
                (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            );
            for probes in [1, 3, 5] {
                assert_eq!(
                    idx.search(&q, 6, probes).unwrap(),
                    loaded.search(&q, 6, probes).unwrap()
                );
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.vslv");
        fs::write(&path, b"NOTANINDEX").unwrap();
        assert!(matches!(MipsIndex::load(&path), Err(Error::Format(_))));

        let good = dir.path().join("good.vslv");
        random_index(false).save(&good).unwrap();
        let bytes = fs::read(&good).unwrap();
        let cut = dir.path().join("cut.vslv");
        fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(MipsIndex::load(&cut), Err(Error::Format(_))));

        let extended = dir.path().join("long.vslv");
        let mut padded = bytes;
        padded.push(0);
        fs::write(&extended, &padded).unwrap();
        assert!(matches!(MipsIndex::load(&extended), Err(Error::Format(_))));
    }
}
