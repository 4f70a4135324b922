//! `FVS1` binary feature store.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 0..4    b"FVS1"
//! 4..8    u32 dim
//! 8..16   u64 count
//! then `count` records:
//!         u16 id byte length, id UTF-8 bytes, dim × f32 (IEEE-754)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const MAGIC: &[u8; 4] = b"FVS1";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureStoreHeader {
    pub dim: u32,
    pub count: u64,
}

/// Serializes ids and rows to any writer; returns the number of bytes written.
pub fn write_to<W: Write>(mut w: W, ids: &[String], matrix: &FeatureMatrix) -> Result<u64> {
    let io = |e| Error::io("<feature store>", e);
    if ids.len() != matrix.rows() {
        return Err(Error::Dimension(format!(
            "{} ids but {} matrix rows",
            ids.len(),
            matrix.rows()
        )));
    }
    let dim = u32::try_from(matrix.dim())
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Dimension(format!("unsupported dimension {}", matrix.dim())))?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&dim.to_le_bytes()).map_err(io)?;
    w.write_all(&(ids.len() as u64).to_le_bytes()).map_err(io)?;
    let mut written = HEADER_LEN as u64;
    let mut buf = Vec::with_capacity(matrix.dim() * 4);
    for (id, row) in ids.iter().zip(matrix.iter_rows()) {
        let len = u16::try_from(id.len())
            .map_err(|_| Error::Validation(format!("id longer than 65535 bytes: {}…", id.chars().take(32).collect::<String>())))?;
        w.write_all(&len.to_le_bytes()).map_err(io)?;
        w.write_all(id.as_bytes()).map_err(io)?;
        buf.clear();
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
        written += 2 + id.len() as u64 + buf.len() as u64;
    }
    w.flush().map_err(io)?;
    Ok(written)
}

pub fn to_bytes(ids: &[String], matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_to(&mut out, ids, matrix)?;
    Ok(out)
}

pub fn feature_store_write(path: impl AsRef<Path>, ids: &[String], matrix: &FeatureMatrix) -> Result<u64> {
    let path = path.as_ref();
    // check before creating the file so a bad call leaves nothing behind
    if ids.len() != matrix.rows() {
        return Err(Error::Dimension(format!(
            "{} ids but {} matrix rows",
            ids.len(),
            matrix.rows()
        )));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(BufWriter::new(f), ids, matrix).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_header<R: Read>(mut r: R) -> Result<FeatureStoreHeader> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file shorter than the 16-byte header".into()))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"FVS1\"",
            String::from_utf8_lossy(&header[0..4])
        )));
    }
    let dim = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
    if dim == 0 {
        return Err(Error::Format("dimension must be positive".into()));
    }
    Ok(FeatureStoreHeader { dim, count })
}

pub fn read_from<R: Read>(mut r: R) -> Result<(Vec<String>, FeatureMatrix)> {
    let header = read_header(&mut r)?;
    let dim = header.dim as usize;
    let corrupt = |record: u64, message: &str| Error::Corruption {
        record,
        message: message.to_string(),
    };
    // `count` comes from the file, so don't trust it for preallocation
    let cap = usize::try_from(header.count).unwrap_or(usize::MAX).min(1 << 16);
    let mut ids = Vec::with_capacity(cap);
    let mut values = Vec::with_capacity(cap.saturating_mul(dim).min(1 << 24));
    let mut row = vec![0u8; dim * 4];
    for record in 0..header.count {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)
            .map_err(|_| corrupt(record, "record missing or truncated in id length"))?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut id)
            .map_err(|_| corrupt(record, "truncated id"))?;
        let id = String::from_utf8(id).map_err(|_| corrupt(record, "id is not UTF-8"))?;
        r.read_exact(&mut row)
            .map_err(|_| corrupt(record, "truncated vector"))?;
        values.extend(
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
        ids.push(id);
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => return Err(corrupt(header.count, "trailing bytes after the last record")),
        Err(e) => return Err(Error::io("<feature store>", e)),
    }
    Ok((ids, FeatureMatrix::from_flat(dim, values)?))
}

pub fn feature_store_read(path: impl AsRef<Path>) -> Result<(Vec<String>, FeatureMatrix)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img-{i}")).collect()
    }

    #[test]
    fn header_echoes_dim_and_count() {
        let m = FeatureMatrix::from_flat(4096, vec![0.5; 2 * 4096]).unwrap();
        let bytes = to_bytes(&ids(2), &m).unwrap();
        let h = read_header(&bytes[..]).unwrap();
        assert_eq!(h, FeatureStoreHeader { dim: 4096, count: 2 });
        assert_eq!(&bytes[..4], b"FVS1");
    }

    #[test]
    fn empty_store_is_valid() {
        let m = FeatureMatrix::new(8);
        let bytes = to_bytes(&[], &m).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        let (i, back) = read_from(&bytes[..]).unwrap();
        assert!(i.is_empty());
        assert_eq!(back.rows(), 0);
        assert_eq!(back.dim(), 8);
    }

    #[test]
    fn id_count_mismatch_is_dimension_error() {
        let m = FeatureMatrix::from_flat(4, vec![0.0; 12]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fvs");
        assert!(matches!(
            feature_store_write(&path, &ids(2), &m),
            Err(Error::Dimension(_))
        ));
        assert!(!path.exists());
    }

    #[test]
    fn exact_byte_layout() {
        let m = FeatureMatrix::from_flat(2, vec![1.0, -2.5]).unwrap();
        let bytes = to_bytes(&["ab".to_string()], &m).unwrap();
        let mut expected = b"FVS1".to_vec();
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&2u16.to_le_bytes());
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn wrong_magic() {
        let m = FeatureMatrix::from_flat(2, vec![1.0, 2.0]).unwrap();
        let mut bytes = to_bytes(&ids(1), &m).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_from(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn short_file_reports_first_missing_record() {
        let m = FeatureMatrix::from_flat(3, vec![1.0; 9]).unwrap();
        let mut bytes = to_bytes(&ids(3), &m).unwrap();
        bytes[8..16].copy_from_slice(&5u64.to_le_bytes());
        match read_from(&bytes[..]) {
            Err(Error::Corruption { record, .. }) => assert_eq!(record, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_vector_is_corruption() {
        let m = FeatureMatrix::from_flat(3, vec![1.0; 6]).unwrap();
        let bytes = to_bytes(&ids(2), &m).unwrap();
        match read_from(&bytes[..bytes.len() - 1]) {
            Err(Error::Corruption { record, .. }) => assert_eq!(record, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dim in 1usize..40,
            bits in proptest::collection::vec(any::<u32>(), 0..400),
        ) {
            let rows = bits.len() / dim;
            let values: Vec<f32> = bits[..rows * dim].iter().map(|&b| f32::from_bits(b)).collect();
            let m = FeatureMatrix::from_flat(dim, values).unwrap();
            let names = ids(rows);
            let bytes = to_bytes(&names, &m).unwrap();
            let (back_ids, back) = read_from(&bytes[..]).unwrap();
            prop_assert_eq!(&back_ids, &names);
            let a: Vec<u32> = m.as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.as_slice().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(to_bytes(&back_ids, &back).unwrap(), bytes);
        }
    }
}
