//! MDS binary dataset files.
//!
//! Little-endian layout: magic `MDS1`, then `u32 N`, `u32 m`, `u32 n`,
//! followed by `N` records of `i32 label` and `m*n` row-major `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MDS_MAGIC: &[u8; 4] = b"MDS1";
pub const MDS_HEADER_LEN: usize = 16;

pub fn write_mds<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let (m, n) = dataset.shape();
    let dims = [dataset.len(), m, n];
    let mut buf = Vec::with_capacity(MDS_HEADER_LEN + dataset.len() * (4 + m * n * 8));
    buf.extend_from_slice(MDS_MAGIC);
    for d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidParameter(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for (x, label) in dataset.iter() {
        buf.extend_from_slice(&label.to_le_bytes());
        for v in x.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_mds(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_mds(dataset, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn read_mds(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 || &bytes[..4] != MDS_MAGIC {
        return Err(Error::format(0, "bad magic, expected `MDS1`"));
    }
    if bytes.len() < MDS_HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated header: {} of {MDS_HEADER_LEN} bytes",
                bytes.len()
            ),
        ));
    }
    let count = read_u32(bytes, 4) as usize;
    let m = read_u32(bytes, 8) as usize;
    let n = read_u32(bytes, 12) as usize;
    if count == 0 {
        return Err(Error::format(4, "sample count is zero"));
    }
    if m == 0 || n == 0 {
        return Err(Error::format(8, format!("shape {m}x{n} must be positive")));
    }
    let record = m
        .checked_mul(n)
        .and_then(|e| e.checked_mul(8))
        .and_then(|b| b.checked_add(4))
        .ok_or_else(|| Error::format(8, format!("shape {m}x{n} overflows")))?;
    let total = record
        .checked_mul(count)
        .and_then(|p| p.checked_add(MDS_HEADER_LEN))
        .ok_or_else(|| Error::format(4, format!("{count} records of {record} bytes overflow")))?;
    if bytes.len() < total {
        let complete = (bytes.len() - MDS_HEADER_LEN) / record;
        return Err(Error::format(
            (MDS_HEADER_LEN + complete * record) as u64,
            format!(
                "truncated payload: record {complete} of {count} incomplete ({} of {total} bytes)",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > total {
        return Err(Error::format(
            total as u64,
            format!("{} trailing bytes after last record", bytes.len() - total),
        ));
    }
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for r in 0..count {
        let base = MDS_HEADER_LEN + r * record;
        labels.push(i32::from_le_bytes(
            bytes[base..base + 4].try_into().expect("4 bytes"),
        ));
        let mut values = Vec::with_capacity(m * n);
        for e in 0..m * n {
            let off = base + 4 + e * 8;
            let v = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(Error::format(off as u64, format!("non-finite value {v}")));
            }
            values.push(v);
        }
        samples.push(Matrix::new(m, n, values)?);
    }
    Dataset::new(samples, labels)
}

pub fn load_mds(path: impl AsRef<Path>) -> Result<Dataset> {
    read_mds(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Dataset {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[[-0.1, 1e-300, 7.5], [0.0, -2.0, 1.0 / 3.0]]).unwrap();
        Dataset::new(vec![a, b], vec![1, -1]).unwrap()
    }

    #[test]
    fn layout_size() {
        let mut buf = Vec::new();
        write_mds(&sample(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MDS1");
        assert_eq!(buf.len() - MDS_HEADER_LEN, 2 * (4 + 2 * 3 * 8));
        assert_eq!(read_u32(&buf, 4), 2);
        assert_eq!(read_u32(&buf, 8), 2);
        assert_eq!(read_u32(&buf, 12), 3);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let d = sample();
        let mut buf = Vec::new();
        write_mds(&d, &mut buf).unwrap();
        let back = read_mds(&buf).unwrap();
        assert_eq!(back.labels(), d.labels());
        for (x, y) in back.samples().iter().zip(d.samples()) {
            for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let mut again = Vec::new();
        write_mds(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupted_magic_reports_offset_zero() {
        let mut buf = Vec::new();
        write_mds(&sample(), &mut buf).unwrap();
        buf[0] = b'X';
        match read_mds(&buf) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload() {
        let mut buf = Vec::new();
        write_mds(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        match read_mds(&buf) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, (16 + 52) as u64),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_mds(&buf[..10]), Err(Error::Format { .. })));
    }

    #[test]
    fn shape_overflow_is_rejected() {
        let mut buf = Vec::from(*MDS_MAGIC);
        for d in [u32::MAX, u32::MAX, u32::MAX] {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        assert!(matches!(read_mds(&buf), Err(Error::Format { .. })));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut buf = Vec::new();
        write_mds(&sample(), &mut buf).unwrap();
        buf.push(0);
        assert!(matches!(read_mds(&buf), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn arbitrary_datasets_roundtrip(
            (m, n, values, labels) in (1usize..4, 1usize..4, 1usize..5).prop_flat_map(|(m, n, count)| (
                Just(m),
                Just(n),
                proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::SUBNORMAL, m * n * count),
                proptest::collection::vec(any::<i32>(), count),
            ))
        ) {
            let samples = values
                .chunks(m * n)
                .map(|c| Matrix::new(m, n, c.to_vec()).unwrap())
                .collect();
            let d = Dataset::new(samples, labels).unwrap();
            let mut buf = Vec::new();
            write_mds(&d, &mut buf).unwrap();
            let back = read_mds(&buf).unwrap();
            let mut again = Vec::new();
            write_mds(&back, &mut again).unwrap();
            prop_assert_eq!(buf, again);
        }
    }
}
