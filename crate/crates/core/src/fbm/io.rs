//! Path export and import.
//!
//! CSV: header `t,x_1,..,x_d`, one row per grid point.
//!
//! Binary column format, little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FBMP"
//! 4       4     version (u32, currently 1)
//! 8       4     N (u32)
//! 12      4     d (u32)
//! 16      8·N   t column (f64)
//! ...     8·N   x_c column (f64), c = 1..d
//! ```

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fbm::{PathLike, RawPath, TimeGrid};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"FBMP";
pub const VERSION: u32 = 1;

/// Writes a grid-valued table `t, {prefix}_1..{prefix}_d`.
pub fn write_table_csv<T: Real, W: Write>(grid: &TimeGrid<T>, dim: usize, values: &[T], prefix: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|c| format!("{prefix}_{c}")));
    w.write_record(&header)?;
    for (i, t) in grid.points().iter().enumerate() {
        let mut rec = vec![format!("{}", t.to_f64_lossy())];
        rec.extend(values[i * dim..(i + 1) * dim].iter().map(|v| format!("{}", v.to_f64_lossy())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_table_csv`]; returns the grid, `d` and the values.
pub fn read_table_csv<T: Real, R: Read>(input: R) -> Result<(TimeGrid<T>, usize, Vec<T>)> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(Error::Format("expected header `t,<name>_1,..`".into()));
    }
    let dim = headers.len() - 1;
    let mut ts = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Format(format!("row has {} fields, expected {}", rec.len(), dim + 1)));
        }
        let parse =
            |s: &str| -> Result<T> { s.trim().parse::<f64>().map(T::lit).map_err(|e| Error::Format(format!("bad number `{s}`: {e}"))) };
        ts.push(parse(&rec[0])?);
        for f in rec.iter().skip(1) {
            values.push(parse(f)?);
        }
    }
    let grid = TimeGrid::from_points(ts)?;
    Ok((grid, dim, values))
}

pub fn write_csv<T: Real, P: PathLike<T>, W: Write>(path: &P, out: W) -> Result<()> {
    write_table_csv(path.grid(), path.dim(), path.values(), "x", out)
}

pub fn read_csv<T: Real, R: Read>(input: R) -> Result<RawPath<T>> {
    let (grid, dim, values) = read_table_csv(input)?;
    RawPath::new(Arc::new(grid), dim, values)
}

pub fn write_binary<T: Real, P: PathLike<T>, W: Write>(path: &P, mut out: W) -> Result<()> {
    let n = path.grid().len();
    let d = path.dim();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(n as u32).to_le_bytes())?;
    out.write_all(&(d as u32).to_le_bytes())?;
    for t in path.grid().points() {
        out.write_all(&t.to_f64_lossy().to_le_bytes())?;
    }
    let vals = path.values();
    for c in 0..d {
        for i in 0..n {
            out.write_all(&vals[i * d + c].to_f64_lossy().to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<T: Real, R: Read>(mut input: R) -> Result<RawPath<T>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(|_| Error::Format("truncated header".into()))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected FBMP".into()));
    }
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    let mut buf = vec![0u8; 8 * n * (d + 1)];
    input.read_exact(&mut buf).map_err(|_| Error::Format("truncated body".into()))?;
    let f = |k: usize| T::lit(f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().expect("8 bytes")));
    let ts: Vec<T> = (0..n).map(f).collect();
    let mut values = vec![T::zero(); n * d];
    for c in 0..d {
        for i in 0..n {
            values[i * d + c] = f((c + 1) * n + i);
        }
    }
    RawPath::new(Arc::new(TimeGrid::from_points(ts)?), d, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{FbmSampler, ModelParams};
    use proptest::prelude::*;

    fn sample(n: usize, d: usize, seed: u64) -> RawPath<f64> {
        let p = ModelParams::new(0.4, d, 1.5, 0.0, n, seed).unwrap();
        FbmSampler::new(&p).unwrap().replica(0).to_raw()
    }

    #[test]
    fn header_is_sixteen_bytes() {
        let path = sample(4, 3, 1);
        let mut buf = Vec::new();
        write_binary(&path, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FBMP");
        assert_eq!(buf.len(), 16 + 8 * 4 * 4);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 3);
    }

    #[test]
    fn csv_header_and_rows() {
        let path = sample(5, 2, 2);
        let mut buf = Vec::new();
        write_csv(&path, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,x_2");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0,0,0"));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut buf = Vec::new();
        write_binary(&sample(4, 1, 3), &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_binary::<f64, _>(&buf[..]), Err(Error::Format(_))));
        assert!(read_binary::<f64, _>(&buf[..10]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn binary_and_csv_round_trip(n in 2usize..40, d in 1usize..4, seed in 0u64..1000) {
            let path = sample(n, d, seed);
            let mut bin = Vec::new();
            write_binary(&path, &mut bin).unwrap();
            let back: RawPath<f64> = read_binary(&bin[..]).unwrap();
            prop_assert_eq!(&back.values, &path.values);
            prop_assert_eq!(back.grid.points(), path.grid.points());

            let mut text = Vec::new();
            write_csv(&path, &mut text).unwrap();
            let back: RawPath<f64> = read_csv(&text[..]).unwrap();
            prop_assert_eq!(&back.values, &path.values);
        }
    }
}
