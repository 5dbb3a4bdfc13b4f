//! CSV and compact binary encodings of weighted measures.
//!
//! CSV: header `x0,..,x{d-1},weight`, one atom per row.
//!
//! Binary snapshot (little endian):
//! `b"SPWE"`, `u32` version (1), `u32` scalar width in bytes (4 or 8),
//! `u32` dim, `u64` atom count, then all atom coordinates row-major, then
//! all weights.

use std::io::{BufRead, Read, Write};

use crate::error::{Result, SpocError};
use crate::measures::WeightedEmpirical;
use crate::real::Real;

const MAGIC: &[u8; 4] = b"SPWE";
const VERSION: u32 = 1;

pub fn write_csv<T: Real, W: Write>(mu: &WeightedEmpirical<T>, mut out: W) -> Result<()> {
    let header: Vec<String> = (0..mu.dim())
        .map(|k| format!("x{k}"))
        .chain(std::iter::once("weight".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (x, w) in mu.iter() {
        for v in x {
            write!(out, "{},", v.as_f64())?;
        }
        writeln!(out, "{}", w.as_f64())?;
    }
    Ok(())
}

pub fn read_csv<T: Real, R: BufRead>(input: R) -> Result<WeightedEmpirical<T>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| SpocError::Config("empty measure CSV".into()))??;
    let cols = header.split(',').count();
    if cols < 2 || !header.ends_with("weight") {
        return Err(SpocError::Config(format!("bad measure CSV header: {header}")));
    }
    let dim = cols - 1;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SpocError::Config(format!("measure CSV row {}: {e}", row + 2)))?;
        if vals.len() != cols {
            return Err(SpocError::Config(format!(
                "measure CSV row {} has {} columns, expected {cols}",
                row + 2,
                vals.len()
            )));
        }
        atoms.extend(vals[..dim].iter().map(|&v| T::of(v)));
        weights.push(T::of(vals[dim]));
    }
    WeightedEmpirical::new(dim, atoms, weights)
}

pub fn encode_snapshot<T: Real>(mu: &WeightedEmpirical<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + (mu.atoms().len() + mu.len()) * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
    out.extend_from_slice(&(mu.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(mu.len() as u64).to_le_bytes());
    for &a in mu.atoms() {
        a.write_le(&mut out);
    }
    for w in mu.weights() {
        w.write_le(&mut out);
    }
    out
}

pub fn decode_snapshot<T: Real>(bytes: &[u8]) -> Result<WeightedEmpirical<T>> {
    let bad = |m: &str| SpocError::Config(format!("bad measure snapshot: {m}"));
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(bad("missing magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    if u32_at(8) as usize != T::BYTES {
        return Err(bad("scalar width does not match the requested type"));
    }
    let dim = u32_at(12) as usize;
    let n = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let need = 24 + (n * dim + n) * T::BYTES;
    if bytes.len() != need {
        return Err(bad("length does not match header"));
    }
    let body = &bytes[24..];
    let read = |k: usize| T::from_le_slice(&body[k * T::BYTES..]);
    let atoms = (0..n * dim).map(read).collect();
    let weights = (n * dim..n * dim + n).map(read).collect();
    WeightedEmpirical::new(dim, atoms, weights)
}

pub fn write_snapshot<T: Real, W: Write>(mu: &WeightedEmpirical<T>, mut out: W) -> Result<()> {
    out.write_all(&encode_snapshot(mu))?;
    Ok(())
}

pub fn read_snapshot<T: Real, R: Read>(mut input: R) -> Result<WeightedEmpirical<T>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    decode_snapshot(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn snapshot_round_trip(
            pts in proptest::collection::vec(-1e6f64..1e6, 3..60),
            ws in proptest::collection::vec(0.01f64..10.0, 20),
        ) {
            let n = (pts.len() / 3).min(ws.len());
            let mu = WeightedEmpirical::new(3, pts[..3 * n].to_vec(), ws[..n].to_vec()).unwrap();
            let back: WeightedEmpirical<f64> = decode_snapshot(&encode_snapshot(&mu)).unwrap();
            prop_assert_eq!(back.atoms(), mu.atoms());
            for (a, b) in back.weights().iter().zip(mu.weights()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn csv_round_trip(pts in proptest::collection::vec(-1e3f64..1e3, 1..30)) {
            let mu = WeightedEmpirical::uniform(1, pts).unwrap();
            let mut buf = Vec::new();
            write_csv(&mu, &mut buf).unwrap();
            let back: WeightedEmpirical<f64> = read_csv(&buf[..]).unwrap();
            prop_assert_eq!(back.atoms(), mu.atoms());
        }
    }

    #[test]
    fn snapshot_rejects_wrong_width() {
        let mu = WeightedEmpirical::<f64>::dirac(&[1.0]).unwrap();
        let bytes = encode_snapshot(&mu);
        assert!(decode_snapshot::<f32>(&bytes).is_err());
        assert!(decode_snapshot::<f64>(&bytes[..10]).is_err());
    }

    #[test]
    fn csv_header() {
        let mu = WeightedEmpirical::<f64>::new(2, vec![1.0, 2.0], vec![1.0]).unwrap();
        let mut buf = Vec::new();
        write_csv(&mu, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x0,x1,weight\n1,2,1\n");
    }
}
