//! Exact binary serialization of problems.
//!
//! MPS text rounds values to its printed precision; this codec stores the
//! f64 bit patterns, so a problem reloads exactly. Little-endian throughout,
//! with a magic tag and version byte so stale files fail loudly instead of
//! misparsing.

use crate::{Error, LinearProgram, Sense};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"GPLP";
const VERSION: u8 = 1;

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<(), Error> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<(), Error> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<(), Error> {
    put_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64, Error> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64, Error> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String, Error> {
    let len = get_u64(r)? as usize;
    if len > 1 << 24 {
        return Err(Error::Parse(format!("string length {} is implausible", len)));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(format!("bad utf-8 in string: {}", e)))
}

/// Writes the problem in the binary container format.
pub fn write_lp<W: Write>(lp: &LinearProgram, w: &mut W) -> Result<(), Error> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    put_str(w, &lp.name)?;
    let n = lp.num_cols();
    let m = lp.num_rows();
    put_u64(w, n as u64)?;
    put_u64(w, m as u64)?;
    put_f64(w, lp.objective_offset)?;
    for j in 0..n {
        put_str(w, &lp.col_names[j])?;
        put_f64(w, lp.objective[j])?;
        put_f64(w, lp.col_lower[j])?;
        put_f64(w, lp.col_upper[j])?;
    }
    for i in 0..m {
        put_str(w, &lp.row_names[i])?;
        let s: u8 = match lp.row_sense[i] {
            Sense::Le => 0,
            Sense::Eq => 1,
            Sense::Ge => 2,
        };
        w.write_all(&[s])?;
        put_f64(w, lp.rhs[i])?;
    }
    put_u64(w, lp.triplets.len() as u64)?;
    for &(r, c, v) in &lp.triplets {
        put_u64(w, r as u64)?;
        put_u64(w, c as u64)?;
        put_f64(w, v)?;
    }
    Ok(())
}

/// Reads a problem previously written by [`write_lp`].
pub fn read_lp<R: Read>(r: &mut R) -> Result<LinearProgram, Error> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a binary problem file".to_string()));
    }
    let mut ver = [0u8; 1];
    r.read_exact(&mut ver)?;
    if ver[0] != VERSION {
        return Err(Error::Parse(format!(
            "unsupported file version {} (expected {})",
            ver[0], VERSION
        )));
    }
    let name = get_str(r)?;
    let n = get_u64(r)? as usize;
    let m = get_u64(r)? as usize;
    let mut lp = LinearProgram::new(&name);
    lp.objective_offset = get_f64(r)?;
    for _ in 0..n {
        let cname = get_str(r)?;
        let obj = get_f64(r)?;
        let lo = get_f64(r)?;
        let hi = get_f64(r)?;
        lp.add_col(&cname, lo, hi, obj);
    }
    for _ in 0..m {
        let rname = get_str(r)?;
        let mut s = [0u8; 1];
        r.read_exact(&mut s)?;
        let sense = match s[0] {
            0 => Sense::Le,
            1 => Sense::Eq,
            2 => Sense::Ge,
            other => return Err(Error::Parse(format!("bad sense byte {}", other))),
        };
        let rhs = get_f64(r)?;
        lp.add_row(&rname, sense, rhs, &[]);
    }
    let nnz = get_u64(r)? as usize;
    if nnz > (1 << 32) {
        return Err(Error::Parse(format!("triplet count {} is implausible", nnz)));
    }
    lp.triplets.reserve(nnz);
    for _ in 0..nnz {
        let row = get_u64(r)? as usize;
        let col = get_u64(r)? as usize;
        let v = get_f64(r)?;
        if row >= m || col >= n {
            return Err(Error::Parse(format!(
                "triplet ({}, {}) outside {}x{}",
                row, col, m, n
            )));
        }
        lp.triplets.push((row, col, v));
    }
    lp.validate()?;
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LinearProgram {
        let mut lp = LinearProgram::new("binary sample");
        let x = lp.add_col("x", 0.0, 12.5, 0.1 + 0.2); // deliberately inexact
        let y = lp.add_col("y", f64::NEG_INFINITY, f64::INFINITY, -7.0);
        lp.objective_offset = 1.0 / 3.0;
        lp.add_row("a", Sense::Le, 30.0, &[(x, std::f64::consts::PI)]);
        lp.add_row("b", Sense::Eq, -0.0, &[(x, 1.0), (y, 1e-300)]);
        lp.add_row("c", Sense::Ge, 2.0f64.powi(-40), &[(y, 3.0)]);
        lp
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let lp = sample();
        let mut buf = Vec::new();
        write_lp(&lp, &mut buf).unwrap();
        let back = read_lp(&mut buf.as_slice()).unwrap();
        assert_eq!(lp.name, back.name);
        assert_eq!(lp.col_names, back.col_names);
        assert_eq!(lp.row_names, back.row_names);
        assert_eq!(lp.triplets, back.triplets);
        // Bit-exact, not approximately equal.
        assert_eq!(
            lp.objective_offset.to_bits(),
            back.objective_offset.to_bits()
        );
        for (a, b) in lp.objective.iter().zip(&back.objective) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in lp.rhs.iter().zip(&back.rhs) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(lp.structurally_equal(&back, 0.0));
    }

    #[test]
    fn rejects_wrong_magic() {
        let buf = b"NOPE....".to_vec();
        assert!(matches!(
            read_lp(&mut buf.as_slice()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn rejects_future_version() {
        let lp = LinearProgram::new("v");
        let mut buf = Vec::new();
        write_lp(&lp, &mut buf).unwrap();
        buf[4] = 99;
        assert!(matches!(
            read_lp(&mut buf.as_slice()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn rejects_truncated_file() {
        let lp = sample();
        let mut buf = Vec::new();
        write_lp(&lp, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_lp(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn rejects_out_of_range_triplet() {
        let mut lp = LinearProgram::new("t");
        lp.add_col("x", 0.0, 1.0, 1.0);
        lp.add_row("r", Sense::Le, 1.0, &[(0, 1.0)]);
        let mut buf = Vec::new();
        write_lp(&lp, &mut buf).unwrap();
        // Corrupt the row index of the only triplet (second-to-last u64+f64
        // block: row, col, value = last 24 bytes).
        let at = buf.len() - 24;
        buf[at..at + 8].copy_from_slice(&5u64.to_le_bytes());
        assert!(read_lp(&mut buf.as_slice()).is_err());
    }
}
