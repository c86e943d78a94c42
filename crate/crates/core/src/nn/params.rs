//! Named-parameter traversal and the `PLVW` weight dump format.
//!
//! A dump is the 4-byte magic `PLVW` followed by one record per parameter
//! tensor, in traversal order. Every integer is little-endian `u32`:
//!
//! ```text
//! name_len  name[name_len]  rank  dims[rank]  data[prod(dims)] as f32
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub type ParamVisitor<'a> = dyn FnMut(&str, &[usize], &[f64]) + 'a;
pub type ParamVisitorMut<'a> = dyn FnMut(&str, &[usize], &mut [f64]) + 'a;

/// Anything that owns named parameter tensors.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>);
    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>);

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, data| n += data.len());
        n
    }
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PLVW";

/// Serializes every parameter of `net` (as `f32`).
pub fn dump_weights<P: Parameters + ?Sized>(net: &P, prefix: &str) -> Vec<u8> {
    let mut out = WEIGHTS_MAGIC.to_vec();
    net.visit(prefix, &mut |name, dims, data| {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    out
}

struct Record {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let end = *pos + 4;
    let chunk = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::Format("truncated PLVW record".into()))?;
    *pos = end;
    Ok(u32::from_le_bytes(chunk.try_into().expect("4-byte slice")))
}

fn parse_records(bytes: &[u8]) -> Result<Vec<(String, Record)>> {
    if bytes.get(..4) != Some(WEIGHTS_MAGIC.as_slice()) {
        return Err(Error::Format("missing PLVW magic".into()));
    }
    let mut pos = 4;
    let mut records = Vec::new();
    while pos < bytes.len() {
        let len = read_u32(bytes, &mut pos)? as usize;
        let name = bytes
            .get(pos..pos + len)
            .ok_or_else(|| Error::Format("truncated PLVW name".into()))?;
        let name = String::from_utf8(name.to_vec())
            .map_err(|_| Error::Format("PLVW name is not UTF-8".into()))?;
        pos += len;
        let rank = read_u32(bytes, &mut pos)? as usize;
        let dims = (0..rank).map(|_| read_u32(bytes, &mut pos).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = bytes
            .get(pos..pos + 4 * count)
            .ok_or_else(|| Error::Format(format!("truncated PLVW data for {name}")))?;
        pos += 4 * count;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect();
        records.push((name, Record { dims, data }));
    }
    Ok(records)
}

/// Overwrites the parameters of `net` from a dump. Every parameter must be
/// present with a matching shape, and every record must be consumed.
pub fn load_weights<P: Parameters + ?Sized>(net: &mut P, prefix: &str, bytes: &[u8]) -> Result<()> {
    let mut records: HashMap<String, Record> = HashMap::new();
    for (name, rec) in parse_records(bytes)? {
        if records.insert(name.clone(), rec).is_some() {
            return Err(Error::Structure(format!("duplicate PLVW record {name}")));
        }
    }
    let mut failure = None;
    net.visit_mut(prefix, &mut |name, dims, data| {
        if failure.is_some() {
            return;
        }
        match records.remove(name) {
            Some(rec) if rec.dims == dims => data.copy_from_slice(&rec.data),
            Some(rec) => {
                failure = Some(Error::Structure(format!(
                    "parameter {name} has shape {dims:?}, dump has {:?}",
                    rec.dims
                )))
            }
            None => failure = Some(Error::Structure(format!("dump lacks parameter {name}"))),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::Structure(format!("dump has unknown parameter {extra}")));
    }
    Ok(())
}

pub fn write_weights<P: Parameters + ?Sized>(net: &P, prefix: &str, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &dump_weights(net, prefix))
}

pub fn read_weights<P: Parameters + ?Sized>(net: &mut P, prefix: &str, path: &Path) -> Result<()> {
    load_weights(net, prefix, &std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::{Conv2D, Linear};

    struct Pair(Conv2D, Linear);

    impl Parameters for Pair {
        fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
            self.0.visit(&format!("{prefix}.conv"), f);
            self.1.visit(&format!("{prefix}.fc"), f);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
            self.0.visit_mut(&format!("{prefix}.conv"), f);
            self.1.visit_mut(&format!("{prefix}.fc"), f);
        }
    }

    #[test]
    fn layout_and_round_trip() {
        let net = Pair(Conv2D::seeded(1, "c", 2, 3, 1), Linear::seeded(1, "l", 3, 2));
        let bytes = dump_weights(&net, "net");
        assert_eq!(&bytes[..4], b"PLVW");
        // First record: "net.conv.weight", rank 4, dims 3,2,3,3.
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 15);
        assert_eq!(&bytes[8..23], b"net.conv.weight");
        assert_eq!(u32::from_le_bytes(bytes[23..27].try_into().unwrap()), 4);
        let expected_len = 4 + [(15, 4, 54), (13, 1, 3), (13, 2, 6), (11, 1, 2)]
            .iter()
            .map(|&(n, r, d)| 4 + n + 4 + 4 * r + 4 * d)
            .sum::<usize>();
        assert_eq!(bytes.len(), expected_len);

        let mut other = Pair(Conv2D::zeroed(2, 3, 1), Linear::seeded(9, "x", 3, 2));
        load_weights(&mut other, "net", &bytes).unwrap();
        let max_err = net
            .0
            .weight()
            .iter()
            .zip(other.0.weight())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-7);
        assert_eq!(dump_weights(&other, "net"), bytes);
    }

    #[test]
    fn rejects_mismatches() {
        let net = Pair(Conv2D::seeded(1, "c", 2, 3, 1), Linear::seeded(1, "l", 3, 2));
        let bytes = dump_weights(&net, "net");
        let mut wrong = Pair(Conv2D::zeroed(3, 3, 1), Linear::seeded(1, "l", 3, 2));
        assert!(matches!(load_weights(&mut wrong, "net", &bytes), Err(Error::Structure(_))));
        let mut renamed = Pair(Conv2D::zeroed(2, 3, 1), Linear::seeded(1, "l", 3, 2));
        assert!(load_weights(&mut renamed, "other", &bytes).is_err());
        assert!(matches!(load_weights(&mut renamed, "net", &bytes[..bytes.len() - 2]), Err(Error::Format(_))));
        assert!(matches!(load_weights(&mut renamed, "net", b"XXXX"), Err(Error::Format(_))));
    }
}
