//! Binary (`LPCD`) and CSV point-cloud files.
//!
//! Binary layout, little-endian: `b"LPCD"`, `u32` version (1), `u64` point
//! count, then per point `f32 x, f32 y, f32 z, f32 intensity, u16 beam, i32 label`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use limoe_core::{Point, PointCloud};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LPCD";
pub const VERSION: u32 = 1;
const RECORD: usize = 4 * 4 + 2 + 4;
pub const CSV_HEADER: &str = "x,y,z,intensity,beam,label";

pub fn encode(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + cloud.len() * RECORD);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in &cloud.points {
        for v in [p.xyz[0], p.xyz[1], p.xyz[2], p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&p.beam.to_le_bytes());
        out.extend_from_slice(&p.label.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::format("not an LPCD file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(format!("unsupported LPCD version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    if n.checked_mul(RECORD as u64) != Some(body.len() as u64) {
        return Err(Error::format(format!(
            "LPCD header says {n} points but the body holds {} bytes",
            body.len()
        )));
    }
    let f = |b: &[u8], o: usize| f64::from(f32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes")));
    let points = body
        .chunks_exact(RECORD)
        .map(|r| Point {
            xyz: [f(r, 0), f(r, 4), f(r, 8)],
            intensity: f(r, 12),
            beam: u16::from_le_bytes([r[16], r[17]]),
            label: i32::from_le_bytes(r[18..22].try_into().expect("4 bytes")),
        })
        .collect();
    Ok(PointCloud { points })
}

pub fn write(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, encode(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Same values as the binary file would hold, as `f32`-rounded text.
pub fn write_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 48);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in &cloud.points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.xyz[0] as f32, p.xyz[1] as f32, p.xyz[2] as f32, p.intensity as f32, p.beam, p.label
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<PointCloud> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let bad = |line: usize, what: &str| Error::format(format!("{}:{line}: {what}", path.display()));
    match lines.next() {
        Some(Ok(h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(bad(1, "expected header `x,y,z,intensity,beam,label`")),
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(bad(i + 2, "expected 6 columns"));
        }
        let num = |s: &str| s.parse::<f32>().map(f64::from).map_err(|_| bad(i + 2, "bad number"));
        points.push(Point {
            xyz: [num(cols[0])?, num(cols[1])?, num(cols[2])?],
            intensity: num(cols[3])?,
            beam: cols[4].parse().map_err(|_| bad(i + 2, "bad beam"))?,
            label: cols[5].parse().map_err(|_| bad(i + 2, "bad label"))?,
        });
    }
    Ok(PointCloud { points })
}

/// Reads either format, chosen by extension (`.csv` or anything else).
pub fn read_any(path: &Path) -> Result<PointCloud> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv(path)
    } else {
        read(path)
    }
}

pub fn write_any(path: &Path, cloud: &PointCloud) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_csv(path, cloud)
    } else {
        write(path, cloud)
    }
}
