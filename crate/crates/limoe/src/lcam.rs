//! Camera class image plus superpixel map (`LCAM`).
//!
//! Layout, little-endian: `b"LCAM"`, `u32` version (1), `u32` width,
//! `u32` height, `u32` tile size, then per pixel in row-major order
//! `i32 class, f32 depth, u32 superpixel`. Depth is `+inf` where no surface was hit.

use std::fs;
use std::path::Path;

use limoe_core::datagen::{ClassImage, SuperpixelMap};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCAM";
pub const VERSION: u32 = 1;
const HEADER: usize = 20;
const RECORD: usize = 12;

pub fn encode(image: &ClassImage, superpixels: &SuperpixelMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + image.class_id.len() * RECORD);
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        image.width as u32,
        image.height as u32,
        superpixels.tile as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..image.class_id.len() {
        out.extend_from_slice(&image.class_id[i].to_le_bytes());
        out.extend_from_slice(&(image.depth[i] as f32).to_le_bytes());
        out.extend_from_slice(&superpixels.ids[i].to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(ClassImage, SuperpixelMap)> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::format("not an LCAM file"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if word(4) != VERSION {
        return Err(Error::format(format!("unsupported LCAM version {}", word(4))));
    }
    let (w, h, tile) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let body = &bytes[HEADER..];
    if w.checked_mul(h).and_then(|n| n.checked_mul(RECORD)) != Some(body.len()) {
        return Err(Error::format("LCAM body size does not match its header"));
    }
    let mut class_id = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut ids = Vec::with_capacity(w * h);
    for r in body.chunks_exact(RECORD) {
        class_id.push(i32::from_le_bytes(r[0..4].try_into().expect("4 bytes")));
        depth.push(f64::from(f32::from_le_bytes(r[4..8].try_into().expect("4 bytes"))));
        ids.push(u32::from_le_bytes(r[8..12].try_into().expect("4 bytes")));
    }
    let count = ids.iter().max().map_or(0, |&m| m as usize + 1);
    let mut class_of: Vec<Option<i32>> = vec![None; count];
    for (&id, &c) in ids.iter().zip(&class_id) {
        match class_of[id as usize] {
            None => class_of[id as usize] = Some(c),
            Some(prev) if prev != c => {
                return Err(Error::format(format!("superpixel {id} mixes classes {prev} and {c}")))
            }
            Some(_) => {}
        }
    }
    let class_of = class_of
        .into_iter()
        .enumerate()
        .map(|(id, c)| c.ok_or_else(|| Error::format(format!("superpixel ids are not dense: {id} unused"))))
        .collect::<Result<Vec<_>>>()?;
    let image = ClassImage {
        width: w,
        height: h,
        class_id,
        depth,
    };
    let superpixels = SuperpixelMap {
        width: w,
        height: h,
        tile,
        ids,
        class_of,
    };
    Ok((image, superpixels))
}

pub fn write(path: &Path, image: &ClassImage, superpixels: &SuperpixelMap) -> Result<()> {
    fs::write(path, encode(image, superpixels)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(ClassImage, SuperpixelMap)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
