//! Binary volume and mask files.
//!
//! Volume file (`.vol`):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `"MGB1"` |
//! | 4     | format version, u32 little-endian |
//! | 12    | dims x, y, z — three u32 little-endian |
//! | 12    | spacing x, y, z in mm — three IEEE-754 binary32 little-endian |
//! | 4·N   | voxel payload, binary32 little-endian, x fastest |
//!
//! Mask file (`.msk`) replaces the spacing block with nothing and stores one
//! byte per voxel (0 or 1), same header/ordering otherwise with magic
//! `"MGM1"`. Round trips are bit-identical.

use super::IoError;
use crate::volume::{Mask, Volume};
use std::fs;
use std::path::Path;

pub const VOLUME_MAGIC: [u8; 4] = *b"MGB1";
pub const MASK_MAGIC: [u8; 4] = *b"MGM1";
pub const VOLUME_FORMAT_VERSION: u32 = 1;
pub const MASK_FORMAT_VERSION: u32 = 1;

fn push_u32(buf: &mut Vec<u8>, value: u32) {
    buf.extend_from_slice(&value.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.bytes.len() {
            return Err(IoError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, IoError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn write_volume(path: &Path, volume: &Volume) -> Result<(), IoError> {
    let dims = volume.dims();
    let mut buf = Vec::with_capacity(32 + 4 * volume.len());
    buf.extend_from_slice(&VOLUME_MAGIC);
    push_u32(&mut buf, VOLUME_FORMAT_VERSION);
    for d in dims {
        push_u32(&mut buf, u32::try_from(d).map_err(|_| {
            IoError::Malformed(format!("dimension {d} exceeds u32"))
        })?);
    }
    for s in volume.spacing() {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for v in volume.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume, IoError> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4)? != VOLUME_MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = r.u32()?;
    if version != VOLUME_FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let spacing = [r.f32()?, r.f32()?, r.f32()?];
    let len = dims[0]
        .checked_mul(dims[1])
        .and_then(|p| p.checked_mul(dims[2]))
        .ok_or_else(|| IoError::Malformed("dims product overflows".to_owned()))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(r.f32()?);
    }
    if r.pos != bytes.len() {
        return Err(IoError::Malformed("trailing bytes".to_owned()));
    }
    Ok(Volume::new(dims, spacing, data)?)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), IoError> {
    let dims = mask.dims();
    let mut buf = Vec::with_capacity(20 + mask.bits().len());
    buf.extend_from_slice(&MASK_MAGIC);
    push_u32(&mut buf, MASK_FORMAT_VERSION);
    for d in dims {
        push_u32(&mut buf, u32::try_from(d).map_err(|_| {
            IoError::Malformed(format!("dimension {d} exceeds u32"))
        })?);
    }
    buf.extend(mask.bits().iter().map(|&b| u8::from(b)));
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<Mask, IoError> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4)? != MASK_MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = r.u32()?;
    if version != MASK_FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let len = dims[0]
        .checked_mul(dims[1])
        .and_then(|p| p.checked_mul(dims[2]))
        .ok_or_else(|| IoError::Malformed("dims product overflows".to_owned()))?;
    let payload = r.take(len)?;
    if r.pos != bytes.len() {
        return Err(IoError::Malformed("trailing bytes".to_owned()));
    }
    let mut bits = Vec::with_capacity(len);
    for &b in payload {
        match b {
            0 => bits.push(false),
            1 => bits.push(true),
            other => {
                return Err(IoError::Malformed(format!("mask byte {other} is not 0 or 1")));
            }
        }
    }
    Ok(Mask::new(dims, bits)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn volume_round_trip_is_bit_identical() {
        let mut rng = SplitMix64::new(1);
        let data: Vec<f32> = (0..60).map(|_| (rng.next_f64() * 10.0 - 5.0) as f32).collect();
        let volume = Volume::new([3, 4, 5], [0.5, 1.0, 2.0], data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vol");
        write_volume(&path, &volume).unwrap();
        let restored = read_volume(&path).unwrap();
        assert_eq!(restored, volume);
        for (a, b) in restored.data().iter().zip(volume.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        // Writing again produces identical bytes.
        let first = std::fs::read(&path).unwrap();
        write_volume(&path, &restored).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn mask_round_trip() {
        let mut rng = SplitMix64::new(2);
        let bits: Vec<bool> = (0..24).map(|_| rng.next_f64() < 0.5).collect();
        let mask = Mask::new([2, 3, 4], bits).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.msk");
        write_mask(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vol");

        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_volume(&path), Err(IoError::BadMagic)));

        let volume = Volume::filled([2, 2, 2], [1.0; 3], 1.0).unwrap();
        write_volume(&path, &volume).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_volume(&path), Err(IoError::Truncated)));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        bytes.extend_from_slice(&[0; 3]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_volume(&path), Err(IoError::UnsupportedVersion(99))));
    }
}
