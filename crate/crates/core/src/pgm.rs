//! Binary PGM (P5) reading and writing, 8- and 16-bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ImageGrid, Mask};

/// Decoded P5 raster before any normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl RawPgm {
    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
        if magic != b"P5" {
            return Err(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(magic)
            ));
        }
        let width = parse_field(bytes, &mut pos, "width")?;
        let height = parse_field(bytes, &mut pos, "height")?;
        let maxval = parse_field(bytes, &mut pos, "maxval")?;
        if width == 0 || height == 0 {
            return Err("zero dimension".into());
        }
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} out of range"));
        }
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err("missing separator after maxval".into());
        }
        pos += 1;

        let n = width * height;
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        let body = &bytes[pos..];
        if body.len() < need {
            return Err(format!("raster truncated: {} of {need} bytes", body.len()));
        }
        let samples: Vec<u16> = if wide {
            body[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            body[..need].iter().map(|&b| b as u16).collect()
        };
        if let Some(v) = samples.iter().find(|&&v| v as usize > maxval) {
            return Err(format!("sample {v} exceeds maxval {maxval}"));
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            samples,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|reason| Error::MalformedPgm {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

fn parse_field(bytes: &[u8], pos: &mut usize, name: &str) -> std::result::Result<usize, String> {
    let tok = next_token(bytes, pos).ok_or_else(|| format!("missing {name}"))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad {name} {:?}", String::from_utf8_lossy(tok)))
}

/// Reads a P5 file and min-max normalizes it to `[0, 1]`.
pub fn read_image(path: &Path) -> Result<ImageGrid> {
    let raw = RawPgm::read(path)?;
    let samples: Vec<f64> = raw.samples.iter().map(|&s| s as f64).collect();
    ImageGrid::from_raw(raw.width, raw.height, &samples)
}

/// Writes an image as 16-bit P5, quantizing `[0, 1]` to `0..=65535`.
pub fn write_image(image: &ImageGrid, path: &Path) -> Result<()> {
    RawPgm {
        width: image.width(),
        height: image.height(),
        maxval: 65535,
        samples: image
            .data()
            .iter()
            .map(|&v| (v * 65535.0).round() as u16)
            .collect(),
    }
    .write(path)
}

/// Reads a P5 mask; any positive sample becomes foreground.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let raw = RawPgm::read(path)?;
    Mask::new(
        raw.width,
        raw.height,
        raw.samples.iter().map(|&s| (s > 0) as u8).collect(),
    )
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    RawPgm {
        width: mask.width(),
        height: mask.height(),
        maxval: 255,
        samples: mask.data().iter().map(|&v| v as u16 * 255).collect(),
    }
    .encode()
}

/// Writes an 8-bit P5 mask with foreground as 255.
pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    fs::write(path, encode_mask(mask)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_matches_golden_bytes() {
        let mask = Mask::from_fn(4, 4, |x, y| (x + y) % 2 == 1);
        let mut golden = b"P5\n4 4\n255\n".to_vec();
        golden.extend_from_slice(&[
            0, 255, 0, 255, //
            255, 0, 255, 0, //
            0, 255, 0, 255, //
            255, 0, 255, 0,
        ]);
        assert_eq!(encode_mask(&mask), golden);
    }

    #[test]
    fn all_zero_mask_encodes_zero_pixels() {
        let bytes = encode_mask(&Mask::zeros(3, 2));
        assert!(bytes.ends_with(&[0; 6]));
        assert_eq!(bytes.len(), b"P5\n3 2\n255\n".len() + 6);
    }

    #[test]
    fn sixteen_bit_rescales_linearly() {
        let raw = RawPgm {
            width: 3,
            height: 1,
            maxval: 65535,
            samples: vec![0, 32768, 65535],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        raw.write(&p).unwrap();
        let img = read_image(&p).unwrap();
        for (got, want) in img.data().iter().zip([0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 # w\n1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20]);
        let raw = RawPgm::decode(&bytes).unwrap();
        assert_eq!((raw.width, raw.height, raw.samples.clone()), (2, 1, vec![10, 20]));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(RawPgm::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(RawPgm::decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(RawPgm::decode(b"P5\nx 2\n255\n").is_err());
        assert!(RawPgm::decode(b"P5\n1 1\n70000\n\x00\x00").is_err());
    }

    #[test]
    fn masks_binarize_positive_samples() {
        let raw = RawPgm {
            width: 3,
            height: 1,
            maxval: 255,
            samples: vec![0, 1, 200],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        raw.write(&p).unwrap();
        assert_eq!(read_mask(&p).unwrap().data(), &[0, 1, 1]);
    }

    proptest::proptest! {
        #[test]
        fn mask_round_trip(w in 1usize..12, h in 1usize..12, bits in proptest::collection::vec(0u8..2, 144)) {
            let mask = Mask::new(w, h, bits[..w * h].to_vec()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.pgm");
            write_mask(&mask, &p).unwrap();
            proptest::prop_assert_eq!(read_mask(&p).unwrap(), mask);
        }
    }
}
