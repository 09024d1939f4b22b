//! Minimal Netpbm support: PGM (P2 ASCII, P5 binary) and PPM (P6 binary).

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PnmKind {
    /// ASCII graymap.
    P2,
    /// Binary graymap.
    P5,
    /// Binary pixmap.
    P6,
}

impl PnmKind {
    pub fn channels(self) -> usize {
        match self {
            PnmKind::P2 | PnmKind::P5 => 1,
            PnmKind::P6 => 3,
        }
    }
}

/// Decoded image, samples interleaved per pixel in row-major order from the top row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub kind: PnmKind,
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl PnmImage {
    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    /// Channel `c` as a row-major plane scaled to [0, 1].
    pub fn plane(&self, c: usize) -> Vec<f64> {
        let ch = self.channels();
        let m = self.maxval as f64;
        (0..self.width * self.height)
            .map(|i| self.samples[i * ch + c] as f64 / m)
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::UnreadableImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        decode(&bytes).map_err(|reason| Error::UnreadableImage {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, encode(self))?;
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format!("expected a number at byte {start}"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<PnmImage, String> {
    if bytes.len() < 2 {
        return Err("file too short".into());
    }
    let kind = match &bytes[..2] {
        b"P2" => PnmKind::P2,
        b"P5" => PnmKind::P5,
        b"P6" => PnmKind::P6,
        other => return Err(format!("unsupported magic {:?}", String::from_utf8_lossy(other))),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if width == 0 || height == 0 {
        return Err("empty image".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid maxval {maxval}"));
    }
    let n = width * height * kind.channels();
    let samples = match kind {
        PnmKind::P2 => (0..n)
            .map(|_| cur.number().map(|v| v.min(maxval) as u16))
            .collect::<Result<Vec<_>, _>>()?,
        PnmKind::P5 | PnmKind::P6 => {
            // Exactly one whitespace byte separates the header from the raster.
            let start = cur.pos + 1;
            let wide = maxval > 255;
            let need = n * if wide { 2 } else { 1 };
            if bytes.len() < start + need {
                return Err("truncated raster".into());
            }
            let data = &bytes[start..start + need];
            if wide {
                data.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            } else {
                data.iter().map(|&b| b as u16).collect()
            }
        }
    };
    Ok(PnmImage {
        kind,
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode(img: &PnmImage) -> Vec<u8> {
    let magic = match img.kind {
        PnmKind::P2 => "P2",
        PnmKind::P5 => "P5",
        PnmKind::P6 => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    match img.kind {
        PnmKind::P2 => {
            for row in img.samples.chunks(img.width) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PnmKind::P5 | PnmKind::P6 => {
            if img.maxval > 255 {
                for v in &img.samples {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            } else {
                out.extend(img.samples.iter().map(|&v| v as u8));
            }
        }
    }
    out
}

/// Writes an 8-bit graymap (binary P5 or ASCII P2).
pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u16], binary: bool) -> Result<()> {
    PnmImage {
        kind: if binary { PnmKind::P5 } else { PnmKind::P2 },
        width,
        height,
        maxval: 255,
        samples: gray.to_vec(),
    }
    .write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_with_comments() {
        let src = b"P2\n# a comment\n3 2\n# another\n255\n0 10 20\n30 40 255\n";
        let img = decode(src).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (3, 2, 255));
        assert_eq!(img.samples, vec![0, 10, 20, 30, 40, 255]);
        assert_eq!(img.plane(0)[5], 1.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"P3\n1 1\n255\n0 0 0\n").is_err());
        assert!(decode(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode(b"P5\n0 4\n255\n").is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(
            kind in prop_oneof![Just(PnmKind::P2), Just(PnmKind::P5), Just(PnmKind::P6)],
            w in 1usize..6, h in 1usize..6, seed in any::<u64>()
        ) {
            let n = w * h * kind.channels();
            let samples: Vec<u16> = (0..n as u64).map(|i| ((seed.wrapping_mul(i + 7) >> 13) % 256) as u16).collect();
            let img = PnmImage { kind, width: w, height: h, maxval: 255, samples };
            prop_assert_eq!(decode(&encode(&img)).unwrap(), img);
        }
    }
}
