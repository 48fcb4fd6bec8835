//! Binary PGM (P5) images with maxval 255.

use std::path::Path;

use wordcrf_core::synth::GrayImage;

use crate::Error;

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

fn bad(msg: &str) -> String {
    format!("invalid PGM: {msg}")
}

/// Parses a P5 image. Comments are allowed between header tokens; only
/// 8-bit images (maxval at most 255) are accepted.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0;
    let mut token = || -> Result<&[u8], String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("header ends early"));
        }
        Ok(&bytes[start..pos])
    };
    if token()? != b"P5" {
        return Err(bad("not a binary graymap"));
    }
    let mut number = |what: &str| -> Result<usize, String> {
        let t = token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    let raster = pos + 1;
    let len = width * height;
    if bytes.len() < raster + len {
        return Err(bad("raster is truncated"));
    }
    GrayImage::new(width, height, bytes[raster..raster + len].to_vec()).ok_or_else(|| bad("size"))
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), Error> {
    std::fs::write(path, encode_pgm(img)).map_err(Error::io(path))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, Error> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode_pgm(&bytes).map_err(|msg| Error::Parse {
        path: path.into(),
        line: 0,
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let img = GrayImage::new(3, 2, vec![0, 10, 255, 7, 8, 9]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn header_comments() {
        let bytes = b"P5 # made by hand\n2 # width\n1\n255\n\x01\x02";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(
            (img.width, img.height, img.pixels.clone()),
            (2, 1, vec![1, 2])
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n1").is_err());
    }
}
