//! Netpbm grayscale images (`P2` ASCII and `P5` binary) and a loader for
//! directories with one subdirectory per class.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    maxval: u32,
    /// Offset of the first pixel byte (binary) or token (ASCII).
    data_start: usize,
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<(usize, String)> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' && bytes[*pos] != b'\r' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start as u64, "unexpected end of pgm header"));
    }
    Ok((
        start,
        String::from_utf8_lossy(&bytes[start..*pos]).into_owned(),
    ))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::format(0, "not a P2/P5 pgm image")),
    };
    let mut pos = 2;
    let mut number = |what: &str| -> Result<u64> {
        let (at, tok) = next_token(bytes, &mut pos)?;
        tok.parse::<u64>()
            .map_err(|_| Error::format(at as u64, format!("bad {what} `{tok}`")))
    };
    let width = number("width")? as usize;
    let height = number("height")? as usize;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, format!("image size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            2,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    // Exactly one whitespace byte separates the header from binary data.
    let data_start = pos + 1;
    Ok(Header {
        binary,
        width,
        height,
        maxval: maxval as u32,
        data_start,
    })
}

/// Decodes a PGM image into a `height x width` matrix scaled to `[0, 1]` by
/// the image's maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<Matrix> {
    let h = parse_header(bytes)?;
    let count = h.width * h.height;
    let scale = h.maxval as f64;
    let mut values = Vec::with_capacity(count);
    if h.binary {
        let wide = h.maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let data = bytes.get(h.data_start..).unwrap_or(&[]);
        if data.len() < need {
            return Err(Error::format(
                (h.data_start + data.len()) as u64,
                format!("pixel data truncated: {} of {need} bytes", data.len()),
            ));
        }
        for i in 0..count {
            let v = if wide {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
            } else {
                data[i] as u32
            };
            values.push(v.min(h.maxval) as f64 / scale);
        }
    } else {
        let mut pos = h.data_start - 1;
        for _ in 0..count {
            let (at, tok) = next_token(bytes, &mut pos)?;
            let v: u32 = tok
                .parse()
                .map_err(|_| Error::format(at as u64, format!("bad pixel `{tok}`")))?;
            if v > h.maxval {
                return Err(Error::format(
                    at as u64,
                    format!("pixel {v} exceeds maxval"),
                ));
            }
            values.push(v as f64 / scale);
        }
    }
    Matrix::new(h.height, h.width, values)
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads `root/<class>/<image>.pgm`. Class ids follow the sorted order of
/// the subdirectory names, which become the class names. Files that are not
/// PGM images are skipped with a warning; differing image sizes are an
/// error.
pub fn load_pgm_dir(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut names = Vec::new();
    for class_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let class_id = names.len() as i32;
        let mut found = 0;
        for file in sorted_entries(&class_dir)?
            .into_iter()
            .filter(|p| p.is_file())
        {
            let bytes = fs::read(&file)?;
            let image = match parse_pgm(&bytes) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping {}: {e}", file.display());
                    continue;
                }
            };
            if let Some(first) = samples.first() {
                let first: &Matrix = first;
                if first.shape() != image.shape() {
                    return Err(Error::dimension(
                        format!("{}x{} image", first.rows(), first.cols()),
                        format!("{}x{} in {}", image.rows(), image.cols(), file.display()),
                    ));
                }
            }
            samples.push(image);
            labels.push(class_id);
            found += 1;
        }
        if found == 0 {
            return Err(Error::InvalidParameter(format!(
                "class directory {} holds no pgm images",
                class_dir.display()
            )));
        }
        names.push(
            class_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no class subdirectories under {}",
            root.display()
        )));
    }
    Ok(Dataset::new(samples, labels)?.with_class_names(names))
}
