//! Plain-text export: a `# m=<m> n=<n>` comment line followed by one
//! `label,x00,x01,...` row per sample (row-major values).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn write_csv<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let (m, n) = dataset.shape();
    let mut text = format!("# m={m} n={n}\n");
    for (x, label) in dataset.iter() {
        write!(text, "{label}").expect("string write");
        for v in x.as_slice() {
            write!(text, ",{v}").expect("string write");
        }
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(dataset, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("first line must be `# m=<m> n=<n>`".into()))?;
    let mut m = None;
    let mut n = None;
    for token in body.split_whitespace() {
        match token.split_once('=') {
            Some(("m", v)) => m = v.parse().ok(),
            Some(("n", v)) => n = v.parse().ok(),
            _ => {}
        }
    }
    match (m, n) {
        (Some(m), Some(n)) if m > 0 && n > 0 => Ok((m, n)),
        _ => Err(Error::Parse(format!("bad shape header `{line}`"))),
    }
}

pub fn read_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::Parse("empty csv".into()))?;
    let (m, n) = parse_header(header.trim())?;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let label: i32 = fields
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad label: {e}", lineno + 1)))?;
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: bad value `{f}`: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != m * n {
            return Err(Error::dimension(
                format!("{} values on line {}", m * n, lineno + 1),
                values.len(),
            ));
        }
        samples.push(Matrix::new(m, n, values)?);
        labels.push(label);
    }
    Dataset::new(samples, labels)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(&fs::read_to_string(path)?)
}
