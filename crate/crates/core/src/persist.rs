//! Model files: a line-oriented text header followed by a little-endian
//! binary block.
//!
//! ```text
//! ksmm-model 1
//! type ovo
//! kernel=gaussian gamma=0.01
//! shape 32 32
//! classes 0 1 2
//! pair 0 1 supports=14 bias=0.25 v_fro=3.5 iterations=812 accepted=402 objective=6.1 status=converged degenerate=0
//! ...
//! end
//! ```
//!
//! The binary block holds every pair's `n x n` weight matrix in header
//! order, then one record per support sample: `i32` pair index, `f64`
//! coefficient and the `m x n` sample in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::matrix::Matrix;
use crate::model::{TrainedBinaryModel, TrainingMeta};
use crate::multiclass::{Classifier, OvoModel, PairModel};
use crate::smo::SolveStatus;

pub const MODEL_MAGIC: &str = "ksmm-model";
pub const MODEL_VERSION: u32 = 1;

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "max-iterations",
        SolveStatus::Stalled => "stalled",
    }
}

fn parse_status(s: &str) -> Option<SolveStatus> {
    match s {
        "converged" => Some(SolveStatus::Converged),
        "max-iterations" => Some(SolveStatus::MaxIterations),
        "stalled" => Some(SolveStatus::Stalled),
        _ => None,
    }
}

pub fn write_model<W: Write>(classifier: &Classifier, mut out: W) -> Result<()> {
    let (m, n) = classifier.shape();
    let models = classifier.binary_models();
    let mut header = format!("{MODEL_MAGIC} {MODEL_VERSION}\n");
    header += match classifier {
        Classifier::Binary(_) => "type binary\n",
        Classifier::OneVsOne(_) => "type ovo\n",
    };
    header += &format!("{}\nshape {m} {n}\n", classifier.kernel());
    let classes: Vec<String> = classifier.classes().iter().map(|c| c.to_string()).collect();
    header += &format!("classes {}\n", classes.join(" "));
    for (pos, neg, model) in &models {
        let meta = model.meta();
        header += &format!(
            "pair {pos} {neg} supports={} bias={} v_fro={} iterations={} accepted={} objective={} status={} degenerate={}\n",
            model.support_count(),
            model.bias(),
            model.v_fro(),
            meta.iterations,
            meta.accepted_steps,
            meta.objective,
            status_name(meta.status),
            u8::from(model.is_degenerate()),
        );
    }
    header += "end\n";
    let mut buf = header.into_bytes();
    for (_, _, model) in &models {
        for v in model.v_matrix().as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for (tag, (_, _, model)) in models.iter().enumerate() {
        for (sample, coef) in model.support_samples().iter().zip(model.coefficients()) {
            buf.extend_from_slice(&(tag as i32).to_le_bytes());
            buf.extend_from_slice(&coef.to_le_bytes());
            for v in sample.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_model(classifier: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    write_model(classifier, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

struct PairHeader {
    positive: i32,
    negative: i32,
    supports: usize,
    bias: f64,
    v_fro: f64,
    degenerate: bool,
    meta: TrainingMeta,
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    /// Next header line with its starting offset.
    fn next(&mut self) -> Result<(u64, &'a str)> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let len = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(start as u64, "unterminated header line"))?;
        self.pos = start + len + 1;
        let line = std::str::from_utf8(&rest[..len])
            .map_err(|_| Error::format(start as u64, "header line is not utf-8"))?;
        Ok((start as u64, line))
    }
}

fn parse_num<T: std::str::FromStr>(offset: u64, what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(offset, format!("bad {what} `{s}`")))
}

fn parse_pair(offset: u64, line: &str) -> Result<PairHeader> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("pair") {
        return Err(Error::format(
            offset,
            format!("expected pair line, got `{line}`"),
        ));
    }
    let positive = parse_num(offset, "class", tokens.next().unwrap_or(""))?;
    let negative = parse_num(offset, "class", tokens.next().unwrap_or(""))?;
    let mut fields = std::collections::HashMap::new();
    for token in tokens {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| Error::format(offset, format!("expected key=value, got `{token}`")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::format(offset, format!("pair line lacks `{k}`")))
    };
    let status = get("status")?;
    Ok(PairHeader {
        positive,
        negative,
        supports: parse_num(offset, "support count", get("supports")?)?,
        bias: parse_num(offset, "bias", get("bias")?)?,
        v_fro: parse_num(offset, "v_fro", get("v_fro")?)?,
        degenerate: match get("degenerate")? {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::format(
                    offset,
                    format!("bad degenerate flag `{other}`"),
                ))
            }
        },
        meta: TrainingMeta {
            iterations: parse_num(offset, "iterations", get("iterations")?)?,
            accepted_steps: parse_num(offset, "accepted", get("accepted")?)?,
            objective: parse_num(offset, "objective", get("objective")?)?,
            status: parse_status(status)
                .ok_or_else(|| Error::format(offset, format!("unknown status `{status}`")))?,
        },
    })
}

struct Payload<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Payload<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or_else(|| Error::format(self.pos as u64, "model payload truncated"))?;
        self.pos += N;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take()?))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let offset = self.pos as u64;
        let values = (0..rows * cols)
            .map(|_| self.f64())
            .collect::<Result<Vec<_>>>()?;
        Matrix::new(rows, cols, values).map_err(|e| Error::format(offset, e.to_string()))
    }
}

pub fn read_model<R: Read>(mut input: R) -> Result<Classifier> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut lines = Lines {
        bytes: &bytes,
        pos: 0,
    };

    let (off, line) = lines.next()?;
    let expected = format!("{MODEL_MAGIC} {MODEL_VERSION}");
    if line != expected {
        return Err(Error::format(
            off,
            format!("expected `{expected}`, got `{line}`"),
        ));
    }
    let (off, line) = lines.next()?;
    let binary = match line {
        "type binary" => true,
        "type ovo" => false,
        _ => {
            return Err(Error::format(
                off,
                format!("unknown model type line `{line}`"),
            ))
        }
    };
    let (off, line) = lines.next()?;
    let kernel: KernelSpec = line
        .parse()
        .map_err(|e: Error| Error::format(off, e.to_string()))?;
    let (off, line) = lines.next()?;
    let shape: Vec<usize> = match line.strip_prefix("shape ") {
        Some(rest) => rest
            .split_whitespace()
            .map(|t| parse_num(off, "shape", t))
            .collect::<Result<_>>()?,
        None => return Err(Error::format(off, "expected shape line")),
    };
    let (m, n) = match shape[..] {
        [m, n] if m > 0 && n > 0 => (m, n),
        _ => return Err(Error::format(off, format!("bad shape line `{line}`"))),
    };
    let (off, line) = lines.next()?;
    let classes: Vec<i32> = match line.strip_prefix("classes ") {
        Some(rest) => rest
            .split_whitespace()
            .map(|t| parse_num(off, "class", t))
            .collect::<Result<_>>()?,
        None => return Err(Error::format(off, "expected classes line")),
    };

    let mut headers = Vec::new();
    loop {
        let (off, line) = lines.next()?;
        if line == "end" {
            break;
        }
        headers.push(parse_pair(off, line)?);
    }
    if headers.is_empty() {
        return Err(Error::format(
            lines.pos as u64,
            "model has no binary models",
        ));
    }

    let mut payload = Payload {
        bytes: &bytes,
        pos: lines.pos,
    };
    let mut v_matrices = Vec::with_capacity(headers.len());
    for _ in &headers {
        v_matrices.push(payload.matrix(n, n)?);
    }
    let mut supports: Vec<(Vec<Matrix>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); headers.len()];
    for (tag, h) in headers.iter().enumerate() {
        for _ in 0..h.supports {
            let offset = payload.pos as u64;
            let found = payload.i32()?;
            if found != tag as i32 {
                return Err(Error::format(
                    offset,
                    format!("support record tagged {found}, expected {tag}"),
                ));
            }
            let coef = payload.f64()?;
            supports[tag].1.push(coef);
            supports[tag].0.push(payload.matrix(m, n)?);
        }
    }
    if payload.pos != bytes.len() {
        return Err(Error::format(
            payload.pos as u64,
            format!("{} trailing bytes", bytes.len() - payload.pos),
        ));
    }

    let mut models = Vec::with_capacity(headers.len());
    for ((h, v), (samples, coefs)) in headers.into_iter().zip(v_matrices).zip(supports) {
        let model = TrainedBinaryModel::from_parts(
            samples,
            coefs,
            v,
            h.bias,
            kernel,
            (m, n),
            h.degenerate,
            h.meta,
        )?;
        if model.v_fro().to_bits() != h.v_fro.to_bits() {
            return Err(Error::format(
                0,
                "stored v_fro does not match the weight matrix",
            ));
        }
        models.push((h.positive, h.negative, model));
    }

    if binary {
        if models.len() != 1 || classes != [-1, 1] || (models[0].0, models[0].1) != (1, -1) {
            return Err(Error::format(
                0,
                "binary model must hold one pair over classes -1 1",
            ));
        }
        let (_, _, model) = models.pop().expect("one model");
        Ok(Classifier::Binary(model))
    } else {
        let pairs = models
            .into_iter()
            .map(|(positive, negative, model)| PairModel {
                positive,
                negative,
                model,
            })
            .collect();
        Ok(Classifier::OneVsOne(OvoModel::from_parts(classes, pairs)?))
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    read_model(fs::File::open(path)?)
}
