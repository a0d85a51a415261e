//! Plain-text model checkpoints.
//!
//! ```text
//! simxfer-checkpoint 1
//! encoder bilstm-avg 50 16 7
//! classifier 50 5          (or: classifier none)
//! vocab 3
//! <unk>
//! the
//! cat
//! tensor wem.matrix 2 3 50
//! 0.1 -0.25 ...
//! end
//! ```
//!
//! Values are written in Rust's shortest round-trip form, so a load returns
//! bitwise-identical tensors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::autodiff::{Parameters, Tensor};
use crate::embeddings::{EmbeddingMatrix, Vocabulary, UNK_TOKEN};
use crate::encoders::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::transfer::{ClassifierParameters, SimilarityModel};

pub const FORMAT_HEADER: &str = "simxfer-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_checkpoint(model: &SimilarityModel) -> String {
    let mut out = String::new();
    let c = &model.encoder.config;
    let _ = writeln!(out, "{FORMAT_HEADER} {FORMAT_VERSION}");
    let _ = writeln!(
        out,
        "encoder {} {} {} {}",
        c.kind.as_str(),
        c.input_dim,
        c.hidden_dim,
        c.seed
    );
    match &model.classifier {
        Some(cla) => {
            let _ = writeln!(out, "classifier {} {}", cla.b_h.numel(), cla.bins());
        }
        None => out.push_str("classifier none\n"),
    }
    let _ = writeln!(out, "vocab {}", model.vocab.len());
    for token in model.vocab.tokens() {
        out.push_str(token);
        out.push('\n');
    }
    for (name, tensor) in model.named_params() {
        let dims: Vec<String> = tensor.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "tensor {name} {} {}", dims.len(), dims.join(" "));
        let values: Vec<String> = tensor.values().iter().map(f64::to_string).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Data(format!("checkpoint: {}", msg.into()))
}

fn parse_num<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| bad(format!("missing or invalid {what}")))
}

pub fn read_checkpoint(text: &str) -> Result<SimilarityModel> {
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("truncated before {what}")));

    let header = next("header")?;
    let version = header
        .strip_prefix(FORMAT_HEADER)
        .map(str::trim)
        .ok_or_else(|| bad("not a simxfer checkpoint"))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(bad(format!("unsupported format version {version}")));
    }

    let mut f = next("encoder line")?.split_ascii_whitespace();
    if f.next() != Some("encoder") {
        return Err(bad("expected encoder line"));
    }
    let config = EncoderConfig {
        kind: f.next().ok_or_else(|| bad("missing encoder kind"))?.parse()?,
        input_dim: parse_num(f.next(), "input dim")?,
        hidden_dim: parse_num(f.next(), "hidden dim")?,
        seed: parse_num(f.next(), "encoder seed")?,
    };

    let mut f = next("classifier line")?.split_ascii_whitespace();
    if f.next() != Some("classifier") {
        return Err(bad("expected classifier line"));
    }
    let classifier_dims = match f.next() {
        Some("none") => None,
        hidden => Some((
            parse_num::<usize>(hidden, "classifier hidden")?,
            parse_num::<usize>(f.next(), "bins")?,
        )),
    };

    let mut f = next("vocab line")?.split_ascii_whitespace();
    if f.next() != Some("vocab") {
        return Err(bad("expected vocab line"));
    }
    let n: usize = parse_num(f.next(), "vocab size")?;
    let mut vocab = Vocabulary::new();
    for i in 0..n {
        let token = next("vocabulary entry")?;
        if i == 0 {
            if token != UNK_TOKEN {
                return Err(bad("first vocabulary entry must be the unknown token"));
            }
        } else if !vocab.insert(token).1 {
            return Err(bad(format!("duplicate vocabulary entry {token:?}")));
        }
    }

    let embeddings = EmbeddingMatrix::new(Tensor::zeros(vec![n, config.input_dim]))?;
    let encoder = Encoder::new(config)?;
    let classifier =
        classifier_dims.map(|(hidden, bins)| ClassifierParameters::zeros(config.output_dim(), hidden, bins));
    let mut model = SimilarityModel::new(Arc::new(vocab), embeddings, encoder, classifier)?;

    let mut loaded = Vec::new();
    loop {
        let line = next("end marker")?;
        if line == "end" {
            break;
        }
        let mut f = line.split_ascii_whitespace();
        if f.next() != Some("tensor") {
            return Err(bad(format!("expected tensor line, found {line:?}")));
        }
        let name = f.next().ok_or_else(|| bad("tensor without a name"))?.to_string();
        let rank: usize = parse_num(f.next(), "tensor rank")?;
        let shape = (0..rank)
            .map(|_| parse_num(f.next(), "tensor dimension"))
            .collect::<Result<Vec<usize>>>()?;
        let values = next("tensor values")?
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?} in {name}"))))
            .collect::<Result<Vec<f64>>>()?;
        loaded.push((name, shape, values));
    }

    let mut params = model.named_params_mut();
    if loaded.len() != params.len() {
        return Err(bad(format!(
            "expected {} tensors, found {}",
            params.len(),
            loaded.len()
        )));
    }
    for (name, shape, values) in loaded {
        let (_, target) = params
            .iter_mut()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| bad(format!("unexpected tensor {name}")))?;
        if target.shape() != shape.as_slice() || values.len() != target.numel() {
            return Err(bad(format!(
                "tensor {name} has shape {shape:?} with {} values, expected {:?}",
                values.len(),
                target.shape()
            )));
        }
        target.values_mut().copy_from_slice(&values);
    }
    drop(params);
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &SimilarityModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SimilarityModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&text)
}
