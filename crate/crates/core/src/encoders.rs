//! Sentence encoders: word averaging and bidirectional LSTMs with mean or max
//! pooling. The encoder weights form the *enc* parameter set.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Parameters, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    WordAverage,
    BiLstmAvg,
    BiLstmMax,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::WordAverage => "word-average",
            EncoderKind::BiLstmAvg => "bilstm-avg",
            EncoderKind::BiLstmMax => "bilstm-max",
        }
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, EncoderKind::WordAverage)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word-average" => Ok(EncoderKind::WordAverage),
            "bilstm-avg" => Ok(EncoderKind::BiLstmAvg),
            "bilstm-max" => Ok(EncoderKind::BiLstmMax),
            other => Err(Error::Config(format!(
                "unknown encoder {other:?} (expected word-average, bilstm-avg or bilstm-max)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub input_dim: usize,
    /// Hidden size per direction; ignored by word averaging.
    pub hidden_dim: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn output_dim(&self) -> usize {
        if self.kind.is_recurrent() {
            2 * self.hidden_dim
        } else {
            self.input_dim
        }
    }
}

/// LSTM gates in parameter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

/// Weights of one gate: `input` is `h x d`, `recurrent` is `h x h`.
#[derive(Debug, Clone)]
pub struct GateWeights {
    pub input: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

/// One LSTM direction, gates ordered as [`Gate::ALL`].
#[derive(Debug, Clone)]
pub struct LstmDirection {
    pub gates: [GateWeights; 4],
}

impl LstmDirection {
    pub fn gate(&self, gate: Gate) -> &GateWeights {
        &self.gates[gate as usize]
    }
}

/// Encoder weights: empty for word averaging, `[forward, backward]` for the
/// bidirectional kinds.
#[derive(Debug, Clone, Default)]
pub struct EncoderParameters {
    pub directions: Vec<LstmDirection>,
}

const DIRECTION_NAMES: [&str; 2] = ["fwd", "bwd"];

impl Parameters for EncoderParameters {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (dir, name) in self.directions.iter().zip(DIRECTION_NAMES) {
            for (gate, w) in Gate::ALL.iter().zip(&dir.gates) {
                let g = gate.name();
                out.push((format!("{name}.{g}.W"), &w.input));
                out.push((format!("{name}.{g}.U"), &w.recurrent));
                out.push((format!("{name}.{g}.b"), &w.bias));
            }
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (dir, name) in self.directions.iter_mut().zip(DIRECTION_NAMES) {
            for (gate, w) in Gate::ALL.iter().zip(dir.gates.iter_mut()) {
                let g = gate.name();
                out.push((format!("{name}.{g}.W"), &mut w.input));
                out.push((format!("{name}.{g}.U"), &mut w.recurrent));
                out.push((format!("{name}.{g}.b"), &mut w.bias));
            }
        }
        out
    }
}

/// Draws encoder weights uniformly in `[-1/sqrt(h), 1/sqrt(h)]` from a
/// generator seeded with `config.seed`. Biases start at zero except the
/// forget gate, which starts at one.
pub fn init_encoder(config: &EncoderConfig) -> Result<EncoderParameters> {
    if config.input_dim == 0 {
        return Err(Error::Config("encoder input dimension must be positive".into()));
    }
    if !config.kind.is_recurrent() {
        return Ok(EncoderParameters::default());
    }
    let (h, d) = (config.hidden_dim, config.input_dim);
    if h == 0 {
        return Err(Error::Config("encoder hidden dimension must be positive".into()));
    }
    let bound = 1.0 / (h as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |shape: Vec<usize>| {
        let n = shape.iter().product();
        let values = (0..n).map(|_| dist.sample(&mut rng)).collect();
        Tensor::new(shape, values).expect("shape matches value count")
    };
    let mut directions = Vec::with_capacity(2);
    for _ in 0..2 {
        let gates = Gate::ALL.map(|gate| {
            let input = draw(vec![h, d]);
            let recurrent = draw(vec![h, h]);
            let fill = if gate == Gate::Forget { 1.0 } else { 0.0 };
            let bias = Tensor::vector(vec![fill; h]);
            GateWeights { input, recurrent, bias }
        });
        directions.push(LstmDirection { gates });
    }
    Ok(EncoderParameters { directions })
}

/// Encoder parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    directions: Vec<[[Var; 3]; 4]>,
}

impl EncoderParameters {
    /// Records every weight on `tape` once, for reuse across sentences.
    pub fn bind(&self, tape: &mut Tape) -> EncoderVars {
        let directions = self
            .directions
            .iter()
            .map(|dir| {
                dir.gates
                    .each_ref()
                    .map(|w| [tape.param(&w.input), tape.param(&w.recurrent), tape.param(&w.bias)])
            })
            .collect();
        EncoderVars { directions }
    }
}

/// Runs one LSTM direction and returns the hidden state at each position.
fn run_direction(tape: &mut Tape, gates: &[[Var; 3]; 4], x: Var, steps: usize, reverse: bool) -> Result<Vec<Var>> {
    let mut outputs: Vec<Option<Var>> = vec![None; steps];
    let mut state: Option<(Var, Var)> = None;
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let x_t = tape.row(x, t)?;
        let mut pre = [x_t; 4];
        for (slot, [w, u, b]) in pre.iter_mut().zip(gates) {
            let mut z = tape.matmul(*w, x_t)?;
            // h_0 = 0, so the recurrent term vanishes on the first step.
            if let Some((h_prev, _)) = state {
                let r = tape.matmul(*u, h_prev)?;
                z = tape.add(z, r)?;
            }
            *slot = tape.add(z, *b)?;
        }
        let i = tape.sigmoid(pre[Gate::Input as usize])?;
        let f = tape.sigmoid(pre[Gate::Forget as usize])?;
        let o = tape.sigmoid(pre[Gate::Output as usize])?;
        let g = tape.tanh(pre[Gate::Candidate as usize])?;
        let mut c = tape.mul(i, g)?;
        if let Some((_, c_prev)) = state {
            let kept = tape.mul(f, c_prev)?;
            c = tape.add(kept, c)?;
        }
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        outputs[t] = Some(h);
        state = Some((h, c));
    }
    Ok(outputs.into_iter().map(|h| h.expect("every step visited")).collect())
}

/// Encodes a `T x d` token-vector matrix into one sentence embedding.
pub fn encode(tape: &mut Tape, vars: &EncoderVars, config: &EncoderConfig, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::EmptySentence);
    }
    if shape[1] != config.input_dim {
        return Err(Error::Shape {
            op: "encode",
            left: shape,
            right: vec![config.input_dim],
        });
    }
    let steps = shape[0];
    match config.kind {
        EncoderKind::WordAverage => tape.mean_axis(x, 0),
        EncoderKind::BiLstmAvg | EncoderKind::BiLstmMax => {
            let [fwd, bwd] = vars.directions.as_slice() else {
                return Err(Error::Contract(
                    "bidirectional encoder needs two parameter directions".into(),
                ));
            };
            let forward = run_direction(tape, fwd, x, steps, false)?;
            let backward = run_direction(tape, bwd, x, steps, true)?;
            let mut per_step = Vec::with_capacity(steps);
            for (f, b) in forward.into_iter().zip(backward) {
                per_step.push(tape.concat(&[f, b])?);
            }
            let flat = tape.concat(&per_step)?;
            let stacked = tape.reshape(flat, vec![steps, config.output_dim()])?;
            if config.kind == EncoderKind::BiLstmAvg {
                tape.mean_axis(stacked, 0)
            } else {
                tape.max_axis(stacked, 0)
            }
        }
    }
}

/// Encoder configuration together with its weights.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: EncoderParameters,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        Ok(Encoder {
            params: init_encoder(&config)?,
            config,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Encodes a row-major `T x d` buffer without keeping the tape.
    pub fn encode_values(&self, token_vectors: &[f64]) -> Result<Vec<f64>> {
        let d = self.config.input_dim;
        if token_vectors.is_empty() {
            return Err(Error::EmptySentence);
        }
        if !token_vectors.len().is_multiple_of(d) {
            return Err(Error::Shape {
                op: "encode",
                left: vec![token_vectors.len()],
                right: vec![d],
            });
        }
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let x = tape.constant(vec![token_vectors.len() / d, d], token_vectors.to_vec())?;
        let out = encode(&mut tape, &vars, &self.config, x)?;
        Ok(tape.value(out).to_vec())
    }
}

impl Parameters for Encoder {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.params.named_params()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.params.named_params_mut()
    }
}
