use std::collections::HashMap;

use crate::autodiff::tensor::{numel, Tensor, TensorId};
use crate::error::{Error, Result};

/// Norm below which a vector is treated as zero by [`Tape::cosine`].
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable primitives understood by the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `[m,k] x [k,n] -> [m,n]` or `[m,k] x [k] -> [m]`.
    MatMul,
    Add,
    Mul,
    Sub,
    Abs,
    Sigmoid,
    Tanh,
    /// Concatenation along axis 0.
    Concat,
    MeanAxis(usize),
    MaxAxis(usize),
    /// Softmax over the last axis.
    Softmax,
    Scale(f64),
    Sum,
    Ln,
    Reshape(Vec<usize>),
    /// Row `i` of a matrix.
    Row(usize),
    /// Guarded cosine similarity of two vectors.
    Cosine,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Mul => "elementwise_multiply",
            Primitive::Sub => "subtract",
            Primitive::Abs => "absolute",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Tanh => "tanh",
            Primitive::Concat => "concat",
            Primitive::MeanAxis(_) => "mean_over_axis",
            Primitive::MaxAxis(_) => "max_over_axis",
            Primitive::Softmax => "softmax",
            Primitive::Scale(_) => "scale",
            Primitive::Sum => "sum",
            Primitive::Ln => "ln",
            Primitive::Reshape(_) => "reshape",
            Primitive::Row(_) => "row",
            Primitive::Cosine => "cosine",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::MatMul | Primitive::Add | Primitive::Mul | Primitive::Sub | Primitive::Cosine => Some(2),
            Primitive::Concat => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone)]
enum Origin {
    Constant,
    Param(TensorId),
    Gather { tensor: TensorId, rows: Vec<usize> },
    Op(Primitive),
}

#[derive(Debug, Clone)]
enum Saved {
    None,
    ArgMax(Vec<usize>),
    Cosine { norm_u: f64, norm_v: f64, degenerate: bool },
}

#[derive(Debug, Clone)]
struct Node {
    origin: Origin,
    inputs: Vec<Var>,
    shape: Vec<usize>,
    value: Vec<f64>,
    saved: Saved,
    requires_grad: bool,
}

/// Output of [`Tape::cosine`].
#[derive(Debug, Clone, Copy)]
pub struct CosineOutput {
    pub value: Var,
    /// Both inputs had norm below [`ZERO_NORM_EPS`]; the value was forced to 0.
    pub degenerate: bool,
}

/// Gradient contribution destined for one parameter tensor.
#[derive(Debug, Clone)]
pub enum ParamGrad {
    Dense(Vec<f64>),
    /// Row-sparse gradient from an embedding gather; rows may repeat.
    Rows {
        width: usize,
        rows: Vec<(usize, Vec<f64>)>,
    },
}

/// Result of a backward pass: adjoints of every tape node, plus the
/// contributions routed back to trainable parameter tensors.
#[derive(Debug, Default)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
    params: HashMap<TensorId, Vec<ParamGrad>>,
}

impl Gradients {
    /// Adjoint of a recorded value, if any gradient reached it.
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.adjoints.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn for_tensor(&self, id: TensorId) -> impl Iterator<Item = &ParamGrad> {
        self.params.get(&id).into_iter().flatten()
    }

    pub fn has_tensor(&self, id: TensorId) -> bool {
        self.params.contains_key(&id)
    }
}

/// Wengert list of primitive applications over dense tensors.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        debug_assert_eq!(v.len(), 1);
        v[0]
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, origin: Origin, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        self.push(Node {
            origin,
            inputs: Vec::new(),
            shape,
            value,
            saved: Saved::None,
            requires_grad,
        })
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        if shape.is_empty() || shape.contains(&0) || numel(&shape) != values.len() {
            return Err(Error::Shape {
                op: "constant",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(self.leaf(Origin::Constant, shape, values, false))
    }

    pub fn vector(&mut self, values: &[f64]) -> Var {
        let n = values.len();
        self.constant(vec![n.max(1)], if n == 0 { vec![0.0] } else { values.to_vec() })
            .expect("vector shape is always consistent")
    }

    /// Records a parameter tensor as a leaf. Its values are snapshotted; the
    /// gradient reaches the tensor only if it is trainable.
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        self.leaf(
            Origin::Param(tensor.id()),
            tensor.shape().to_vec(),
            tensor.values().to_vec(),
            tensor.is_trainable(),
        )
    }

    /// Gathers rows of a matrix parameter into a `[rows.len(), width]` leaf.
    /// Only the selected rows are copied.
    pub fn gather_rows(&mut self, tensor: &Tensor, rows: &[usize]) -> Result<Var> {
        let shape = tensor.shape();
        if shape.len() != 2 {
            return Err(Error::Shape {
                op: "gather_rows",
                left: shape.to_vec(),
                right: vec![rows.len()],
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptySentence);
        }
        let (n_rows, width) = (shape[0], shape[1]);
        let mut value = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            if r >= n_rows {
                return Err(Error::Contract(format!(
                    "gather_rows: row {r} out of range for {n_rows} rows"
                )));
            }
            value.extend_from_slice(&tensor.values()[r * width..(r + 1) * width]);
        }
        Ok(self.leaf(
            Origin::Gather {
                tensor: tensor.id(),
                rows: rows.to_vec(),
            },
            vec![rows.len(), width],
            value,
            tensor.is_trainable(),
        ))
    }

    /// Applies a primitive to recorded inputs and records the result.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        if let Some(n) = prim.arity() {
            if inputs.len() != n {
                return Err(Error::Contract(format!(
                    "{} expects {n} inputs, got {}",
                    prim.name(),
                    inputs.len()
                )));
            }
        } else if inputs.is_empty() {
            return Err(Error::Contract(format!("{} expects inputs", prim.name())));
        }
        let args: Vec<(&[usize], &[f64])> = inputs
            .iter()
            .map(|v| {
                let n = &self.nodes[v.0];
                (n.shape.as_slice(), n.value.as_slice())
            })
            .collect();
        let (shape, value, saved) = evaluate(&prim, &args)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(Node {
            origin: Origin::Op(prim),
            inputs: inputs.to_vec(),
            shape,
            value,
            saved,
            requires_grad,
        }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Abs, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[x])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::Concat, parts)
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::MeanAxis(axis), &[x])
    }

    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::MaxAxis(axis), &[x])
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Softmax, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.apply(Primitive::Scale(factor), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[x])
    }

    pub fn ln(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Ln, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.apply(Primitive::Reshape(shape), &[x])
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        self.apply(Primitive::Row(index), &[x])
    }

    /// Mean of all elements.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// `dot(u, v) / (max(|u|, eps) * max(|v|, eps))`, or 0 flagged as
    /// degenerate when both norms fall below the guard.
    pub fn cosine(&mut self, u: Var, v: Var) -> Result<CosineOutput> {
        let value = self.apply(Primitive::Cosine, &[u, v])?;
        let degenerate = matches!(self.nodes[value.0].saved, Saved::Cosine { degenerate: true, .. });
        Ok(CosineOutput { value, degenerate })
    }

    /// Reverse accumulation from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                root.shape
            )));
        }
        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut params: HashMap<TensorId, Vec<ParamGrad>> = HashMap::new();
        if !root.requires_grad {
            return Ok(Gradients { adjoints, params });
        }
        adjoints[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g_out) = adjoints[idx].take() else {
                continue;
            };
            match &node.origin {
                Origin::Constant => {}
                Origin::Param(id) => {
                    params.entry(*id).or_default().push(ParamGrad::Dense(g_out.clone()));
                }
                Origin::Gather { tensor, rows } => {
                    let width = node.shape[1];
                    let entry = rows
                        .iter()
                        .enumerate()
                        .map(|(i, &r)| (r, g_out[i * width..(i + 1) * width].to_vec()))
                        .collect();
                    params
                        .entry(*tensor)
                        .or_default()
                        .push(ParamGrad::Rows { width, rows: entry });
                }
                Origin::Op(prim) => {
                    let args: Vec<(&[usize], &[f64])> = node
                        .inputs
                        .iter()
                        .map(|v| {
                            let n = &self.nodes[v.0];
                            (n.shape.as_slice(), n.value.as_slice())
                        })
                        .collect();
                    let input_grads = vjp(prim, &args, &node.value, &node.saved, &g_out);
                    for (input, g) in node.inputs.iter().zip(input_grads) {
                        if !self.nodes[input.0].requires_grad {
                            continue;
                        }
                        match &mut adjoints[input.0] {
                            Some(acc) => {
                                for (a, b) in acc.iter_mut().zip(&g) {
                                    *a += b;
                                }
                            }
                            slot @ None => *slot = Some(g),
                        }
                    }
                }
            }
            adjoints[idx] = Some(g_out);
        }
        Ok(Gradients { adjoints, params })
    }

    /// Re-executes every recorded primitive from the leaf values and returns
    /// the value of each node in tape order.
    pub fn replay(&self) -> Result<Vec<Vec<f64>>> {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match &node.origin {
                Origin::Op(prim) => {
                    let args: Vec<(&[usize], &[f64])> = node
                        .inputs
                        .iter()
                        .map(|v| (self.nodes[v.0].shape.as_slice(), values[v.0].as_slice()))
                        .collect();
                    evaluate(prim, &args)?.1
                }
                _ => node.value.clone(),
            };
            values.push(value);
        }
        Ok(values)
    }
}

fn shape_error(prim: &Primitive, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op: prim.name(),
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

/// Splits a shape around `axis` into (outer, len, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape.to_vec();
    out.remove(axis);
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matmul_dims(prim: &Primitive, a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    if a.len() != 2 {
        return Err(shape_error(prim, a, b));
    }
    let (m, k) = (a[0], a[1]);
    let n = match b {
        [kb] if *kb == k => 1,
        [kb, n] if *kb == k => *n,
        _ => return Err(shape_error(prim, a, b)),
    };
    Ok((m, k, n))
}

type Evaluated = (Vec<usize>, Vec<f64>, Saved);

fn evaluate(prim: &Primitive, args: &[(&[usize], &[f64])]) -> Result<Evaluated> {
    let plain = |shape: &[usize], value: Vec<f64>| Ok((shape.to_vec(), value, Saved::None));
    match prim {
        Primitive::MatMul => {
            let ((sa, a), (sb, b)) = (args[0], args[1]);
            let (m, k, n) = matmul_dims(prim, sa, sb)?;
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let a_row = &a[i * k..(i + 1) * k];
                for (p, &a_ip) in a_row.iter().enumerate() {
                    let b_row = &b[p * n..(p + 1) * n];
                    for (o, &b_pj) in out[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                        *o += a_ip * b_pj;
                    }
                }
            }
            let shape = if sb.len() == 1 { vec![m] } else { vec![m, n] };
            Ok((shape, out, Saved::None))
        }
        Primitive::Add | Primitive::Mul | Primitive::Sub => {
            let ((sa, a), (sb, b)) = (args[0], args[1]);
            if sa != sb {
                return Err(shape_error(prim, sa, sb));
            }
            let f: fn(f64, f64) -> f64 = match prim {
                Primitive::Add => |x, y| x + y,
                Primitive::Mul => |x, y| x * y,
                _ => |x, y| x - y,
            };
            plain(sa, a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
        }
        Primitive::Abs => plain(args[0].0, args[0].1.iter().map(|x| x.abs()).collect()),
        Primitive::Sigmoid => plain(args[0].0, args[0].1.iter().map(|&x| sigmoid(x)).collect()),
        Primitive::Tanh => plain(args[0].0, args[0].1.iter().map(|x| x.tanh()).collect()),
        Primitive::Scale(c) => plain(args[0].0, args[0].1.iter().map(|x| c * x).collect()),
        Primitive::Sum => Ok((vec![1], vec![args[0].1.iter().sum()], Saved::None)),
        Primitive::Ln => {
            let (s, x) = args[0];
            if x.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::NonFinite("ln: input must be positive and finite".into()));
            }
            plain(s, x.iter().map(|v| v.ln()).collect())
        }
        Primitive::Concat => {
            let first = args[0].0;
            let mut dim0 = 0;
            for (s, _) in args {
                if s.len() != first.len() || s[1..] != first[1..] {
                    return Err(shape_error(prim, first, s));
                }
                dim0 += s[0];
            }
            let mut shape = first.to_vec();
            shape[0] = dim0;
            let value = args.iter().flat_map(|(_, v)| v.iter().copied()).collect();
            Ok((shape, value, Saved::None))
        }
        Primitive::Reshape(target) => {
            let (s, x) = args[0];
            if target.is_empty() || target.contains(&0) || numel(target) != x.len() {
                return Err(shape_error(prim, s, target));
            }
            Ok((target.clone(), x.to_vec(), Saved::None))
        }
        Primitive::Row(i) => {
            let (s, x) = args[0];
            if s.len() != 2 || *i >= s[0] {
                return Err(shape_error(prim, s, &[*i]));
            }
            let w = s[1];
            Ok((vec![w], x[i * w..(i + 1) * w].to_vec(), Saved::None))
        }
        Primitive::MeanAxis(axis) | Primitive::MaxAxis(axis) => {
            let (s, x) = args[0];
            if *axis >= s.len() {
                return Err(shape_error(prim, s, &[*axis]));
            }
            let (outer, len, inner) = axis_extents(s, *axis);
            let mut out = vec![0.0; outer * inner];
            let is_max = matches!(prim, Primitive::MaxAxis(_));
            let mut argmax = vec![0usize; if is_max { outer * inner } else { 0 }];
            for o in 0..outer {
                for j in 0..inner {
                    let at = |l: usize| x[(o * len + l) * inner + j];
                    let slot = o * inner + j;
                    if is_max {
                        let mut best = 0;
                        for l in 1..len {
                            if at(l) > at(best) {
                                best = l;
                            }
                        }
                        out[slot] = at(best);
                        argmax[slot] = best;
                    } else {
                        out[slot] = (0..len).map(at).sum::<f64>() / len as f64;
                    }
                }
            }
            let saved = if is_max { Saved::ArgMax(argmax) } else { Saved::None };
            Ok((reduced_shape(s, *axis), out, saved))
        }
        Primitive::Softmax => {
            let (s, x) = args[0];
            let width = *s.last().expect("shapes are nonempty");
            let mut out = vec![0.0; x.len()];
            for (src, dst) in x.chunks(width).zip(out.chunks_mut(width)) {
                let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = (v - max).exp();
                    total += *d;
                }
                for d in dst.iter_mut() {
                    *d /= total;
                }
            }
            plain(s, out)
        }
        Primitive::Cosine => {
            let ((su, u), (sv, v)) = (args[0], args[1]);
            if su.len() != 1 || su != sv {
                return Err(shape_error(prim, su, sv));
            }
            let (norm_u, norm_v) = (norm(u), norm(v));
            let degenerate = norm_u < ZERO_NORM_EPS && norm_v < ZERO_NORM_EPS;
            let value = if degenerate {
                0.0
            } else {
                dot(u, v) / (norm_u.max(ZERO_NORM_EPS) * norm_v.max(ZERO_NORM_EPS))
            };
            Ok((
                vec![1],
                vec![value],
                Saved::Cosine {
                    norm_u,
                    norm_v,
                    degenerate,
                },
            ))
        }
    }
}

/// Vector-Jacobian products: gradient of each input given the output adjoint.
fn vjp(prim: &Primitive, args: &[(&[usize], &[f64])], out: &[f64], saved: &Saved, g: &[f64]) -> Vec<Vec<f64>> {
    match prim {
        Primitive::MatMul => {
            let ((sa, a), (sb, b)) = (args[0], args[1]);
            let (m, k, n) = matmul_dims(prim, sa, sb).expect("validated in forward");
            let mut ga = vec![0.0; m * k];
            let mut gb = vec![0.0; k * n];
            for i in 0..m {
                let g_row = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let b_row = &b[p * n..(p + 1) * n];
                    ga[i * k + p] = dot(g_row, b_row);
                    let a_ip = a[i * k + p];
                    for (dst, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(g_row) {
                        *dst += a_ip * gv;
                    }
                }
            }
            vec![ga, gb]
        }
        Primitive::Add => vec![g.to_vec(), g.to_vec()],
        Primitive::Sub => vec![g.to_vec(), g.iter().map(|v| -v).collect()],
        Primitive::Mul => {
            let (a, b) = (args[0].1, args[1].1);
            vec![
                g.iter().zip(b).map(|(gv, bv)| gv * bv).collect(),
                g.iter().zip(a).map(|(gv, av)| gv * av).collect(),
            ]
        }
        Primitive::Abs => vec![args[0]
            .1
            .iter()
            .zip(g)
            .map(|(&x, gv)| {
                if x > 0.0 {
                    *gv
                } else if x < 0.0 {
                    -gv
                } else {
                    0.0
                }
            })
            .collect()],
        Primitive::Sigmoid => vec![out.iter().zip(g).map(|(y, gv)| gv * y * (1.0 - y)).collect()],
        Primitive::Tanh => vec![out.iter().zip(g).map(|(y, gv)| gv * (1.0 - y * y)).collect()],
        Primitive::Scale(c) => vec![g.iter().map(|v| c * v).collect()],
        Primitive::Sum => vec![vec![g[0]; args[0].1.len()]],
        Primitive::Ln => vec![args[0].1.iter().zip(g).map(|(x, gv)| gv / x).collect()],
        Primitive::Reshape(_) => vec![g.to_vec()],
        Primitive::Concat => {
            let mut offset = 0;
            args.iter()
                .map(|(_, v)| {
                    let part = g[offset..offset + v.len()].to_vec();
                    offset += v.len();
                    part
                })
                .collect()
        }
        Primitive::Row(i) => {
            let (s, x) = args[0];
            let w = s[1];
            let mut gx = vec![0.0; x.len()];
            gx[i * w..(i + 1) * w].copy_from_slice(g);
            vec![gx]
        }
        Primitive::MeanAxis(axis) => {
            let (s, x) = args[0];
            let (outer, len, inner) = axis_extents(s, *axis);
            let mut gx = vec![0.0; x.len()];
            for o in 0..outer {
                for l in 0..len {
                    for j in 0..inner {
                        gx[(o * len + l) * inner + j] = g[o * inner + j] / len as f64;
                    }
                }
            }
            vec![gx]
        }
        Primitive::MaxAxis(axis) => {
            let (s, x) = args[0];
            let (_, len, inner) = axis_extents(s, *axis);
            let Saved::ArgMax(argmax) = saved else {
                unreachable!("max_over_axis saves argmax")
            };
            let mut gx = vec![0.0; x.len()];
            for (slot, &best) in argmax.iter().enumerate() {
                let (o, j) = (slot / inner, slot % inner);
                gx[(o * len + best) * inner + j] += g[slot];
            }
            vec![gx]
        }
        Primitive::Softmax => {
            let width = *args[0].0.last().expect("shapes are nonempty");
            let mut gx = vec![0.0; out.len()];
            for ((y, gy), dst) in out.chunks(width).zip(g.chunks(width)).zip(gx.chunks_mut(width)) {
                let inner = dot(y, gy);
                for ((d, yi), gi) in dst.iter_mut().zip(y).zip(gy) {
                    *d = yi * (gi - inner);
                }
            }
            vec![gx]
        }
        Primitive::Cosine => {
            let (u, v) = (args[0].1, args[1].1);
            let Saved::Cosine {
                norm_u,
                norm_v,
                degenerate,
            } = *saved
            else {
                unreachable!("cosine saves norms")
            };
            if degenerate {
                return vec![vec![0.0; u.len()], vec![0.0; v.len()]];
            }
            let c = out[0];
            let denom = norm_u.max(ZERO_NORM_EPS) * norm_v.max(ZERO_NORM_EPS);
            let side = |own: &[f64], other: &[f64], own_norm: f64| -> Vec<f64> {
                let radial = if own_norm > ZERO_NORM_EPS {
                    c / (own_norm * own_norm)
                } else {
                    0.0
                };
                own.iter()
                    .zip(other)
                    .map(|(o, w)| g[0] * (w / denom - radial * o))
                    .collect()
            };
            vec![side(u, v, norm_u), side(v, u, norm_v)]
        }
    }
}
