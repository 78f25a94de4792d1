use std::cell::RefCell;

use super::{matrix_dims, RngStream, Tensor};
use crate::error::{Result, SanError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    Abs,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        p: usize,
        q: usize,
        r: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Abs(Var),
    AddBias {
        x: Var,
        bias: Var,
        cols: usize,
    },
    Affine {
        x: Var,
        scale: f64,
    },
    DivScalar {
        x: Var,
        divisor: f64,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    Softmax {
        x: Var,
        axis: usize,
        rows: usize,
        cols: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
        sizes: Vec<usize>,
        rows: usize,
        cols: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
        rows: usize,
        cols: usize,
    },
    Transpose {
        x: Var,
        rows: usize,
        cols: usize,
    },
    Sum(Var),
    RowMax {
        x: Var,
        cols: usize,
        argmax: Vec<usize>,
    },
    Maxout {
        x: Var,
        cols: usize,
        argmax: Vec<usize>,
    },
    WeightNorm {
        v: Var,
        g: Var,
        norm: f64,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
        dim: usize,
    },
    Pick {
        x: Var,
        index: usize,
    },
    LstmGates {
        pre: Var,
        c_prev: Var,
        hidden: usize,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddBias { x, bias, .. } => vec![*x, *bias],
            Op::WeightNorm { v, g, .. } => vec![*v, *g],
            Op::LstmGates { pre, c_prev, .. } => vec![*pre, *c_prev],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Abs(x)
            | Op::Affine { x, .. }
            | Op::DivScalar { x, .. }
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Log(x)
            | Op::Softmax { x, .. }
            | Op::Slice { x, .. }
            | Op::Transpose { x, .. }
            | Op::Sum(x)
            | Op::RowMax { x, .. }
            | Op::Maxout { x, .. }
            | Op::Pick { x, .. } => vec![*x],
            Op::Gather { table, .. } => vec![*table],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded record of a forward computation.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order and [`Tape::backward`] is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients produced by [`Tape::backward`], one per requires-grad leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or `None` if it does not require grad.
    pub fn wrt(&self, var: Var) -> Option<Tensor> {
        self.get(var).cloned()
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.inputs().iter().any(|v| nodes[v.0].requires_grad);
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    /// Trainable leaf: gradients flow to it.
    pub fn leaf(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(nodes.len() - 1)
    }

    /// Constant input: no gradient is tracked.
    pub fn constant(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let nodes = self.nodes.borrow();
        let shape = nodes[v.0].value.shape();
        matrix_dims(shape).ok_or_else(|| SanError::shape(op, shape, "expected rank 1 or 2"))
    }

    fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    // ---- linear algebra -------------------------------------------------

    /// `[p×q] · [q×r] → [p×r]`; rank-1 operands are read as columns.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.dims("matmul", a)?;
        let (q2, r) = self.dims("matmul", b)?;
        if q != q2 {
            return Err(SanError::dim("matmul", &self.shape(a), &self.shape(b)));
        }
        let out = {
            let nodes = self.nodes.borrow();
            let ad = nodes[a.0].value.data();
            let bd = nodes[b.0].value.data();
            let mut out = vec![0.0; p * r];
            for i in 0..p {
                let row = &mut out[i * r..(i + 1) * r];
                for k in 0..q {
                    let aik = ad[i * q + k];
                    let brow = &bd[k * r..(k + 1) * r];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o += aik * bv;
                    }
                }
            }
            out
        };
        Ok(self.push(Tensor::from_parts(vec![p, r], out), Op::MatMul { a, b, p, q, r }))
    }

    pub fn transpose(&self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims("transpose", x)?;
        let out = self.with_value(x, |t| {
            let d = t.data();
            let mut out = vec![0.0; rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    out[j * rows + i] = d[i * cols + j];
                }
            }
            out
        });
        Ok(self.push(
            Tensor::from_parts(vec![cols, rows], out),
            Op::Transpose { x, rows, cols },
        ))
    }

    // ---- elementwise ----------------------------------------------------

    pub fn elementwise(&self, kind: ElementwiseKind, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind, b) {
            (ElementwiseKind::Abs, None) => Ok(self.abs(a)),
            (ElementwiseKind::Abs, Some(_)) => Err(SanError::Parameter("abs takes a single operand".into())),
            (_, None) => Err(SanError::Parameter(format!("{kind:?} needs two operands"))),
            (ElementwiseKind::Add, Some(b)) => self.add(a, b),
            (ElementwiseKind::Sub, Some(b)) => self.sub(a, b),
            (ElementwiseKind::Mul, Some(b)) => self.mul(a, b),
        }
    }

    fn binary(&self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.shape() != tb.shape() {
                return Err(SanError::dim(name, ta.shape(), tb.shape()));
            }
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::from_parts(ta.shape().to_vec(), data)
        };
        Ok(self.push(value, op))
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.with_value(x, |t| {
            Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
        });
        self.push(value, op)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn abs(&self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    /// `scale * x + shift`.
    pub fn affine(&self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine { x, scale })
    }

    pub fn scale(&self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// `x / divisor`, computed as a true division.
    pub fn div_scalar(&self, x: Var, divisor: f64) -> Var {
        self.unary(x, |v| v / divisor, Op::DivScalar { x, divisor })
    }

    /// Adds a `[rows]` (or `[rows×1]`) bias to every column of `x [rows×cols]`.
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.dims("add_bias", x)?;
        let (br, bc) = self.dims("add_bias", bias)?;
        if br != rows || bc != 1 {
            return Err(SanError::dim("add_bias", &self.shape(x), &self.shape(bias)));
        }
        let value = {
            let nodes = self.nodes.borrow();
            let xt = &nodes[x.0].value;
            let bd = nodes[bias.0].value.data();
            let mut data = xt.data().to_vec();
            for i in 0..rows {
                for v in &mut data[i * cols..(i + 1) * cols] {
                    *v += bd[i];
                }
            }
            Tensor::from_parts(xt.shape().to_vec(), data)
        };
        Ok(self.push(value, Op::AddBias { x, bias, cols }))
    }

    pub fn relu(&self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn log(&self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    /// Multiplies by a constant tensor of the same shape (e.g. a dropout multiplier).
    pub fn mul_const(&self, x: Var, c: Tensor) -> Result<Var> {
        let c = self.constant(c);
        self.mul(x, c)
    }

    /// Inverted dropout with a freshly sampled mask.
    pub fn dropout(&self, x: Var, rate: f64, rng: &mut RngStream) -> Result<Var> {
        if rate == 0.0 {
            return Ok(x);
        }
        let mask = super::dropout_mask(&self.shape(x), rate, rng)?;
        self.mul_const(x, mask.scale_tensor(rate))
    }

    /// LSTM cell update from gate pre-activations `pre = [a_i; a_f; a_g; a_o]`:
    /// `c = σ(a_f)⊙c_prev + σ(a_i)⊙tanh(a_g)`, `h = σ(a_o)⊙tanh(c)`. Returns `[h; c]`.
    pub fn lstm_gates(&self, pre: Var, c_prev: Var) -> Result<Var> {
        let hidden = self.with_value(c_prev, Tensor::len);
        if self.with_value(pre, Tensor::len) != 4 * hidden || hidden == 0 {
            return Err(SanError::dim("lstm_gates", &self.shape(pre), &self.shape(c_prev)));
        }
        let out = {
            let nodes = self.nodes.borrow();
            let (a, cp) = (nodes[pre.0].value.data(), nodes[c_prev.0].value.data());
            let mut out = vec![0.0; 2 * hidden];
            for k in 0..hidden {
                let i = sigmoid(a[k]);
                let f = sigmoid(a[hidden + k]);
                let g = a[2 * hidden + k].tanh();
                let o = sigmoid(a[3 * hidden + k]);
                let c = f * cp[k] + i * g;
                out[k] = o * c.tanh();
                out[hidden + k] = c;
            }
            out
        };
        Ok(self.push(
            Tensor::from_parts(vec![2 * hidden, 1], out),
            Op::LstmGates { pre, c_prev, hidden },
        ))
    }

    // ---- normalisation --------------------------------------------------

    /// Numerically stable softmax along `axis` of a rank-1/2 tensor.
    ///
    /// Masked-out entries (`mask[i] == false`) get probability exactly 0.
    /// A slice with no valid entry is an error.
    pub fn softmax(&self, x: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var> {
        let (rows, cols) = self.dims("softmax", x)?;
        if axis > 1 || (axis == 1 && self.shape(x).len() == 1) {
            return Err(SanError::shape(
                "softmax",
                &self.shape(x),
                format!("invalid axis {axis}"),
            ));
        }
        if let Some(m) = mask {
            if m.len() != rows * cols {
                return Err(SanError::dim("softmax mask", &self.shape(x), &[m.len()]));
            }
        }
        let out = self.with_value(x, |t| -> Result<Vec<f64>> {
            let d = t.data();
            let mut out = vec![0.0; rows * cols];
            let (n_slices, len) = if axis == 0 { (cols, rows) } else { (rows, cols) };
            let index = |s: usize, k: usize| if axis == 0 { k * cols + s } else { s * cols + k };
            for s in 0..n_slices {
                let valid = |k: usize| mask.is_none_or(|m| m[index(s, k)]);
                let mut max = f64::NEG_INFINITY;
                for k in (0..len).filter(|&k| valid(k)) {
                    max = max.max(d[index(s, k)]);
                }
                if max == f64::NEG_INFINITY {
                    return Err(SanError::FullyMasked("softmax"));
                }
                let mut total = 0.0;
                for k in (0..len).filter(|&k| valid(k)) {
                    let e = (d[index(s, k)] - max).exp();
                    out[index(s, k)] = e;
                    total += e;
                }
                for k in (0..len).filter(|&k| valid(k)) {
                    out[index(s, k)] /= total;
                }
            }
            Ok(out)
        })?;
        let shape = self.shape(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Softmax { x, axis, rows, cols }))
    }

    /// `g · v / ‖v‖₂` with gradients to both `v` and the scalar `g`.
    pub fn weight_norm(&self, v: Var, g: Var) -> Result<Var> {
        if self.shape(g) != [1] {
            return Err(SanError::shape("weight_norm", &self.shape(g), "gain must be a scalar"));
        }
        let norm = self.with_value(v, Tensor::l2_norm);
        if !norm.is_finite() {
            return Err(SanError::Divergence(format!(
                "weight_norm of a tensor with norm {norm}"
            )));
        }
        if norm == 0.0 {
            return Err(SanError::Parameter("weight_norm of a zero-norm tensor".into()));
        }
        let gain = self.with_value(g, |t| t.data()[0]);
        let value = self.with_value(v, |t| {
            Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&x| gain * x / norm).collect())
        });
        Ok(self.push(value, Op::WeightNorm { v, g, norm }))
    }

    // ---- structure ------------------------------------------------------

    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(SanError::Empty("concat parts"));
        }
        if axis > 1 {
            return Err(SanError::Parameter(format!("concat axis {axis} not supported")));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims("concat", p)).collect::<Result<_>>()?;
        let all_rank1 = parts.iter().all(|&p| self.shape(p).len() == 1);
        let (rows, cols, sizes) = if axis == 0 {
            let c = dims[0].1;
            if let Some(i) = dims.iter().position(|d| d.1 != c) {
                return Err(SanError::dim("concat", &self.shape(parts[0]), &self.shape(parts[i])));
            }
            let sizes: Vec<usize> = dims.iter().map(|d| d.0).collect();
            (sizes.iter().sum(), c, sizes)
        } else {
            let r = dims[0].0;
            if let Some(i) = dims.iter().position(|d| d.0 != r) {
                return Err(SanError::dim("concat", &self.shape(parts[0]), &self.shape(parts[i])));
            }
            let sizes: Vec<usize> = dims.iter().map(|d| d.1).collect();
            (r, sizes.iter().sum(), sizes)
        };
        let mut out = Vec::with_capacity(rows * cols);
        {
            let nodes = self.nodes.borrow();
            if axis == 0 {
                for &p in parts {
                    out.extend_from_slice(nodes[p.0].value.data());
                }
            } else {
                for i in 0..rows {
                    for (&p, &w) in parts.iter().zip(&sizes) {
                        out.extend_from_slice(&nodes[p.0].value.data()[i * w..(i + 1) * w]);
                    }
                }
            }
        }
        let shape = if all_rank1 && axis == 0 {
            vec![rows]
        } else {
            vec![rows, cols]
        };
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
                sizes,
                rows,
                cols,
            },
        ))
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims("slice", x)?;
        let extent = match axis {
            0 => rows,
            1 => cols,
            _ => return Err(SanError::Parameter(format!("slice axis {axis} not supported"))),
        };
        if len == 0 || start + len > extent {
            return Err(SanError::shape(
                "slice",
                &self.shape(x),
                format!("range {start}..{} out of bounds on axis {axis}", start + len),
            ));
        }
        let rank1 = self.shape(x).len() == 1;
        let (value, shape) = self.with_value(x, |t| {
            let d = t.data();
            if axis == 0 {
                let data = d[start * cols..(start + len) * cols].to_vec();
                let shape = if rank1 { vec![len] } else { vec![len, cols] };
                (data, shape)
            } else {
                let mut data = Vec::with_capacity(rows * len);
                for i in 0..rows {
                    data.extend_from_slice(&d[i * cols + start..i * cols + start + len]);
                }
                (data, vec![rows, len])
            }
        });
        Ok(self.push(
            Tensor::from_parts(shape, value),
            Op::Slice {
                x,
                axis,
                start,
                rows,
                cols,
            },
        ))
    }

    pub fn column(&self, x: Var, j: usize) -> Result<Var> {
        self.slice(x, 1, j, 1)
    }

    /// Sum of all entries, as a `[1]` scalar.
    pub fn sum(&self, x: Var) -> Var {
        let s = self.with_value(x, Tensor::sum);
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Entry `index` (row-major) as a `[1]` scalar.
    pub fn pick(&self, x: Var, index: usize) -> Result<Var> {
        let v = self.with_value(x, |t| t.data().get(index).copied());
        let v = v.ok_or(SanError::OutOfRange {
            what: "pick",
            index,
            size: self.with_value(x, Tensor::len),
        })?;
        Ok(self.push(Tensor::scalar(v), Op::Pick { x, index }))
    }

    /// Max over columns of each row: `[rows×cols] → [rows×1]`. Ties go to the first column.
    pub fn row_max(&self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims("row_max", x)?;
        let (out, argmax) = self.with_value(x, |t| {
            let d = t.data();
            let mut out = Vec::with_capacity(rows);
            let mut argmax = Vec::with_capacity(rows);
            for i in 0..rows {
                let row = &d[i * cols..(i + 1) * cols];
                let k = super::argmax(row);
                out.push(row[k]);
                argmax.push(k);
            }
            (out, argmax)
        });
        Ok(self.push(Tensor::from_parts(vec![rows, 1], out), Op::RowMax { x, cols, argmax }))
    }

    /// Max over each group of `group` consecutive rows: `[g·h×L] → [h×L]`.
    /// Ties go to the first row of the group.
    pub fn maxout(&self, x: Var, group: usize) -> Result<Var> {
        let (rows, cols) = self.dims("maxout", x)?;
        if group == 0 || rows % group != 0 {
            return Err(SanError::shape(
                "maxout",
                &self.shape(x),
                format!("row count not divisible by group size {group}"),
            ));
        }
        let out_rows = rows / group;
        let (out, argmax) = self.with_value(x, |t| {
            let d = t.data();
            let mut out = vec![0.0; out_rows * cols];
            let mut argmax = vec![0; out_rows * cols];
            for o in 0..out_rows {
                for j in 0..cols {
                    let mut best = o * group;
                    for r in o * group + 1..(o + 1) * group {
                        if d[r * cols + j] > d[best * cols + j] {
                            best = r;
                        }
                    }
                    out[o * cols + j] = d[best * cols + j];
                    argmax[o * cols + j] = best;
                }
            }
            (out, argmax)
        });
        Ok(self.push(
            Tensor::from_parts(vec![out_rows, cols], out),
            Op::Maxout { x, cols, argmax },
        ))
    }

    /// Column `j` of the result is row `ids[j]` of `table [V×dim]`: `→ [dim×L]`.
    pub fn gather(&self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, dim) = self.dims("gather", table)?;
        if ids.is_empty() {
            return Err(SanError::Empty("gather ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(SanError::OutOfRange {
                what: "embedding id",
                index: bad,
                size: vocab,
            });
        }
        let l = ids.len();
        let out = self.with_value(table, |t| {
            let d = t.data();
            let mut out = vec![0.0; dim * l];
            for (j, &id) in ids.iter().enumerate() {
                for k in 0..dim {
                    out[k * l + j] = d[id * dim + k];
                }
            }
            out
        });
        Ok(self.push(
            Tensor::from_parts(vec![dim, l], out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
                dim,
            },
        ))
    }

    // ---- reverse sweep --------------------------------------------------

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Returns gradients for every requires-grad leaf; leaves the loss does
    /// not depend on get a zero gradient. Multiple uses of a value sum.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_node = nodes.get(loss.0).ok_or(SanError::OutOfRange {
            what: "tape node",
            index: loss.0,
            size: nodes.len(),
        })?;
        if loss_node.value.len() != 1 {
            return Err(SanError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[id].take() else { continue };
            let y = node.value.data();
            let mut send = |v: Var, delta: Vec<f64>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(g) => add_into(g, &delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            let val = |v: Var| nodes[v.0].value.data();
            let needs = |v: Var| nodes[v.0].requires_grad;

            match &node.op {
                Op::Leaf => {}
                &Op::MatMul { a, b, p, q, r } => {
                    if needs(a) {
                        let bd = val(b);
                        let mut da = vec![0.0; p * q];
                        for i in 0..p {
                            let grow = &gy[i * r..(i + 1) * r];
                            for k in 0..q {
                                let brow = &bd[k * r..(k + 1) * r];
                                da[i * q + k] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            }
                        }
                        send(a, da);
                    }
                    if needs(b) {
                        let ad = val(a);
                        let mut db = vec![0.0; q * r];
                        for i in 0..p {
                            let grow = &gy[i * r..(i + 1) * r];
                            for k in 0..q {
                                let aik = ad[i * q + k];
                                for (d, g) in db[k * r..(k + 1) * r].iter_mut().zip(grow) {
                                    *d += aik * g;
                                }
                            }
                        }
                        send(b, db);
                    }
                }
                &Op::Add(a, b) => {
                    if needs(a) {
                        send(a, gy.clone());
                    }
                    send(b, gy);
                }
                &Op::Sub(a, b) => {
                    if needs(a) {
                        send(a, gy.clone());
                    }
                    send(b, gy.iter().map(|g| -g).collect());
                }
                &Op::Mul(a, b) => {
                    if needs(a) {
                        send(a, gy.iter().zip(val(b)).map(|(g, y)| g * y).collect());
                    }
                    if needs(b) {
                        send(b, gy.iter().zip(val(a)).map(|(g, x)| g * x).collect());
                    }
                }
                &Op::Abs(x) => {
                    let sign = |v: f64| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    };
                    send(x, gy.iter().zip(val(x)).map(|(g, &v)| g * sign(v)).collect());
                }
                &Op::AddBias { x, bias, cols } => {
                    if needs(bias) {
                        let db = gy.chunks(cols).map(|row| row.iter().sum()).collect();
                        send(bias, db);
                    }
                    send(x, gy);
                }
                &Op::Affine { x, scale } => {
                    send(x, gy.iter().map(|g| g * scale).collect());
                }
                &Op::DivScalar { x, divisor } => {
                    send(x, gy.iter().map(|g| g / divisor).collect());
                }
                &Op::Relu(x) => {
                    send(
                        x,
                        gy.iter()
                            .zip(val(x))
                            .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                            .collect(),
                    );
                }
                &Op::Sigmoid(x) => {
                    send(x, gy.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect());
                }
                &Op::Tanh(x) => {
                    send(x, gy.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect());
                }
                &Op::Log(x) => {
                    send(x, gy.iter().zip(val(x)).map(|(g, v)| g / v).collect());
                }
                &Op::Softmax { x, axis, rows, cols } => {
                    let mut dx = vec![0.0; rows * cols];
                    let (n_slices, len) = if axis == 0 { (cols, rows) } else { (rows, cols) };
                    let index = |s: usize, k: usize| if axis == 0 { k * cols + s } else { s * cols + k };
                    for s in 0..n_slices {
                        let dot: f64 = (0..len).map(|k| y[index(s, k)] * gy[index(s, k)]).sum();
                        for k in 0..len {
                            let i = index(s, k);
                            dx[i] = y[i] * (gy[i] - dot);
                        }
                    }
                    send(x, dx);
                }
                Op::Concat {
                    parts,
                    axis,
                    sizes,
                    rows,
                    cols,
                } => {
                    let mut offset = 0;
                    for (&p, &size) in parts.iter().zip(sizes) {
                        if needs(p) {
                            let piece = if *axis == 0 {
                                gy[offset * cols..(offset + size) * cols].to_vec()
                            } else {
                                let mut piece = Vec::with_capacity(rows * size);
                                for i in 0..*rows {
                                    piece.extend_from_slice(&gy[i * cols + offset..i * cols + offset + size]);
                                }
                                piece
                            };
                            send(p, piece);
                        }
                        offset += size;
                    }
                }
                &Op::Slice {
                    x,
                    axis,
                    start,
                    rows,
                    cols,
                } => {
                    let mut dx = vec![0.0; rows * cols];
                    if axis == 0 {
                        dx[start * cols..start * cols + gy.len()].copy_from_slice(&gy);
                    } else {
                        let len = gy.len() / rows;
                        for i in 0..rows {
                            dx[i * cols + start..i * cols + start + len].copy_from_slice(&gy[i * len..(i + 1) * len]);
                        }
                    }
                    send(x, dx);
                }
                &Op::Transpose { x, rows, cols } => {
                    let mut dx = vec![0.0; rows * cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            dx[i * cols + j] = gy[j * rows + i];
                        }
                    }
                    send(x, dx);
                }
                &Op::Sum(x) => {
                    send(x, vec![gy[0]; val(x).len()]);
                }
                &Op::LstmGates { pre, c_prev, hidden } => {
                    let (a, cp) = (val(pre), val(c_prev));
                    let mut dpre = vec![0.0; 4 * hidden];
                    let mut dc_prev = vec![0.0; hidden];
                    for k in 0..hidden {
                        let i = sigmoid(a[k]);
                        let f = sigmoid(a[hidden + k]);
                        let g = a[2 * hidden + k].tanh();
                        let o = sigmoid(a[3 * hidden + k]);
                        let tc = y[hidden + k].tanh();
                        let dc = gy[hidden + k] + gy[k] * o * (1.0 - tc * tc);
                        dpre[k] = dc * g * i * (1.0 - i);
                        dpre[hidden + k] = dc * cp[k] * f * (1.0 - f);
                        dpre[2 * hidden + k] = dc * i * (1.0 - g * g);
                        dpre[3 * hidden + k] = gy[k] * tc * o * (1.0 - o);
                        dc_prev[k] = dc * f;
                    }
                    send(pre, dpre);
                    send(c_prev, dc_prev);
                }
                &Op::Pick { x, index } => {
                    let mut dx = vec![0.0; val(x).len()];
                    dx[index] = gy[0];
                    send(x, dx);
                }
                Op::RowMax { x, cols, argmax } => {
                    let mut dx = vec![0.0; val(*x).len()];
                    for (i, &k) in argmax.iter().enumerate() {
                        dx[i * cols + k] = gy[i];
                    }
                    send(*x, dx);
                }
                Op::Maxout { x, cols, argmax } => {
                    let mut dx = vec![0.0; val(*x).len()];
                    for (o, &src) in argmax.iter().enumerate() {
                        let j = o % cols;
                        dx[src * cols + j] += gy[o];
                    }
                    send(*x, dx);
                }
                &Op::WeightNorm { v, g, norm } => {
                    let vd = val(v);
                    let gain = val(g)[0];
                    let dot: f64 = vd.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>() / norm;
                    if needs(g) {
                        send(g, vec![dot]);
                    }
                    if needs(v) {
                        let dv = vd
                            .iter()
                            .zip(&gy)
                            .map(|(&a, &b)| gain / norm * (b - a / norm * dot))
                            .collect();
                        send(v, dv);
                    }
                }
                Op::Gather { table, ids, dim } => {
                    let l = ids.len();
                    let mut dt = vec![0.0; val(*table).len()];
                    for (j, &id) in ids.iter().enumerate() {
                        for k in 0..*dim {
                            dt[id * dim + k] += gy[k * l + j];
                        }
                    }
                    send(*table, dt);
                }
            }
        }

        let out = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                if matches!(node.op, Op::Leaf) && node.requires_grad {
                    let shape = node.value.shape().to_vec();
                    Some(match g {
                        Some(g) => Tensor::from_parts(shape, g),
                        None => Tensor::zeros(&shape),
                    })
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients { grads: out })
    }
}
