//! Static compute graphs with reverse-mode gradient accumulation.
//!
//! A [`Graph`] is built once per model topology; [`Graph::forward`] and
//! [`Graph::backward`] then run it for arbitrary parameter/input bindings.
//! Evaluation is single-threaded per call and bitwise deterministic for
//! fixed bindings and dropout key; distinct calls may run on distinct
//! threads.

use std::collections::BTreeMap;

use super::rng::CounterRng;
use super::tensor::{Real, Tensor};
use super::DiffError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Input(String),
    Param(String),
    Const(Tensor<T>),
    /// y = W x + b with W: [out, in], x: [in], b: [out].
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    /// 1-D convolution over x: [c_in, l], w: [c_out, c_in, k], b: [c_out].
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    },
    /// 1-D transposed convolution; w: [c_in, c_out, k].
    TConv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    },
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    Reshape(NodeId),
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    Dropout {
        x: NodeId,
        rate: f64,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    shape: Vec<usize>,
}

/// Named tensor bindings for graph inputs or parameters.
#[derive(Clone, Debug, Default)]
pub struct Bindings<T> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Bindings<T> {
    pub fn new() -> Self {
        Bindings {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.map.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.map.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.map.remove(name)
    }

    /// Sorted-name iteration; the order every consumer relies on.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }
}

impl<T: Real> FromIterator<(String, Tensor<T>)> for Bindings<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Bindings {
            map: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOpts {
    /// Train mode activates dropout masks.
    pub train: bool,
    /// Stream key for dropout masks; replayed by backward.
    pub dropout_key: u64,
}

impl Default for EvalOpts {
    fn default() -> Self {
        EvalOpts {
            train: false,
            dropout_key: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    inputs: BTreeMap<String, NodeId>,
    params: BTreeMap<String, NodeId>,
    outputs: BTreeMap<String, NodeId>,
}

/// Incremental graph construction with shape checking at build time.
pub struct GraphBuilder<T> {
    nodes: Vec<Node<T>>,
    inputs: BTreeMap<String, NodeId>,
    params: BTreeMap<String, NodeId>,
}

impl<T: Real> Default for GraphBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> GraphBuilder<T> {
    pub fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
        }
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, shape });
        id
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0].shape.iter().product()
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId, DiffError> {
        if self.inputs.contains_key(name) || self.params.contains_key(name) {
            return Err(DiffError::Contract(format!("duplicate leaf name {name}")));
        }
        let id = self.push(Op::Input(name.to_string()), shape.to_vec());
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId, DiffError> {
        if self.inputs.contains_key(name) || self.params.contains_key(name) {
            return Err(DiffError::Contract(format!("duplicate leaf name {name}")));
        }
        let id = self.push(Op::Param(name.to_string()), shape.to_vec());
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> NodeId {
        let shape = tensor.shape().to_vec();
        self.push(Op::Const(tensor), shape)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(T::of(value)))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (xs, ws, bs) = (
            self.shape_of(x).to_vec(),
            self.shape_of(w).to_vec(),
            self.shape_of(b).to_vec(),
        );
        if ws.len() != 2 || bs.len() != 1 || ws[1] != self.len_of(x) || ws[0] != bs[0] {
            return Err(DiffError::Shape(format!(
                "affine: x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let out = ws[0];
        Ok(self.push(Op::Affine { x, w, b }, vec![out]))
    }

    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, DiffError> {
        let (xs, ws, bs) = (
            self.shape_of(x).to_vec(),
            self.shape_of(w).to_vec(),
            self.shape_of(b).to_vec(),
        );
        if xs.len() != 2 || ws.len() != 3 || bs.len() != 1 {
            return Err(DiffError::Shape(format!(
                "conv1d: x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let (c_in, l) = (xs[0], xs[1]);
        let (c_out, k) = (ws[0], ws[2]);
        if ws[1] != c_in || bs[0] != c_out || l + 2 * pad < k {
            return Err(DiffError::Shape(format!(
                "conv1d: x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let l_out = (l + 2 * pad - k) / stride + 1;
        Ok(self.push(
            Op::Conv1d { x, w, b, stride, pad },
            vec![c_out, l_out],
        ))
    }

    pub fn tconv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, DiffError> {
        let (xs, ws, bs) = (
            self.shape_of(x).to_vec(),
            self.shape_of(w).to_vec(),
            self.shape_of(b).to_vec(),
        );
        if xs.len() != 2 || ws.len() != 3 || bs.len() != 1 {
            return Err(DiffError::Shape(format!(
                "tconv1d: x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let (c_in, l) = (xs[0], xs[1]);
        let (c_out, k) = (ws[1], ws[2]);
        if ws[0] != c_in || bs[0] != c_out || (l - 1) * stride + k < 2 * pad {
            return Err(DiffError::Shape(format!(
                "tconv1d: x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let l_out = (l - 1) * stride + k - 2 * pad;
        Ok(self.push(
            Op::TConv1d { x, w, b, stride, pad },
            vec![c_out, l_out],
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Relu(x), shape)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Exp(x), shape)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Log(x), shape)
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Sqrt(x), shape)
    }

    /// Output shape for an elementwise binary op: identical shapes, or one
    /// side a `[1]` scalar broadcast over the other.
    fn binary_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<Vec<usize>, DiffError> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa == sb {
            return Ok(sa.to_vec());
        }
        if self.len_of(a) == 1 {
            return Ok(sb.to_vec());
        }
        if self.len_of(b) == 1 {
            return Ok(sa.to_vec());
        }
        Err(DiffError::Shape(format!("{what}: {sa:?} vs {sb:?}")))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let shape = self.binary_shape(a, b, "add")?;
        Ok(self.push(Op::Add(a, b), shape))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let shape = self.binary_shape(a, b, "sub")?;
        Ok(self.push(Op::Sub(a, b), shape))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let shape = self.binary_shape(a, b, "mul")?;
        Ok(self.push(Op::Mul(a, b), shape))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let shape = self.binary_shape(a, b, "div")?;
        Ok(self.push(Op::Div(a, b), shape))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x), vec![1])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x), vec![1])
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let shape = self.shape_of(x).to_vec();
        if shape.len() != 1 {
            return Err(DiffError::Shape(format!("softmax wants a vector: {shape:?}")));
        }
        Ok(self.push(Op::Softmax(x), shape))
    }

    /// Concatenate vectors (flattened) into one vector.
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId, DiffError> {
        if xs.is_empty() {
            return Err(DiffError::Contract("concat of nothing".into()));
        }
        let total: usize = xs.iter().map(|&x| self.len_of(x)).sum();
        Ok(self.push(Op::Concat(xs.to_vec()), vec![total]))
    }

    /// 1-D slice of the flattened node.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, DiffError> {
        if start + len > self.len_of(x) {
            return Err(DiffError::Shape(format!(
                "slice [{start}, {start}+{len}) out of {}",
                self.len_of(x)
            )));
        }
        Ok(self.push(Op::Slice { x, start, len }, vec![len]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, DiffError> {
        if shape.iter().product::<usize>() != self.len_of(x) {
            return Err(DiffError::Shape(format!(
                "reshape {:?} to {shape:?}",
                self.shape_of(x)
            )));
        }
        self.nodes.push(Node {
            op: Op::Reshape(x),
            shape: shape.to_vec(),
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Clamp { x, lo, hi }, shape)
    }

    pub fn dropout(&mut self, x: NodeId, rate: f64) -> Result<NodeId, DiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(DiffError::Contract(format!("dropout rate {rate}")));
        }
        let shape = self.shape_of(x).to_vec();
        Ok(self.push(Op::Dropout { x, rate }, shape))
    }

    pub fn finish(self, outputs: &[(&str, NodeId)]) -> Graph<T> {
        Graph {
            nodes: self.nodes,
            inputs: self.inputs,
            params: self.params,
            outputs: outputs
                .iter()
                .map(|(name, id)| (name.to_string(), *id))
                .collect(),
        }
    }
}

/// Forward values for every computed node of one evaluation.
pub struct Execution<T> {
    values: Vec<Option<Tensor<T>>>,
    masks: Vec<Option<Vec<bool>>>,
}

impl<T: Real> Execution<T> {
    pub fn value(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.values.get(id.0).and_then(|v| v.as_ref())
    }
}

/// Gradients per node from one backward pass.
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn node(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.by_node.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradients for every parameter leaf, zero-filled when unused.
    pub fn into_param_grads(mut self, graph: &Graph<T>) -> Bindings<T> {
        let mut out = Bindings::new();
        for (name, id) in &graph.params {
            let g = self.by_node[id.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(&graph.nodes[id.0].shape));
            out.insert(name.clone(), g);
        }
        out
    }

    pub fn input_grad(&self, graph: &Graph<T>, name: &str) -> Option<&Tensor<T>> {
        graph
            .inputs
            .get(name)
            .and_then(|id| self.by_node[id.0].as_ref())
    }
}

impl<T: Real> Graph<T> {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn output(&self, name: &str) -> Result<NodeId, DiffError> {
        self.outputs
            .get(name)
            .copied()
            .ok_or_else(|| DiffError::Contract(format!("no output named {name}")))
    }

    pub fn input_names(&self) -> impl Iterator<Item = &String> {
        self.inputs.keys()
    }

    /// Parameter leaves as (name, shape).
    pub fn param_shapes(&self) -> impl Iterator<Item = (&String, &[usize])> {
        self.params
            .iter()
            .map(|(name, id)| (name, self.nodes[id.0].shape.as_slice()))
    }

    pub fn node_shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    fn leaf<'a>(
        &self,
        name: &str,
        shape: &[usize],
        source: &'a Bindings<T>,
        kind: &str,
    ) -> Result<&'a Tensor<T>, DiffError> {
        let t = source
            .get(name)
            .ok_or_else(|| DiffError::Contract(format!("missing {kind} {name}")))?;
        if t.shape() != shape {
            return Err(DiffError::Shape(format!(
                "{kind} {name}: bound {:?}, declared {:?}",
                t.shape(),
                shape
            )));
        }
        Ok(t)
    }

    pub fn forward(
        &self,
        params: &Bindings<T>,
        inputs: &Bindings<T>,
        opts: EvalOpts,
    ) -> Result<Execution<T>, DiffError> {
        let mut values: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        let mut masks: Vec<Option<Vec<bool>>> = vec![None; self.nodes.len()];

        // Resolves an operand: leaves read straight from the bindings.
        macro_rules! val {
            ($id:expr) => {{
                let id: NodeId = $id;
                match &self.nodes[id.0].op {
                    Op::Input(name) => self.leaf(name, &self.nodes[id.0].shape, inputs, "input")?,
                    Op::Param(name) => self.leaf(name, &self.nodes[id.0].shape, params, "param")?,
                    Op::Const(t) => t,
                    _ => values[id.0].as_ref().expect("topological order"),
                }
            }};
        }

        for idx in 0..self.nodes.len() {
            let shape = self.nodes[idx].shape.clone();
            let out: Option<Tensor<T>> = match &self.nodes[idx].op {
                Op::Input(name) => {
                    self.leaf(name, &shape, inputs, "input")?;
                    None
                }
                Op::Param(name) => {
                    self.leaf(name, &shape, params, "param")?;
                    None
                }
                Op::Const(_) => None,
                Op::Affine { x, w, b } => {
                    Some(affine_forward(val!(*x), val!(*w), val!(*b)))
                }
                Op::Conv1d { x, w, b, stride, pad } => {
                    Some(conv1d_forward(val!(*x), val!(*w), val!(*b), *stride, *pad))
                }
                Op::TConv1d { x, w, b, stride, pad } => {
                    Some(tconv1d_forward(val!(*x), val!(*w), val!(*b), *stride, *pad))
                }
                Op::Relu(x) => Some(map_unary(val!(*x), |v| {
                    if v > T::zero() {
                        v
                    } else {
                        T::zero()
                    }
                })),
                Op::Exp(x) => Some(map_unary(val!(*x), |v| v.exp())),
                Op::Log(x) => Some(map_unary(val!(*x), |v| v.ln())),
                Op::Sqrt(x) => Some(map_unary(val!(*x), |v| v.sqrt())),
                Op::Add(a, b) => Some(zip_binary(val!(*a), val!(*b), &shape, |x, y| x + y)),
                Op::Sub(a, b) => Some(zip_binary(val!(*a), val!(*b), &shape, |x, y| x - y)),
                Op::Mul(a, b) => Some(zip_binary(val!(*a), val!(*b), &shape, |x, y| x * y)),
                Op::Div(a, b) => Some(zip_binary(val!(*a), val!(*b), &shape, |x, y| x / y)),
                Op::Sum(x) => Some(Tensor::scalar(val!(*x).data().iter().copied().sum())),
                Op::Mean(x) => {
                    let t = val!(*x);
                    let n = T::of(t.len() as f64);
                    Some(Tensor::scalar(
                        t.data().iter().copied().sum::<T>() / n,
                    ))
                }
                Op::Softmax(x) => Some(softmax_forward(val!(*x))),
                Op::Concat(xs) => {
                    let mut data = Vec::with_capacity(shape[0]);
                    for x in xs {
                        data.extend_from_slice(val!(*x).data());
                    }
                    Some(Tensor::new(shape.clone(), data)?)
                }
                Op::Slice { x, start, len } => {
                    let t = val!(*x);
                    Some(Tensor::new(
                        vec![*len],
                        t.data()[*start..*start + *len].to_vec(),
                    )?)
                }
                Op::Reshape(x) => Some(val!(*x).clone().reshaped(shape.clone())?),
                Op::Clamp { x, lo, hi } => {
                    let (lo, hi) = (T::of(*lo), T::of(*hi));
                    Some(map_unary(val!(*x), |v| {
                        if v < lo {
                            lo
                        } else if v > hi {
                            hi
                        } else {
                            v
                        }
                    }))
                }
                Op::Dropout { x, rate } => {
                    let t = val!(*x);
                    if !opts.train || *rate == 0.0 {
                        Some(t.clone())
                    } else {
                        let mut rng =
                            CounterRng::new(opts.dropout_key).derive(idx as u64);
                        let keep = 1.0 - rate;
                        let scale = T::of(1.0 / keep);
                        let mask: Vec<bool> =
                            (0..t.len()).map(|_| rng.uniform() < keep).collect();
                        let data: Vec<T> = t
                            .data()
                            .iter()
                            .zip(mask.iter())
                            .map(|(&v, &m)| if m { v * scale } else { T::zero() })
                            .collect();
                        masks[idx] = Some(mask);
                        Some(Tensor::new(shape.clone(), data)?)
                    }
                }
            };
            values[idx] = out;
        }

        Ok(Execution { values, masks })
    }

    /// Reverse-mode gradients of a scalar loss node. Requires the
    /// [`Execution`] produced by a matching `forward` call.
    pub fn backward(
        &self,
        params: &Bindings<T>,
        inputs: &Bindings<T>,
        exec: &Execution<T>,
        loss: NodeId,
    ) -> Result<Gradients<T>, DiffError> {
        if self.nodes[loss.0].shape.iter().product::<usize>() != 1 {
            return Err(DiffError::Contract(format!(
                "loss must be scalar, shape {:?}",
                self.nodes[loss.0].shape
            )));
        }

        let value = |id: NodeId| -> Result<&Tensor<T>, DiffError> {
            match &self.nodes[id.0].op {
                Op::Input(name) => self.leaf(name, &self.nodes[id.0].shape, inputs, "input"),
                Op::Param(name) => self.leaf(name, &self.nodes[id.0].shape, params, "param"),
                Op::Const(t) => Ok(t),
                _ => exec.values[id.0]
                    .as_ref()
                    .ok_or_else(|| DiffError::Contract("stale execution".into())),
            }
        };

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(&self.nodes[loss.0].shape, T::one()));

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input(_) | Op::Param(_) | Op::Const(_) => {
                    // Leaves keep their gradient.
                    grads[idx] = Some(g);
                }
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (value(*x)?, value(*w)?);
                    let (n_out, n_in) = (wv.shape()[0], wv.shape()[1]);
                    let mut dx = vec![T::zero(); n_in];
                    let mut dw = vec![T::zero(); n_out * n_in];
                    for o in 0..n_out {
                        let go = g.data()[o];
                        let row = &wv.data()[o * n_in..(o + 1) * n_in];
                        for i in 0..n_in {
                            dx[i] += row[i] * go;
                            dw[o * n_in + i] = xv.data()[i] * go;
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                    accumulate(&mut grads, *w, Tensor::new(wv.shape().to_vec(), dw)?);
                    accumulate(&mut grads, *b, Tensor::from_vec(g.data().to_vec()));
                }
                Op::Conv1d { x, w, b, stride, pad } => {
                    let (xv, wv) = (value(*x)?, value(*w)?);
                    let (dx, dw, db) = conv1d_backward(xv, wv, &g, *stride, *pad);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::TConv1d { x, w, b, stride, pad } => {
                    let (xv, wv) = (value(*x)?, value(*w)?);
                    let (dx, dw, db) = tconv1d_backward(xv, wv, &g, *stride, *pad);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu(x) => {
                    let xv = value(*x)?;
                    let data: Vec<T> = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &go)| if v > T::zero() { go } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Exp(x) => {
                    let yv = exec.values[idx].as_ref().expect("computed");
                    let data: Vec<T> = yv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &go)| y * go)
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(yv.shape().to_vec(), data)?);
                }
                Op::Log(x) => {
                    let xv = value(*x)?;
                    let data: Vec<T> = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &go)| go / v)
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Sqrt(x) => {
                    let yv = exec.values[idx].as_ref().expect("computed");
                    let two = T::of(2.0);
                    let data: Vec<T> = yv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &go)| go / (two * y))
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(yv.shape().to_vec(), data)?);
                }
                Op::Add(a, b) => {
                    let (av, bv) = (value(*a)?, value(*b)?);
                    accumulate(&mut grads, *a, reduce_to(&g, av));
                    accumulate(&mut grads, *b, reduce_to(&g, bv));
                }
                Op::Sub(a, b) => {
                    let (av, bv) = (value(*a)?, value(*b)?);
                    accumulate(&mut grads, *a, reduce_to(&g, av));
                    let neg = map_unary(&g, |v| -v);
                    accumulate(&mut grads, *b, reduce_to(&neg, bv));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (value(*a)?, value(*b)?);
                    let ga = zip_binary(&g, bv, g.shape(), |x, y| x * y);
                    let gb = zip_binary(&g, av, g.shape(), |x, y| x * y);
                    accumulate(&mut grads, *a, reduce_to(&ga, av));
                    accumulate(&mut grads, *b, reduce_to(&gb, bv));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (value(*a)?, value(*b)?);
                    // d(a/b)/da = 1/b; d(a/b)/db = -a/b^2
                    let ga = zip_binary(&g, bv, g.shape(), |go, y| go / y);
                    let num = zip_binary(&g, av, g.shape(), |go, x| go * x);
                    let den = zip_binary(&num, bv, num.shape(), |n, y| -(n / (y * y)));
                    accumulate(&mut grads, *a, reduce_to(&ga, av));
                    accumulate(&mut grads, *b, reduce_to(&den, bv));
                }
                Op::Sum(x) => {
                    let xv = value(*x)?;
                    let go = g.data()[0];
                    accumulate(&mut grads, *x, Tensor::filled(xv.shape(), go));
                }
                Op::Mean(x) => {
                    let xv = value(*x)?;
                    let go = g.data()[0] / T::of(xv.len() as f64);
                    accumulate(&mut grads, *x, Tensor::filled(xv.shape(), go));
                }
                Op::Softmax(x) => {
                    let yv = exec.values[idx].as_ref().expect("computed");
                    let dot: T = yv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &go)| y * go)
                        .sum();
                    let data: Vec<T> = yv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &go)| y * (go - dot))
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(yv.shape().to_vec(), data)?);
                }
                Op::Concat(xs) => {
                    let mut offset = 0;
                    for x in xs {
                        let xv = value(*x)?;
                        let part = Tensor::new(
                            xv.shape().to_vec(),
                            g.data()[offset..offset + xv.len()].to_vec(),
                        )?;
                        offset += xv.len();
                        accumulate(&mut grads, *x, part);
                    }
                }
                Op::Slice { x, start, len } => {
                    let xv = value(*x)?;
                    let mut dx = Tensor::zeros(xv.shape());
                    dx.data_mut()[*start..*start + *len].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape(x) => {
                    let xv = value(*x)?;
                    accumulate(
                        &mut grads,
                        *x,
                        g.clone().reshaped(xv.shape().to_vec())?,
                    );
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = value(*x)?;
                    let (lo, hi) = (T::of(*lo), T::of(*hi));
                    let data: Vec<T> = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &go)| {
                            if v >= lo && v <= hi {
                                go
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Dropout { x, rate } => {
                    let xv = value(*x)?;
                    match &exec.masks[idx] {
                        None => accumulate(&mut grads, *x, g),
                        Some(mask) => {
                            let scale = T::of(1.0 / (1.0 - rate));
                            let data: Vec<T> = g
                                .data()
                                .iter()
                                .zip(mask.iter())
                                .map(|(&go, &m)| if m { go * scale } else { T::zero() })
                                .collect();
                            accumulate(
                                &mut grads,
                                *x,
                                Tensor::new(xv.shape().to_vec(), data)?,
                            );
                        }
                    }
                }
            }
        }

        Ok(Gradients { by_node: grads })
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
    match &mut grads[id.index()] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map_unary<T: Real>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
        .expect("same shape")
}

/// Elementwise binary with `[1]`-scalar broadcast on either side.
fn zip_binary<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    out_shape: &[usize],
    f: impl Fn(T, T) -> T,
) -> Tensor<T> {
    let data: Vec<T> = if a.len() == b.len() {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect()
    } else if a.len() == 1 {
        let x = a.data()[0];
        b.data().iter().map(|&y| f(x, y)).collect()
    } else {
        let y = b.data()[0];
        a.data().iter().map(|&x| f(x, y)).collect()
    };
    Tensor::new(out_shape.to_vec(), data).expect("builder-checked shape")
}

/// Sum a broadcast gradient back down to the operand's shape.
fn reduce_to<T: Real>(g: &Tensor<T>, operand: &Tensor<T>) -> Tensor<T> {
    if g.len() == operand.len() {
        Tensor::new(operand.shape().to_vec(), g.data().to_vec()).expect("same len")
    } else {
        Tensor::new(
            operand.shape().to_vec(),
            vec![g.data().iter().copied().sum()],
        )
        .expect("scalar")
    }
}

fn softmax_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let max = x
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = x.data().iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::new(x.shape().to_vec(), exps.into_iter().map(|e| e / total).collect())
        .expect("same shape")
}

fn affine_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
    let mut out = b.data().to_vec();
    for o in 0..n_out {
        let row = &w.data()[o * n_in..(o + 1) * n_in];
        let mut acc = T::zero();
        for i in 0..n_in {
            acc += row[i] * x.data()[i];
        }
        out[o] += acc;
    }
    Tensor::new(vec![n_out], out).expect("affine shape")
}

fn conv1d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let (c_in, l) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let l_out = (l + 2 * pad - k) / stride + 1;
    let mut out = vec![T::zero(); c_out * l_out];
    for o in 0..c_out {
        let bias = b.data()[o];
        for j in 0..l_out {
            let mut acc = bias;
            for c in 0..c_in {
                let xrow = &x.data()[c * l..(c + 1) * l];
                let wrow = &w.data()[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for (t, &wv) in wrow.iter().enumerate() {
                    let pos = j * stride + t;
                    if pos >= pad && pos - pad < l {
                        acc += wv * xrow[pos - pad];
                    }
                }
            }
            out[o * l_out + j] = acc;
        }
    }
    Tensor::new(vec![c_out, l_out], out).expect("conv shape")
}

fn conv1d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (c_in, l) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let l_out = g.shape()[1];
    let mut dx = vec![T::zero(); c_in * l];
    let mut dw = vec![T::zero(); c_out * c_in * k];
    let mut db = vec![T::zero(); c_out];
    for o in 0..c_out {
        let grow = &g.data()[o * l_out..(o + 1) * l_out];
        db[o] = grow.iter().copied().sum();
        for j in 0..l_out {
            let go = grow[j];
            for c in 0..c_in {
                for t in 0..k {
                    let pos = j * stride + t;
                    if pos >= pad && pos - pad < l {
                        let i = pos - pad;
                        dw[(o * c_in + c) * k + t] += go * x.data()[c * l + i];
                        dx[c * l + i] += go * w.data()[(o * c_in + c) * k + t];
                    }
                }
            }
        }
    }
    (
        Tensor::new(vec![c_in, l], dx).expect("dx"),
        Tensor::new(vec![c_out, c_in, k], dw).expect("dw"),
        Tensor::new(vec![c_out], db).expect("db"),
    )
}

fn tconv1d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let (c_in, l) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (w.shape()[1], w.shape()[2]);
    let l_out = (l - 1) * stride + k - 2 * pad;
    let mut out = vec![T::zero(); c_out * l_out];
    for o in 0..c_out {
        let bias = b.data()[o];
        for v in &mut out[o * l_out..(o + 1) * l_out] {
            *v = bias;
        }
    }
    for c in 0..c_in {
        let xrow = &x.data()[c * l..(c + 1) * l];
        for i in 0..l {
            let xv = xrow[i];
            for t in 0..k {
                let pos = i * stride + t;
                if pos >= pad && pos - pad < l_out {
                    let j = pos - pad;
                    for o in 0..c_out {
                        out[o * l_out + j] += xv * w.data()[(c * c_out + o) * k + t];
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, l_out], out).expect("tconv shape")
}

fn tconv1d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (c_in, l) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (w.shape()[1], w.shape()[2]);
    let l_out = g.shape()[1];
    let mut dx = vec![T::zero(); c_in * l];
    let mut dw = vec![T::zero(); c_in * c_out * k];
    let mut db = vec![T::zero(); c_out];
    for o in 0..c_out {
        db[o] = g.data()[o * l_out..(o + 1) * l_out].iter().copied().sum();
    }
    for c in 0..c_in {
        let xrow = &x.data()[c * l..(c + 1) * l];
        for i in 0..l {
            let xv = xrow[i];
            let mut acc = T::zero();
            for t in 0..k {
                let pos = i * stride + t;
                if pos >= pad && pos - pad < l_out {
                    let j = pos - pad;
                    for o in 0..c_out {
                        let go = g.data()[o * l_out + j];
                        acc += go * w.data()[(c * c_out + o) * k + t];
                        dw[(c * c_out + o) * k + t] += go * xv;
                    }
                }
            }
            dx[c * l + i] = acc;
        }
    }
    (
        Tensor::new(vec![c_in, l], dx).expect("dx"),
        Tensor::new(vec![c_in, c_out, k], dw).expect("dw"),
        Tensor::new(vec![c_out], db).expect("db"),
    )
}
