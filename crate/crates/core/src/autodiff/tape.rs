use super::{Mat, Scalar};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// Row-major `rows × cols` view of a flat node starting at `offset`.
    Slice { src: usize, offset: usize },
    MatMul(usize, usize),
    Add(usize, usize),
    /// Adds a `1 × m` row to every row of an `n × m` matrix.
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    /// Column means of an `n × m` matrix as a `1 × m` row.
    MeanRows(usize),
    /// Repeats a `1 × m` row `n` times.
    BroadcastRows(usize),
    ConcatCols(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Slice { .. } => "slice",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "affine",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MeanRows(_) => "mean_rows",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::ConcatCols(..) => "concat_cols",
        }
    }
}

struct Node<S> {
    op: Op,
    value: Mat<S>,
}

/// Reverse-mode tape over matrix-valued nodes.
///
/// Nodes are appended in evaluation order, so parents always precede children
/// and the backward sweep is a single reverse pass.
pub struct Graph<S: Scalar = f64> {
    nodes: Vec<Node<S>>,
    nonfinite: Option<(usize, &'static str)>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Mean computed in a canonical order: values sorted, then a running mean.
///
/// Identical for any permutation of the inputs, and exactly `x` when every
/// input equals `x`.
fn canonical_mean<S: Scalar>(values: &mut [S]) -> S {
    values.sort_by(|a, b| a.total_cmp(b));
    let mut mean = values[0];
    for (i, &v) in values.iter().enumerate().skip(1) {
        mean += (v - mean).scale(1.0 / (i + 1) as f64);
    }
    mean
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(32),
            nonfinite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat<S> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> S {
        let m = self.value(v);
        assert_eq!(m.len(), 1, "node is not a scalar");
        m.data[0]
    }

    fn push(&mut self, op: Op, value: Mat<S>) -> Var {
        let id = self.nodes.len();
        if self.nonfinite.is_none() && value.data.iter().any(|v| !v.is_finite()) {
            self.nonfinite = Some((id, op.name()));
        }
        self.nodes.push(Node { op, value });
        Var(id)
    }

    pub fn leaf(&mut self, value: Mat<S>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: &Mat<f64>) -> Var {
        self.push(Op::Leaf, Mat::from_f64(value))
    }

    pub fn slice(&mut self, src: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let s = &self.nodes[src.0].value;
        assert!(offset + rows * cols <= s.len(), "slice out of bounds");
        let value = Mat::from_vec(rows, cols, s.data[offset..offset + rows * cols].to_vec());
        self.push(Op::Slice { src: src.0, offset }, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a.0, b.0), value)
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Mat<S> {
        let (x, y) = (self.value(a), self.value(b));
        assert!(x.same_shape(y), "shape mismatch {}x{} vs {}x{}", x.rows, x.cols, y.rows, y.cols);
        Mat::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p + q);
        self.push(Op::Add(a.0, b.0), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p - q);
        self.push(Op::Sub(a.0, b.0), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p * q);
        self.push(Op::Mul(a.0, b.0), value)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.rows == 1 && r.cols == x.cols, "bias row shape");
        let mut value = x.clone();
        for i in 0..value.rows {
            for (v, &b) in value.data[i * value.cols..(i + 1) * value.cols].iter_mut().zip(&r.data) {
                *v += b;
            }
        }
        self.push(Op::AddRow(a.0, row.0), value)
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v.scale(c));
        self.push(Op::Scale(a.0, c), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(S::tanh);
        self.push(Op::Tanh(a.0), value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(S::exp);
        self.push(Op::Exp(a.0), value)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(S::ln);
        self.push(Op::Log(a.0), value)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push(Op::Square(a.0), value)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = S::zero();
        for &v in &self.value(a).data {
            acc += v;
        }
        self.push(Op::Sum(a.0), Mat::from_vec(1, 1, vec![acc]))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut acc = S::zero();
        for &v in &x.data {
            acc += v;
        }
        let value = Mat::from_vec(1, 1, vec![acc.scale(1.0 / x.len() as f64)]);
        self.push(Op::Mean(a.0), value)
    }

    /// Column means, evaluated in an input-order-independent way.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert!(x.rows > 0, "mean over zero rows");
        let mut col = vec![S::zero(); x.rows];
        let mut out = Vec::with_capacity(x.cols);
        for j in 0..x.cols {
            for (i, c) in col.iter_mut().enumerate() {
                *c = x.at(i, j);
            }
            out.push(canonical_mean(&mut col));
        }
        let value = Mat::from_vec(1, x.cols, out);
        self.push(Op::MeanRows(a.0), value)
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, 1, "broadcast needs a single row");
        let mut data = Vec::with_capacity(n * x.cols);
        for _ in 0..n {
            data.extend_from_slice(&x.data);
        }
        let value = Mat::from_vec(n, x.cols, data);
        self.push(Op::BroadcastRows(a.0), value)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows, y.rows, "concat row mismatch");
        let cols = x.cols + y.cols;
        let mut data = Vec::with_capacity(x.rows * cols);
        for i in 0..x.rows {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(i));
        }
        let value = Mat::from_vec(x.rows, cols, data);
        self.push(Op::ConcatCols(a.0, b.0), value)
    }

    /// Fails if any recorded node produced a non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        match self.nonfinite {
            Some((node, op)) => Err(Error::NonFinite { op, node }),
            None => Ok(()),
        }
    }

    /// Adjoints of every node with respect to the scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Adjoints<S>> {
        self.check_finite()?;
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar node");
        let mut adj: Vec<Option<Mat<S>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Mat::from_vec(1, 1, vec![S::from_f64(1.0)]));

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            // Leaves keep their adjoint for the caller.
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[id].take() else { continue };
            match node.op {
                Op::Leaf => unreachable!(),
                Op::Slice { src, offset } => {
                    let s = &self.nodes[src].value;
                    let target = adj[src].get_or_insert_with(|| Mat::zeros(s.rows, s.cols));
                    for (t, &v) in target.data[offset..offset + g.len()].iter_mut().zip(&g.data) {
                        *t += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(&self.nodes[b].value);
                    let db = self.nodes[a].value.matmul_tn(&g);
                    accumulate(&mut adj, a, da);
                    accumulate(&mut adj, b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, b, g.clone());
                    accumulate(&mut adj, a, g);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Mat::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (d, &v) in dr.data.iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut adj, row, dr);
                    accumulate(&mut adj, a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, b, g.map(|v| -v));
                    accumulate(&mut adj, a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&self.nodes[a].value, &self.nodes[b].value);
                    let da = elementwise(&g, y, |gv, yv| gv * yv);
                    let db = elementwise(&g, x, |gv, xv| gv * xv);
                    accumulate(&mut adj, a, da);
                    accumulate(&mut adj, b, db);
                }
                Op::Scale(a, c) => accumulate(&mut adj, a, g.map(|v| v.scale(c))),
                Op::Tanh(a) => {
                    let d = elementwise(&g, &node.value, |gv, t| gv * (S::from_f64(1.0) - t * t));
                    accumulate(&mut adj, a, d);
                }
                Op::Exp(a) => {
                    let d = elementwise(&g, &node.value, |gv, e| gv * e);
                    accumulate(&mut adj, a, d);
                }
                Op::Log(a) => {
                    let d = elementwise(&g, &self.nodes[a].value, |gv, x| gv / x);
                    accumulate(&mut adj, a, d);
                }
                Op::Square(a) => {
                    let d = elementwise(&g, &self.nodes[a].value, |gv, x| (gv * x).scale(2.0));
                    accumulate(&mut adj, a, d);
                }
                Op::Sum(a) => {
                    let x = &self.nodes[a].value;
                    accumulate(&mut adj, a, Mat::from_vec(x.rows, x.cols, vec![g.data[0]; x.len()]));
                }
                Op::Mean(a) => {
                    let x = &self.nodes[a].value;
                    let v = g.data[0].scale(1.0 / x.len() as f64);
                    accumulate(&mut adj, a, Mat::from_vec(x.rows, x.cols, vec![v; x.len()]));
                }
                Op::MeanRows(a) => {
                    let x = &self.nodes[a].value;
                    let inv = 1.0 / x.rows as f64;
                    let row: Vec<S> = g.data.iter().map(|v| v.scale(inv)).collect();
                    let mut data = Vec::with_capacity(x.len());
                    for _ in 0..x.rows {
                        data.extend_from_slice(&row);
                    }
                    accumulate(&mut adj, a, Mat::from_vec(x.rows, x.cols, data));
                }
                Op::BroadcastRows(a) => {
                    let mut d = Mat::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (t, &v) in d.data.iter_mut().zip(g.row(i)) {
                            *t += v;
                        }
                    }
                    accumulate(&mut adj, a, d);
                }
                Op::ConcatCols(a, b) => {
                    let pa = self.nodes[a].value.cols;
                    let pb = self.nodes[b].value.cols;
                    let mut da = Vec::with_capacity(g.rows * pa);
                    let mut db = Vec::with_capacity(g.rows * pb);
                    for i in 0..g.rows {
                        let r = g.row(i);
                        da.extend_from_slice(&r[..pa]);
                        db.extend_from_slice(&r[pa..]);
                    }
                    accumulate(&mut adj, a, Mat::from_vec(g.rows, pa, da));
                    accumulate(&mut adj, b, Mat::from_vec(g.rows, pb, db));
                }
            }
        }
        Ok(Adjoints { adj })
    }
}

fn elementwise<S: Scalar>(g: &Mat<S>, x: &Mat<S>, f: impl Fn(S, S) -> S) -> Mat<S> {
    Mat::from_vec(
        g.rows,
        g.cols,
        g.data.iter().zip(&x.data).map(|(&a, &b)| f(a, b)).collect(),
    )
}

fn accumulate<S: Scalar>(adj: &mut [Option<Mat<S>>], id: usize, d: Mat<S>) {
    match &mut adj[id] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

/// Result of a backward sweep; only leaf adjoints are retained.
pub struct Adjoints<S: Scalar> {
    adj: Vec<Option<Mat<S>>>,
}

impl<S: Scalar> Adjoints<S> {
    /// Adjoint of a leaf, or `None` if the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat<S>> {
        self.adj.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of a leaf with zeros filled in for unreachable leaves.
    pub fn wrt(&self, graph: &Graph<S>, v: Var) -> Mat<S> {
        match self.get(v) {
            Some(m) => m.clone(),
            None => {
                let x = graph.value(v);
                Mat::zeros(x.rows, x.cols)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Mat::column(&[1.0, -2.0]));
        let sq = g.square(x);
        let loss = g.sum(sq);
        let adj = g.backward(loss).unwrap();
        assert_eq!(adj.wrt(&g, x).data, vec![2.0, -4.0]);
    }

    #[test]
    fn tanh_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Mat::column(&[0.0]));
        let t = g.tanh(x);
        let loss = g.sum(t);
        assert_eq!(g.backward(loss).unwrap().wrt(&g, x).data, vec![1.0]);
    }

    #[test]
    fn nonfinite_names_primitive() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Mat::column(&[0.0]));
        let l = g.log(x);
        let loss = g.sum(l);
        match g.backward(loss) {
            Err(Error::NonFinite { op, node }) => {
                assert_eq!(op, "log");
                assert_eq!(node, l.index());
            }
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn canonical_mean_is_order_free() {
        let mut a = vec![0.1, 0.7, -3.3, 1e-9, 42.0];
        let mut b = vec![42.0, 1e-9, 0.1, -3.3, 0.7];
        assert_eq!(canonical_mean(&mut a).to_bits(), canonical_mean(&mut b).to_bits());
        let x = 0.1 + 0.2;
        let mut dup = vec![x; 7];
        assert_eq!(canonical_mean(&mut dup).to_bits(), x.to_bits());
    }

    #[test]
    fn structural_ops_backprop() {
        // loss = sum(concat(A, broadcast(mean_rows(A))) ⊙ W)
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let m = g.mean_rows(a);
        let b = g.broadcast_rows(m, 2);
        let c = g.concat_cols(a, b);
        let w = g.leaf(Mat::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let p = g.mul(c, w);
        let loss = g.sum(p);
        let da = g.backward(loss).unwrap().wrt(&g, a);
        // direct part W[:, :2] plus mean part: column sums of W[:, 2:] / 2
        assert_eq!(da.data, vec![1.0 + 5.0, 2.0 + 6.0, 5.0 + 5.0, 6.0 + 6.0]);
    }
}
