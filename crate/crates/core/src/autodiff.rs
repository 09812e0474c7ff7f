//! A small reverse-mode tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep visits
//! every node after all of its consumers. Scalars are `1×1` matrices. Loss
//! functions with closed-form input gradients enter the tape through
//! [`Tape::fused_scalar`], which records the partials computed alongside the
//! value.

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x · wᵀ`
    MatMulT { x: Var, w: Var },
    /// Adds the `1×cols` row `b` to every row of `x`.
    AddBias { x: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    /// Row-wise L2 normalization; a zero row maps to the first basis vector.
    NormalizeRows { x: Var, norms: Vec<f64> },
    Scale(Var, f64),
    Add(Var, Var),
    /// `½‖x‖²`
    HalfSumSquares(Var),
    Fused(Vec<(Var, Matrix)>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros when `v` does not
    /// influence the root.
    pub fn wrt(&self, v: Var) -> Matrix {
        self.grads[v.0].clone().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Matrix::zeros(r, c)
        })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input. Constants are leaves whose gradient is ignored.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_const(&mut self, value: f64) -> Var {
        self.leaf(Matrix::from_vec(1, 1, vec![value]))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Panics if `v` is not `1×1`.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.get(0, 0)
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let value = self.value(x).matmul_t(self.value(w));
        self.push(value, Op::MatMulT { x, w })
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "bias must be a single row");
        let mut value = self.value(x).clone();
        assert_eq!(value.cols(), bias.cols(), "bias width mismatch");
        let bias = bias.row(0).to_vec();
        for r in 0..value.rows() {
            for (v, b) in value.row_mut(r).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        self.push(value, Op::AddBias { x, b })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let input = self.value(x);
        let mut value = input.clone();
        let mut norms = Vec::with_capacity(input.rows());
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let n = crate::matrix::norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            } else {
                row.iter_mut().for_each(|v| *v = 0.0);
                if let Some(first) = row.first_mut() {
                    *first = 1.0;
                }
            }
            norms.push(n);
        }
        self.push(value, Op::NormalizeRows { x, norms })
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scale(s);
        self.push(value, Op::Scale(x, s))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn half_sum_squares(&mut self, x: Var) -> Var {
        let value = 0.5 * self.value(x).sum_squares();
        self.push(Matrix::from_vec(1, 1, vec![value]), Op::HalfSumSquares(x))
    }

    /// A scalar node with known partial derivatives with respect to its
    /// inputs; each partial must match its input's shape.
    pub fn fused_scalar(&mut self, value: f64, partials: Vec<(Var, Matrix)>) -> Var {
        for (v, p) in &partials {
            assert_eq!(self.value(*v).shape(), p.shape(), "partial shape mismatch");
        }
        self.push(Matrix::from_vec(1, 1, vec![value]), Op::Fused(partials))
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => grads[idx] = Some(g),
                Op::MatMulT { x, w } => {
                    // y = x wᵀ: dx = g w, dw = gᵀ x
                    accumulate(&mut grads, *x, g.matmul(self.value(*w)));
                    accumulate(&mut grads, *w, g.t_matmul(self.value(*x)));
                }
                Op::AddBias { x, b } => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (acc, v) in db.row_mut(0).iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, g);
                }
                Op::Relu(x) => {
                    let input = self.value(*x);
                    let mut dx = g;
                    for (d, &v) in dx.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let mut dx = g;
                    for (d, &y) in dx.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                        *d *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::NormalizeRows { x, norms } => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for (r, &n) in norms.iter().enumerate() {
                        if n == 0.0 {
                            continue;
                        }
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let proj = crate::matrix::dot(yr, gr);
                        for ((d, &yv), &gv) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *d = (gv - yv * proj) / n;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Scale(x, s) => accumulate(&mut grads, *x, g.scale(*s)),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::HalfSumSquares(x) => {
                    let s = g.get(0, 0);
                    accumulate(&mut grads, *x, self.value(*x).scale(s));
                }
                Op::Fused(partials) => {
                    let s = g.get(0, 0);
                    for (v, p) in partials {
                        accumulate(&mut grads, *v, p.scale(s));
                    }
                }
            }
        }
        // interior adjoints were consumed by the sweep; leaves keep theirs
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Gradients { grads, shapes }
    }
}
