use super::Tensor;
use crate::error::{DcpError, Result};

/// Offset added under the square root when differentiating a Euclidean
/// norm, so the derivative stays finite at zero distance.
pub const SQRT_EPS: f64 = 1e-12;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Log,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    DivScalar(Var, Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    SqrtEps(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
    PairwiseEuclidean(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

/// An append-only record of primitive applications.
///
/// Nodes are stored in creation order, which is a topological order since
/// every op can only reference nodes that already exist. A node carries a
/// gradient accumulator iff it is differentiable, i.e. it is a parameter or
/// depends on one.
///
/// [`Graph::backward`] adds into the accumulators: calling it twice without
/// [`Graph::zero_grad`] sums both gradients.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a differentiable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulator of `v`; `None` for non-differentiable nodes.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad.is_some()
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| Tensor::zeros(value.rows(), value.cols()));
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Tensor, op: Op) -> Var {
        let rg = self.requires_grad(x);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(value, op, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(DcpError::Shape { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.unary(x, value, Op::Transpose(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let value = Tensor::new(va.rows(), va.cols(), data)?;
        Ok(self.binary(a, b, value, Op::Sub(a, b)))
    }

    /// Adds a bias vector (row or column, length = `x.cols`) to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.len() != vx.cols() || (vb.rows() != 1 && vb.cols() != 1) {
            return Err(DcpError::Shape {
                op: "add_bias",
                lhs: vx.shape(),
                rhs: vb.shape(),
            });
        }
        let mut value = vx.clone();
        let cols = vx.cols();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += vb.data()[i % cols];
        }
        Ok(self.binary(x, bias, value, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.unary(x, value, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.unary(x, value, Op::AddScalar(x))
    }

    /// `c - x`, elementwise.
    pub fn rsub_scalar(&mut self, c: f64, x: Var) -> Var {
        let neg = self.scale(x, -1.0);
        self.add_scalar(neg, c)
    }

    /// Divides every entry of `x` by the scalar tensor `s`.
    pub fn div_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let d = self.value(s).item()?;
        if d == 0.0 {
            return Err(DcpError::Domain {
                op: "div_scalar",
                index: 0,
                value: d,
            });
        }
        let value = self.value(x).map(|v| v / d);
        Ok(self.binary(x, s, value, Op::DivScalar(x, s)))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.unary(x, value, Op::Square(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.unary(x, value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.is_empty() {
            return Err(DcpError::EmptyInput("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(vx.data().iter().sum::<f64>() / vx.len() as f64);
        Ok(self.unary(x, value, Op::Mean(x)))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var> {
        match kind {
            Activation::Relu => Ok(self.relu(x)),
            Activation::Sigmoid => Ok(self.sigmoid(x)),
            Activation::Log => self.log(x),
        }
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.unary(x, value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.unary(x, value, Op::Sigmoid(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some((index, &value)) = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_nan() || **v <= 0.0)
        {
            return Err(DcpError::Domain { op: "log", index, value });
        }
        let value = self.value(x).map(f64::ln);
        Ok(self.unary(x, value, Op::Log(x)))
    }

    /// Clamps into `[lo, hi]`; the gradient passes only where the input lies
    /// inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        self.unary(x, value, Op::Clamp(x, lo, hi))
    }

    /// `sqrt(x + eps)`, elementwise.
    pub fn sqrt_eps(&mut self, x: Var, eps: f64) -> Result<Var> {
        if let Some((index, &value)) = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_nan() || **v + eps < 0.0)
        {
            return Err(DcpError::Domain { op: "sqrt", index, value });
        }
        let value = self.value(x).map(|v| (v + eps).sqrt());
        Ok(self.unary(x, value, Op::SqrtEps(x)))
    }

    /// Mean over rows of `-log softmax(logits)[row, label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        let (n, k) = z.shape();
        if labels.len() != n {
            return Err(DcpError::Shape {
                op: "softmax_cross_entropy",
                lhs: z.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if n == 0 {
            return Err(DcpError::EmptyInput("cross entropy over zero rows".into()));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(DcpError::LabelOutOfRange {
                row,
                label: label as i64,
                classes: k,
            });
        }
        let mut probs = Tensor::zeros(n, k);
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            let argmax = (1..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            let max = row[argmax];
            let mut rest = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs.set(r, j, e);
                if j != argmax {
                    rest += e;
                }
            }
            let denom = 1.0 + rest;
            for j in 0..k {
                probs.set(r, j, probs.get(r, j) / denom);
            }
            // log-sum-exp minus the label logit, with ln_1p keeping saturated
            // rows accurate
            total += (max - row[label]) + rest.ln_1p();
        }
        let value = Tensor::scalar(total / n as f64);
        Ok(self.unary(
            logits,
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Entry `(i, j)` is the Euclidean distance between row `i` of `a` and
    /// row `j` of `b`.
    pub fn pairwise_euclidean(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = pairwise_euclidean(self.value(a), self.value(b))?;
        Ok(self.binary(a, b, value, Op::PairwiseEuclidean(a, b)))
    }

    /// Populates gradient accumulators of every differentiable ancestor of
    /// `loss` with `d loss / d node`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(DcpError::Shape {
                op: "backward",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut adjoint: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adjoint[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = adjoint[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream, &mut adjoint);
            if let Some(g) = self.nodes[idx].grad.as_mut() {
                g.add_assign(&upstream);
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, up: &Tensor, adjoint: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, g: Tensor| {
            if self.nodes[v.0].grad.is_none() {
                return;
            }
            match adjoint[v.0].as_mut() {
                Some(acc) => acc.add_assign(&g),
                None => adjoint[v.0] = Some(g),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].grad.is_some();

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    send(*a, up.matmul(&val(*b).transpose()).expect("matmul grad"));
                }
                if wants(*b) {
                    send(*b, val(*a).transpose().matmul(up).expect("matmul grad"));
                }
            }
            Op::Transpose(x) => send(*x, up.transpose()),
            Op::Add(a, b) => {
                send(*a, up.clone());
                send(*b, up.clone());
            }
            Op::Sub(a, b) => {
                send(*a, up.clone());
                send(*b, up.map(|v| -v));
            }
            Op::AddBias(x, b) => {
                send(*x, up.clone());
                if wants(*b) {
                    let vb = val(*b);
                    let mut gb = Tensor::zeros(vb.rows(), vb.cols());
                    let cols = up.cols();
                    for (i, g) in up.data().iter().enumerate() {
                        gb.data_mut()[i % cols] += g;
                    }
                    send(*b, gb);
                }
            }
            Op::Scale(x, c) => send(*x, up.map(|v| v * c)),
            Op::AddScalar(x) => send(*x, up.clone()),
            Op::DivScalar(x, s) => {
                let d = val(*s).data()[0];
                send(*x, up.map(|v| v / d));
                if wants(*s) {
                    let dot: f64 = up.data().iter().zip(val(*x).data()).map(|(g, v)| g * v).sum();
                    send(*s, Tensor::scalar(-dot / (d * d)));
                }
            }
            Op::Square(x) => send(*x, zip_map(up, val(*x), |g, v| 2.0 * g * v)),
            Op::Sum(x) => {
                let vx = val(*x);
                send(*x, Tensor::filled(vx.rows(), vx.cols(), up.data()[0]));
            }
            Op::Mean(x) => {
                let vx = val(*x);
                send(*x, Tensor::filled(vx.rows(), vx.cols(), up.data()[0] / vx.len() as f64));
            }
            Op::Relu(x) => send(*x, zip_map(up, val(*x), |g, v| if v > 0.0 { g } else { 0.0 })),
            Op::Sigmoid(x) => send(*x, zip_map(up, &node.value, |g, y| g * y * (1.0 - y))),
            Op::Log(x) => send(*x, zip_map(up, val(*x), |g, v| g / v)),
            Op::Clamp(x, lo, hi) => send(
                *x,
                zip_map(up, val(*x), |g, v| if v >= *lo && v <= *hi { g } else { 0.0 }),
            ),
            Op::SqrtEps(x) => send(*x, zip_map(up, &node.value, |g, y| g / (2.0 * y))),
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let n = labels.len() as f64;
                let scale = up.data()[0] / n;
                let mut g = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    g.set(r, l, g.get(r, l) - 1.0);
                }
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
                send(*logits, g);
            }
            Op::PairwiseEuclidean(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let d = va.cols();
                let mut ga = Tensor::zeros(va.rows(), d);
                let mut gb = Tensor::zeros(vb.rows(), d);
                for i in 0..va.rows() {
                    for j in 0..vb.rows() {
                        let g = up.get(i, j);
                        if g == 0.0 {
                            continue;
                        }
                        let dist = node.value.get(i, j);
                        let w = g / (dist * dist + SQRT_EPS).sqrt();
                        for c in 0..d {
                            let diff = va.get(i, c) - vb.get(j, c);
                            ga.data_mut()[i * d + c] += w * diff;
                            gb.data_mut()[j * d + c] -= w * diff;
                        }
                    }
                }
                if wants(*a) {
                    send(*a, ga);
                }
                if wants(*b) {
                    send(*b, gb);
                }
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Value-level pairwise Euclidean distances. The forward value is the exact
/// norm, so coincident rows give exactly zero.
pub(crate) fn pairwise_euclidean(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(DcpError::Shape {
            op: "pairwise_euclidean",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = Tensor::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for j in 0..b.rows() {
            let s: f64 = ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            out.set(i, j, s.sqrt());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn relu_and_sigmoid_points() {
        let mut g = Graph::new();
        let x = g.constant(t(&[&[-2.0, 3.0, 0.0]]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 3.0, 0.0]);
        let s = g.sigmoid(x);
        assert_eq!(g.value(s).get(0, 2), 0.5);
    }

    #[test]
    fn log_domain_error_reports_index() {
        let mut g = Graph::new();
        let x = g.constant(t(&[&[1.0, 2.0, -0.5]]));
        match g.activation(Activation::Log, x) {
            Err(DcpError::Domain { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let s = g.sigmoid(x);
        g.backward(s).unwrap();
        assert!((g.grad(x).unwrap().item().unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_values() {
        let mut g = Graph::new();
        let z = g.constant(t(&[&[0.3, 0.3]]));
        let l = g.softmax_cross_entropy(z, &[1]).unwrap();
        assert!((g.scalar_value(l).unwrap() - 2f64.ln()).abs() < 1e-12);

        let z = g.constant(t(&[&[0.0, 3f64.ln()]]));
        let l = g.softmax_cross_entropy(z, &[1]).unwrap();
        assert!((g.scalar_value(l).unwrap() - 0.287682).abs() < 1e-6);
        assert!((g.scalar_value(l).unwrap() + 0.75f64.ln()).abs() < 1e-12);

        let z = g.constant(t(&[&[50.0, 0.0], &[0.0, 50.0]]));
        let l = g.softmax_cross_entropy(z, &[0, 1]).unwrap();
        let v = g.scalar_value(l).unwrap();
        assert!(v.is_finite() && v < 1e-20, "{v}");
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(2, 3));
        assert!(matches!(
            g.softmax_cross_entropy(z, &[0, 3]),
            Err(DcpError::LabelOutOfRange { row: 1, label: 3, classes: 3 })
        ));
    }

    #[test]
    fn pairwise_points() {
        let mut g = Graph::new();
        let a = g.constant(t(&[&[0.0, 0.0]]));
        let b = g.constant(t(&[&[3.0, 4.0]]));
        let d = g.pairwise_euclidean(a, b).unwrap();
        assert_eq!(g.value(d).data(), &[5.0]);

        let a = g.constant(t(&[&[1.0, 2.0], &[-1.0, 0.5], &[3.0, 3.0]]));
        let d = g.pairwise_euclidean(a, a).unwrap();
        for i in 0..3 {
            assert_eq!(g.value(d).get(i, i), 0.0);
        }
        let c = g.constant(Tensor::zeros(1, 3));
        assert!(matches!(g.pairwise_euclidean(a, c), Err(DcpError::Shape { .. })));
    }

    #[test]
    fn pairwise_gradient_finite_at_coincidence() {
        let mut g = Graph::new();
        let a = g.param(t(&[&[1.0, 1.0], &[2.0, 0.0]]));
        let d = g.pairwise_euclidean(a, a).unwrap();
        let s = g.sum(d);
        g.backward(s).unwrap();
        assert!(g.grad(a).unwrap().is_finite());
    }

    #[test]
    fn backward_quadratic() {
        let mut g = Graph::new();
        let x = g.param(t(&[&[1.0, 2.0]]));
        let sq = g.square(x);
        let l = g.sum(sq);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let mut g = Graph::new();
        let x = g.param(t(&[&[1.0, 2.0]]));
        let sq = g.square(x);
        let l = g.sum(sq);
        g.backward(l).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0, 8.0]);
        g.zero_grad();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_constant_is_noop() {
        let mut g = Graph::new();
        let x = g.param(t(&[&[1.0, 2.0]]));
        let c = g.constant(t(&[&[5.0]]));
        let l = g.sum(c);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0]);
        assert!(g.grad(l).is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.param(t(&[&[1.0, 2.0]]));
        assert!(matches!(g.backward(x), Err(DcpError::Shape { .. })));
    }

    #[test]
    fn shared_input_gradients_sum() {
        // l = sum(x * x^T) via matmul with a shared operand
        let mut g = Graph::new();
        let x = g.param(t(&[&[1.0, 2.0]]));
        let xt = g.transpose(x);
        let p = g.matmul(x, xt).unwrap();
        g.backward(p).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }
}
