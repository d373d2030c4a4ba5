use super::{Graph, Tensor, Var};
use crate::error::{DcpError, Result};

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the coordinate with the largest relative error.
    pub worst_index: usize,
    pub analytic: Tensor,
    pub numeric: Tensor,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_error < threshold
    }
}

/// Checks the reverse-mode gradient of `f` at `x` against
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let loss = f(&mut g, xv)?;
    g.backward(loss)?;
    let analytic = g.grad(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));
    compare_gradients(&analytic, x, h, |probe| {
        let mut g = Graph::new();
        let pv = g.constant(probe.clone());
        let out = f(&mut g, pv)?;
        g.scalar_value(out)
    })
}

/// Compares a supplied analytic gradient with central differences of
/// `eval`. Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn compare_gradients<E>(analytic: &Tensor, x: &Tensor, h: f64, eval: E) -> Result<GradCheckReport>
where
    E: Fn(&Tensor) -> Result<f64>,
{
    if analytic.shape() != x.shape() {
        return Err(DcpError::Shape {
            op: "compare_gradients",
            lhs: analytic.shape(),
            rhs: x.shape(),
        });
    }
    let mut numeric = Tensor::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = finite(eval(&probe)?, i)?;
        probe.data_mut()[i] = orig - h;
        let minus = finite(eval(&probe)?, i)?;
        probe.data_mut()[i] = orig;

        let n = (plus - minus) / (2.0 * h);
        numeric.data_mut()[i] = n;
        let a = analytic.data()[i];
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic: analytic.clone(),
        numeric,
    })
}

fn finite(v: f64, i: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DcpError::NonFinite(format!("objective evaluated to {v} while probing coordinate {i}")))
    }
}
