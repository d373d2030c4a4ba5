use crate::error::{DcpError, Result};
use crate::networks::Params;

/// Heavy-ball SGD: `v <- momentum * v + grad`, `p <- p - lr * v`.
pub fn sgd_momentum_step(
    params: &mut Params,
    grads: &Params,
    velocity: &mut Params,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.layers.len() != grads.layers.len() || params.layers.len() != velocity.layers.len() {
        return Err(DcpError::Schema("optimizer buffers do not match the parameter layout".into()));
    }
    for ((p, g), v) in params.tensors_mut().zip(grads.tensors()).zip(velocity.tensors_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(DcpError::Shape {
                op: "sgd_momentum_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
        for ((pi, gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = momentum * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}
