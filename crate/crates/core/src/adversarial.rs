//! Adversarial objective: discriminator, generator and source
//! classification losses.
//!
//! Domain labels are source = 1, target = 0. The discriminator loss is the
//! negated log-likelihood so both players minimize.

use serde::{Deserialize, Serialize};

use crate::error::{DcpError, Result};
use crate::tensor::{Graph, Var};

/// Clamp applied to discriminator outputs before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Per-step loss values reported for the adversarial branch and the
/// clustering branch's source classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvLossParts {
    pub l_g: f64,
    pub l_d: f64,
    pub l_c1: f64,
    pub l_c2: f64,
}

/// `-(mean log D(g_s) + mean log(1 - D(g_t)))`.
pub fn discriminator_loss(g: &mut Graph, d_source: Var, d_target: Var) -> Result<Var> {
    check_probabilities(g, d_source, "discriminator_loss")?;
    check_probabilities(g, d_target, "discriminator_loss")?;
    let s = g.clamp(d_source, PROB_EPS, 1.0 - PROB_EPS);
    let log_s = g.log(s)?;
    let mean_s = g.mean(log_s)?;

    let t = g.clamp(d_target, PROB_EPS, 1.0 - PROB_EPS);
    let not_t = g.rsub_scalar(1.0, t);
    let log_t = g.log(not_t)?;
    let mean_t = g.mean(log_t)?;

    let ll = g.add(mean_s, mean_t)?;
    Ok(g.scale(ll, -1.0))
}

/// Non-saturating generator loss `-mean log D(g_t)`.
pub fn generator_loss(g: &mut Graph, d_target: Var) -> Result<Var> {
    check_probabilities(g, d_target, "generator_loss")?;
    let t = g.clamp(d_target, PROB_EPS, 1.0 - PROB_EPS);
    let log_t = g.log(t)?;
    let mean_t = g.mean(log_t)?;
    Ok(g.scale(mean_t, -1.0))
}

/// Cross entropy of a classifier on labelled source samples.
pub fn source_classification_loss(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    g.softmax_cross_entropy(logits, labels)
}

/// `L_G + L_D + L_C1`, for reporting. Training never minimizes this sum.
pub fn compose_adv(parts: &AdvLossParts) -> f64 {
    parts.l_g + parts.l_d + parts.l_c1
}

fn check_probabilities(g: &Graph, v: Var, op: &'static str) -> Result<()> {
    let t = g.value(v);
    if t.is_empty() {
        return Err(DcpError::EmptyInput(format!("{op}: no discriminator outputs")));
    }
    match t.data().iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        Some((index, &value)) => Err(DcpError::Domain { op, index, value }),
        None => Ok(()),
    }
}
