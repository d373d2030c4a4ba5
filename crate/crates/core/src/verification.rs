//! Finite-difference verification of every differentiable loss.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{discriminator_loss, generator_loss, source_classification_loss};
use crate::alignment::{centroids_in_graph, loss_cc, loss_cs, relative_centroid_distances, relative_sample_distances};
use crate::error::{DcpError, Result};
use crate::networks::{forward, init_params, MlpSpec, OutputActivation, Params};
use crate::tensor::{compare_gradients, Graph, Tensor, Var};

pub const GRADCHECK_THRESHOLD: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-6;

/// Instance sizes: feature width, classes, batch rows.
pub const CHECK_FEATURE_DIM: usize = 4;
pub const CHECK_CLASSES: usize = 3;
pub const CHECK_BATCH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    Discriminator,
    Generator,
    Classification,
    CentroidCentroid,
    CentroidSample,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Discriminator,
        LossKind::Generator,
        LossKind::Classification,
        LossKind::CentroidCentroid,
        LossKind::CentroidSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Discriminator => "L_D",
            LossKind::Generator => "L_G",
            LossKind::Classification => "L_C1",
            LossKind::CentroidCentroid => "L_CC",
            LossKind::CentroidSample => "L_CS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRow {
    pub loss: LossKind,
    pub instances: usize,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// A random instance: the checked input plus everything held fixed.
struct Instance {
    x: Tensor,
    labels: Vec<i64>,
    discriminator: Params,
    head: Params,
}

fn discriminator_spec() -> MlpSpec {
    MlpSpec::new(vec![CHECK_FEATURE_DIM, 8, 1], OutputActivation::Sigmoid).expect("valid widths")
}

fn head_spec() -> MlpSpec {
    MlpSpec::new(vec![CHECK_FEATURE_DIM, CHECK_CLASSES], OutputActivation::None).expect("valid widths")
}

fn instance(kind: LossKind, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = match kind {
        // source and target blocks, or cluster and adversarial blocks
        LossKind::Discriminator | LossKind::CentroidCentroid | LossKind::CentroidSample => 2 * CHECK_BATCH,
        _ => CHECK_BATCH,
    };
    let data = (0..rows * CHECK_FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut labels: Vec<i64> = (0..CHECK_BATCH).map(|i| (i % CHECK_CLASSES) as i64).collect();
    labels.shuffle(&mut rng);
    Instance {
        x: Tensor::new(rows, CHECK_FEATURE_DIM, data).expect("sized"),
        labels,
        discriminator: init_params(&discriminator_spec(), rng.random()),
        head: init_params(&head_spec(), rng.random()),
    }
}

fn block(g: &mut Graph, x: Var, which: usize) -> Result<Var> {
    let mut sel = Tensor::zeros(CHECK_BATCH, 2 * CHECK_BATCH);
    for i in 0..CHECK_BATCH {
        sel.set(i, which * CHECK_BATCH + i, 1.0);
    }
    let s = g.constant(sel);
    g.matmul(s, x)
}

fn build(kind: LossKind, inst: &Instance, g: &mut Graph, x: Var) -> Result<Var> {
    match kind {
        LossKind::Discriminator => {
            let d = inst.discriminator.bind(g, false);
            let fs = block(g, x, 0)?;
            let ft = block(g, x, 1)?;
            let ds = forward(g, &d, &discriminator_spec(), fs)?;
            let dt = forward(g, &d, &discriminator_spec(), ft)?;
            discriminator_loss(g, ds, dt)
        }
        LossKind::Generator => {
            let d = inst.discriminator.bind(g, false);
            let dt = forward(g, &d, &discriminator_spec(), x)?;
            generator_loss(g, dt)
        }
        LossKind::Classification => {
            let h = inst.head.bind(g, false);
            let logits = forward(g, &h, &head_spec(), x)?;
            let labels: Vec<usize> = inst.labels.iter().map(|&l| l as usize).collect();
            source_classification_loss(g, logits, &labels)
        }
        LossKind::CentroidCentroid | LossKind::CentroidSample => {
            let clu = block(g, x, 0)?;
            let adv = block(g, x, 1)?;
            let (c_clu, _) = centroids_in_graph(g, &[(clu, &inst.labels)], CHECK_CLASSES)?;
            let (c_adv, _) = centroids_in_graph(g, &[(adv, &inst.labels)], CHECK_CLASSES)?;
            if kind == LossKind::CentroidCentroid {
                let m_clu = relative_centroid_distances(g, c_clu)?;
                let m_adv = relative_centroid_distances(g, c_adv)?;
                loss_cc(g, m_clu, m_adv)
            } else {
                let m_clu = relative_sample_distances(g, c_clu, clu)?;
                let m_adv = relative_sample_distances(g, c_adv, adv)?;
                loss_cs(g, m_clu, m_adv)
            }
        }
    }
}

/// Largest relative error over one instance. `flip_sign` negates the
/// analytic gradient before the comparison.
pub fn check_instance(kind: LossKind, seed: u64, flip_sign: bool) -> Result<f64> {
    let inst = instance(kind, seed);
    let mut g = Graph::new();
    let xv = g.param(inst.x.clone());
    let loss = build(kind, &inst, &mut g, xv)?;
    g.backward(loss)?;
    let mut analytic = g
        .grad(xv)
        .cloned()
        .ok_or_else(|| DcpError::NonFinite(format!("{kind}: no gradient reached the input")))?;
    if flip_sign {
        for v in analytic.data_mut() {
            *v = -*v;
        }
    }
    let report = compare_gradients(&analytic, &inst.x, GRADCHECK_STEP, |probe| {
        let mut g = Graph::new();
        let pv = g.constant(probe.clone());
        let out = build(kind, &inst, &mut g, pv)?;
        g.scalar_value(out)
    })?;
    Ok(report.max_rel_error)
}

/// One row per loss over seeds `base_seed..base_seed + instances`.
pub fn run_gradcheck(instances: usize, base_seed: u64, inject_sign_flip: Option<LossKind>) -> Result<Vec<GradCheckRow>> {
    if instances == 0 {
        return Err(DcpError::InvalidInput("gradcheck needs at least one instance".into()));
    }
    LossKind::ALL
        .into_iter()
        .map(|kind| {
            let flip = inject_sign_flip == Some(kind);
            let mut worst = 0.0f64;
            for s in 0..instances as u64 {
                worst = worst.max(check_instance(kind, base_seed.wrapping_add(s), flip)?);
            }
            Ok(GradCheckRow {
                loss: kind,
                instances,
                max_rel_error: worst,
                threshold: GRADCHECK_THRESHOLD,
                passed: worst < GRADCHECK_THRESHOLD,
            })
        })
        .collect()
}

pub const GRADCHECK_HEADER: &str = "loss,instances,max_rel_error,threshold,status";

pub fn gradcheck_csv(rows: &[GradCheckRow]) -> String {
    let mut out = String::from(GRADCHECK_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.3e},{:e},{}\n",
            r.loss,
            r.instances,
            r.max_rel_error,
            r.threshold,
            if r.passed { "PASS" } else { "FAIL" }
        ));
    }
    out
}
