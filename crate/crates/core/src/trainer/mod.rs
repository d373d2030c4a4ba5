//! The double-classifier training loop.
//!
//! Each iteration first updates the discriminator on detached adversarial
//! features, then updates both extractors and both heads on
//! `L_C1 + L_C2 + L_G + alpha * (L_CC + L_CS)` with the discriminator held
//! fixed.

mod checkpoint;
mod eval;
mod metrics;
mod optim;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use eval::{evaluate, label_precision, predict_labels, pseudo_precision, score, ClassAccuracy, EvalReport};
pub use metrics::{metrics_csv, write_metrics, MetricsRecord, METRICS_HEADER};
pub use optim::sgd_momentum_step;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{discriminator_loss, generator_loss, source_classification_loss, AdvLossParts};
use crate::alignment::{
    centroids_in_graph, compute_centroids, ema_in_graph, loss_cc, loss_cs, relative_centroid_distances,
    relative_sample_distances, CentroidBank, DEFAULT_EMA_MOMENTUM,
};
use crate::datasets::LabeledDataset;
use crate::error::{DcpError, Result};
use crate::networks::{branch_outputs, forward, init_params, Architecture, Params};
use crate::pseudo_label::{class_quota, kmeans_assign, select_high_confidence, BranchView, PseudoLabelBatch, ThresholdState};
use crate::tensor::{Graph, Tensor, Var};

/// Per-network initialization seeds plus the batch sampler seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub adversarial: u64,
    pub clustering: u64,
    pub discriminator: u64,
    pub sampler: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_base(0)
    }
}

impl Seeds {
    /// Distinct seeds derived from one base value.
    pub fn from_base(base: u64) -> Self {
        let b = base.wrapping_mul(4);
        Self {
            adversarial: b,
            clustering: b + 1,
            discriminator: b + 2,
            sampler: b + 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of `L_CC + L_CS` in the main objective.
    pub alpha: f64,
    pub lr: f64,
    pub momentum: f64,
    /// Samples per domain per iteration.
    pub batch_size: usize,
    pub iterations: u64,
    pub ema_momentum: f64,
    /// Disable to train without the double-threshold selection; centroids
    /// then come from source samples only.
    pub pseudo_labels: bool,
    pub kmeans_max_iters: usize,
    /// Full-dataset accuracies are logged every this many iterations and at
    /// the last one. Zero logs only the last.
    pub eval_every: u64,
    pub seeds: Seeds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            lr: 0.01,
            momentum: 0.5,
            batch_size: 36,
            iterations: 1500,
            ema_momentum: DEFAULT_EMA_MOMENTUM,
            pseudo_labels: true,
            kmeans_max_iters: 20,
            eval_every: 100,
            seeds: Seeds::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DcpError::InvalidInput(m));
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return bad(format!("ema_momentum must be in [0, 1), got {}", self.ema_momentum));
        }
        if self.kmeans_max_iters == 0 {
            return bad("kmeans_max_iters must be >= 1".into());
        }
        Ok(())
    }

    pub fn with_seeds(mut self, seeds: Seeds) -> Self {
        self.seeds = seeds;
        self
    }

    /// The ablation arm: no alignment losses and no pseudo-labels.
    pub fn baseline(mut self) -> Self {
        self.alpha = 0.0;
        self.pseudo_labels = false;
        self
    }
}

/// The five networks of the two branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Networks {
    pub adv_extractor: Params,
    pub adv_head: Params,
    pub clu_extractor: Params,
    pub clu_head: Params,
    pub discriminator: Params,
}

impl Networks {
    fn init(arch: &Architecture, seeds: &Seeds) -> Self {
        // heads draw from a stream offset from their branch's extractor seed
        Self {
            adv_extractor: init_params(&arch.extractor, seeds.adversarial),
            adv_head: init_params(&arch.head, seeds.adversarial ^ 0x5eed_0000_0000_0000),
            clu_extractor: init_params(&arch.extractor, seeds.clustering),
            clu_head: init_params(&arch.head, seeds.clustering ^ 0x5eed_0000_0000_0000),
            discriminator: init_params(&arch.discriminator, seeds.discriminator),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            adv_extractor: self.adv_extractor.zeros_like(),
            adv_head: self.adv_head.zeros_like(),
            clu_extractor: self.clu_extractor.zeros_like(),
            clu_head: self.clu_head.zeros_like(),
            discriminator: self.discriminator.zeros_like(),
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.adv_extractor,
            &self.adv_head,
            &self.clu_extractor,
            &self.clu_head,
            &self.discriminator,
        ]
        .iter()
        .all(|p| p.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Banks {
    pub adversarial: Option<CentroidBank>,
    pub clustering: Option<CentroidBank>,
}

/// Everything needed to continue training or to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub architecture: Architecture,
    pub classes: usize,
    pub networks: Networks,
    pub velocity: Networks,
    pub banks: Banks,
    pub thresholds: ThresholdState,
}

impl TrainState {
    pub fn new(config: TrainConfig, input_dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        if classes < 2 {
            return Err(DcpError::InvalidInput(format!("need at least 2 classes, got {classes}")));
        }
        let architecture = Architecture::desk_scale(input_dim, classes)?;
        let networks = Networks::init(&architecture, &config.seeds);
        let velocity = networks.zeros_like();
        Ok(Self {
            config,
            architecture,
            classes,
            networks,
            velocity,
            banks: Banks::default(),
            thresholds: ThresholdState::default(),
        })
    }
}

/// Per-iteration values that are not part of the metrics log.
#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    pub pseudo: PseudoLabelBatch,
    /// Adversarial-branch argmax labels for the target batch.
    pub adv_labels: Vec<usize>,
    /// Clustering-branch k-means labels for the target batch.
    pub clu_labels: Vec<usize>,
    pub adv_precision: Option<f64>,
    pub clu_precision: Option<f64>,
    pub alignment_skipped: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub record: MetricsRecord,
    pub diagnostics: StepDiagnostics,
}

fn diverged(t: u64, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DcpError::Diverged {
            iteration: t,
            what: what.into(),
        })
    }
}

/// Discriminator update on detached adversarial features. Returns the
/// minimized (negated log-likelihood) loss.
pub fn discriminator_step(state: &mut TrainState, xs: &Tensor, xt: &Tensor) -> Result<f64> {
    let arch = &state.architecture;
    let mut g = Graph::new();
    let extractor = state.networks.adv_extractor.bind(&mut g, false);
    let disc = state.networks.discriminator.bind(&mut g, true);
    let xs_v = g.constant(xs.clone());
    let xt_v = g.constant(xt.clone());
    let fs = forward(&mut g, &extractor, &arch.extractor, xs_v)?;
    let ft = forward(&mut g, &extractor, &arch.extractor, xt_v)?;
    let ds = forward(&mut g, &disc, &arch.discriminator, fs)?;
    let dt = forward(&mut g, &disc, &arch.discriminator, ft)?;
    let loss = discriminator_loss(&mut g, ds, dt)?;
    let l_d = diverged(state.thresholds.t, "l_d", g.scalar_value(loss)?)?;
    g.backward(loss)?;
    let grads = disc.grads(&g);
    let cfg = &state.config;
    sgd_momentum_step(
        &mut state.networks.discriminator,
        &grads,
        &mut state.velocity.discriminator,
        cfg.lr,
        cfg.momentum,
    )?;
    Ok(l_d)
}

/// Values produced by [`main_step`].
#[derive(Clone, Debug)]
pub struct MainOutcome {
    pub losses: AdvLossParts,
    pub l_cc: Option<f64>,
    pub l_cs: Option<f64>,
    pub diagnostics: StepDiagnostics,
}

fn alignment_terms(
    g: &mut Graph,
    adv_centroids: Var,
    clu_centroids: Var,
    adv_target: Var,
    clu_target: Var,
) -> Result<(Var, Var)> {
    let cc_adv = relative_centroid_distances(g, adv_centroids)?;
    let cc_clu = relative_centroid_distances(g, clu_centroids)?;
    let cs_adv = relative_sample_distances(g, adv_centroids, adv_target)?;
    let cs_clu = relative_sample_distances(g, clu_centroids, clu_target)?;
    Ok((loss_cc(g, cc_clu, cc_adv)?, loss_cs(g, cs_clu, cs_adv)?))
}

/// Pseudo-labelling, centroid update and the extractor/head update with the
/// discriminator frozen. `target_truth` is read only after the update, to
/// score the selection.
pub fn main_step(
    state: &mut TrainState,
    xs: &Tensor,
    ys: &[usize],
    xt: &Tensor,
    target_truth: Option<&[i64]>,
) -> Result<MainOutcome> {
    let arch = state.architecture.clone();
    let cfg = state.config.clone();
    let k = state.classes;
    let t = state.thresholds.t;
    let (ns, nt) = (xs.rows(), xt.rows());
    let ys_i64: Vec<i64> = ys.iter().map(|&y| y as i64).collect();

    let mut g = Graph::new();
    let nets = &state.networks;
    let ae = nets.adv_extractor.bind(&mut g, true);
    let ah = nets.adv_head.bind(&mut g, true);
    let ce = nets.clu_extractor.bind(&mut g, true);
    let ch = nets.clu_head.bind(&mut g, true);
    let disc = nets.discriminator.bind(&mut g, false);
    let xs_v = g.constant(xs.clone());
    let xt_v = g.constant(xt.clone());

    // (a) forward both branches on both domains
    let adv_s = branch_outputs(&mut g, (&ae, &arch.extractor), (&ah, &arch.head), xs_v)?;
    let adv_t = branch_outputs(&mut g, (&ae, &arch.extractor), (&ah, &arch.head), xt_v)?;
    let clu_s = branch_outputs(&mut g, (&ce, &arch.extractor), (&ch, &arch.head), xs_v)?;
    let clu_t = forward(&mut g, &ce, &arch.extractor, xt_v)?;

    let l_c1 = source_classification_loss(&mut g, adv_s.logits, ys)?;
    let l_c2 = source_classification_loss(&mut g, clu_s.logits, ys)?;
    let d_t = forward(&mut g, &disc, &arch.discriminator, adv_t.features)?;
    let l_g = generator_loss(&mut g, d_t)?;

    // (b) k-means over the clustering features of both domains, seeded with
    // the source class means so cluster k is class k
    let clu_fs = g.value(clu_s.features).clone();
    let clu_ft = g.value(clu_t).clone();
    let init = compute_centroids(&clu_fs, &ys_i64, k)?.centroids;
    let km = kmeans_assign(&clu_fs.vstack(&clu_ft)?, &init, cfg.kmeans_max_iters)?;
    let clu_labels = km.labels[ns..].to_vec();
    let adv_labels = adv_t.predicted_labels.clone();

    // (c) double-threshold selection
    let pseudo = if cfg.pseudo_labels {
        let adv_rank = compute_centroids(g.value(adv_s.features), &ys_i64, k)?.centroids;
        select_high_confidence(
            BranchView {
                features: g.value(adv_t.features),
                labels: &adv_labels,
                centroids: &adv_rank,
            },
            BranchView {
                features: &clu_ft,
                labels: &clu_labels,
                centroids: &km.centroids,
            },
            &state.thresholds,
            k,
        )?
    } else {
        PseudoLabelBatch {
            quota_degenerate: nt < k,
            ..Default::default()
        }
    };
    let target_labels = pseudo.dense_labels(nt);

    // (d) centroids over source labels and accepted pseudo-labels
    let (adv_fresh, adv_counts) =
        centroids_in_graph(&mut g, &[(adv_s.features, &ys_i64), (adv_t.features, &target_labels)], k)?;
    let (adv_c, adv_counts) = ema_in_graph(&mut g, state.banks.adversarial.as_ref(), adv_fresh, &adv_counts)?;
    let (clu_fresh, clu_counts) =
        centroids_in_graph(&mut g, &[(clu_s.features, &ys_i64), (clu_t, &target_labels)], k)?;
    let (clu_c, clu_counts) = ema_in_graph(&mut g, state.banks.clustering.as_ref(), clu_fresh, &clu_counts)?;

    let alignment = match alignment_terms(&mut g, adv_c, clu_c, adv_t.features, clu_t) {
        Ok(terms) => Some(terms),
        Err(DcpError::DegenerateGeometry(_)) => None,
        Err(e) => return Err(e),
    };

    // (f) main objective
    let mut total = g.add(l_c1, l_c2)?;
    total = g.add(total, l_g)?;
    if let (Some((cc, cs)), true) = (alignment, cfg.alpha > 0.0) {
        let reg = g.add(cc, cs)?;
        let reg = g.scale(reg, cfg.alpha);
        total = g.add(total, reg)?;
    }
    let losses = AdvLossParts {
        l_g: diverged(t, "l_g", g.scalar_value(l_g)?)?,
        l_d: 0.0,
        l_c1: diverged(t, "l_c1", g.scalar_value(l_c1)?)?,
        l_c2: diverged(t, "l_c2", g.scalar_value(l_c2)?)?,
    };
    let (l_cc, l_cs) = match alignment {
        Some((cc, cs)) => (
            Some(diverged(t, "l_cc", g.scalar_value(cc)?)?),
            Some(diverged(t, "l_cs", g.scalar_value(cs)?)?),
        ),
        None => (None, None),
    };
    diverged(t, "objective", g.scalar_value(total)?)?;
    g.backward(total)?;

    let (lr, mu) = (cfg.lr, cfg.momentum);
    let nets = &mut state.networks;
    let vel = &mut state.velocity;
    sgd_momentum_step(&mut nets.adv_extractor, &ae.grads(&g), &mut vel.adv_extractor, lr, mu)?;
    sgd_momentum_step(&mut nets.adv_head, &ah.grads(&g), &mut vel.adv_head, lr, mu)?;
    sgd_momentum_step(&mut nets.clu_extractor, &ce.grads(&g), &mut vel.clu_extractor, lr, mu)?;
    sgd_momentum_step(&mut nets.clu_head, &ch.grads(&g), &mut vel.clu_head, lr, mu)?;
    if !nets.is_finite() {
        return Err(DcpError::Diverged {
            iteration: t,
            what: "parameters".into(),
        });
    }

    state.banks.adversarial = Some(CentroidBank {
        centroids: g.value(adv_c).clone(),
        counts: adv_counts,
        ema_momentum: cfg.ema_momentum,
    });
    state.banks.clustering = Some(CentroidBank {
        centroids: g.value(clu_c).clone(),
        counts: clu_counts,
        ema_momentum: cfg.ema_momentum,
    });

    let adv_precision = target_truth.and_then(|truth| label_precision(&adv_labels, truth));
    let clu_precision = target_truth.and_then(|truth| label_precision(&clu_labels, truth));
    Ok(MainOutcome {
        losses,
        l_cc,
        l_cs,
        diagnostics: StepDiagnostics {
            pseudo,
            adv_labels,
            clu_labels,
            adv_precision,
            clu_precision,
            alignment_skipped: alignment.is_none(),
        },
    })
}

/// One full iteration: discriminator update, main update, `T <- T + 1`.
pub fn train_step(
    state: &mut TrainState,
    xs: &Tensor,
    ys: &[usize],
    xt: &Tensor,
    target_truth: Option<&[i64]>,
) -> Result<StepOutput> {
    if xs.rows() == 0 || xt.rows() == 0 {
        return Err(DcpError::EmptyInput("empty mini-batch".into()));
    }
    let thresholds = state.thresholds;
    let as_divergence = |e: DcpError| match e {
        DcpError::Domain { op, value, .. } if !value.is_finite() => DcpError::Diverged {
            iteration: thresholds.t,
            what: format!("an input to {op}"),
        },
        DcpError::NonFinite(what) => DcpError::Diverged {
            iteration: thresholds.t,
            what,
        },
        other => other,
    };
    let l_d = discriminator_step(state, xs, xt).map_err(as_divergence)?;
    let main = main_step(state, xs, ys, xt, target_truth).map_err(as_divergence)?;
    state.thresholds.advance();
    let pseudo_precision = target_truth.and_then(|truth| pseudo_precision(&main.diagnostics.pseudo, truth));
    Ok(StepOutput {
        record: MetricsRecord {
            t: thresholds.t,
            l_d,
            l_g: main.losses.l_g,
            l_c1: main.losses.l_c1,
            l_c2: main.losses.l_c2,
            l_cc: main.l_cc,
            l_cs: main.l_cs,
            tau_adv: thresholds.tau_adv,
            tau_clu: thresholds.tau_clu,
            n_selected: main.diagnostics.pseudo.len(),
            pseudo_precision,
            source_acc: None,
            target_acc: None,
        },
        diagnostics: main.diagnostics,
    })
}

/// Draws class-stratified source batches and plain target batches,
/// reshuffling each pool whenever it is exhausted.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    by_class: Vec<Vec<usize>>,
    class_pos: Vec<usize>,
    target_order: Vec<usize>,
    target_pos: usize,
}

impl BatchSampler {
    pub fn new(source_labels: &[usize], classes: usize, target_len: usize, seed: u64) -> Result<Self> {
        let mut by_class = vec![Vec::new(); classes];
        for (i, &l) in source_labels.iter().enumerate() {
            by_class[l].push(i);
        }
        if let Some(k) = by_class.iter().position(Vec::is_empty) {
            return Err(DcpError::InvalidInput(format!("source data has no sample of class {k}")));
        }
        if target_len == 0 {
            return Err(DcpError::EmptyInput("target dataset is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for members in &mut by_class {
            members.shuffle(&mut rng);
        }
        let mut target_order: Vec<usize> = (0..target_len).collect();
        target_order.shuffle(&mut rng);
        Ok(Self {
            rng,
            class_pos: vec![0; classes],
            by_class,
            target_order,
            target_pos: 0,
        })
    }

    /// `batch / K` samples of each class, the remainder going to the lowest
    /// classes.
    pub fn source_batch(&mut self, batch: usize) -> Vec<usize> {
        let k = self.by_class.len();
        let mut out = Vec::with_capacity(batch);
        for c in 0..k {
            let take = batch / k + usize::from(c < batch % k);
            for _ in 0..take {
                if self.class_pos[c] == self.by_class[c].len() {
                    self.by_class[c].shuffle(&mut self.rng);
                    self.class_pos[c] = 0;
                }
                out.push(self.by_class[c][self.class_pos[c]]);
                self.class_pos[c] += 1;
            }
        }
        out
    }

    pub fn target_batch(&mut self, batch: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            if self.target_pos == self.target_order.len() {
                self.target_order.shuffle(&mut self.rng);
                self.target_pos = 0;
            }
            out.push(self.target_order[self.target_pos]);
            self.target_pos += 1;
        }
        out
    }
}

/// Drives [`train_step`] over a source/target dataset pair.
pub struct Trainer<'a> {
    state: TrainState,
    source: &'a LabeledDataset,
    target: &'a LabeledDataset,
    source_labels: Vec<usize>,
    sampler: BatchSampler,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, source: &'a LabeledDataset, target: &'a LabeledDataset) -> Result<Self> {
        let labels = source
            .training_labels()
            .ok_or_else(|| DcpError::InvalidInput("the source dataset must have the source domain tag".into()))?;
        if source.is_empty() || target.is_empty() {
            return Err(DcpError::EmptyInput("source and target must be non-empty".into()));
        }
        if source.dim() != target.dim() {
            return Err(DcpError::Shape {
                op: "train",
                lhs: source.features().shape(),
                rhs: target.features().shape(),
            });
        }
        let source_labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let classes = source.num_classes();
        let state = TrainState::new(config, source.dim(), classes)?;
        if state.config.batch_size < classes {
            return Err(DcpError::InvalidInput(format!(
                "batch_size {} cannot hold one source sample per class ({classes})",
                state.config.batch_size
            )));
        }
        let sampler = BatchSampler::new(&source_labels, classes, target.len(), state.config.seeds.sampler)?;
        Ok(Self {
            state,
            source,
            target,
            source_labels,
            sampler,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn iteration(&self) -> u64 {
        self.state.thresholds.t
    }

    pub fn step(&mut self) -> Result<StepOutput> {
        let n = self.state.config.batch_size;
        let si = self.sampler.source_batch(n);
        let ti = self.sampler.target_batch(n);
        let xs = self.source.features().select_rows(&si);
        let ys: Vec<usize> = si.iter().map(|&i| self.source_labels[i]).collect();
        let xt = self.target.features().select_rows(&ti);
        // ground truth only feeds the logged precision values
        let truth: Vec<i64> = ti.iter().map(|&i| self.target.evaluation_labels()[i]).collect();
        let mut out = train_step(&mut self.state, &xs, &ys, &xt, Some(&truth))?;

        let t = out.record.t + 1;
        let every = self.state.config.eval_every;
        let last = t == self.state.config.iterations;
        if (every > 0 && t % every == 0) || last {
            out.record.source_acc = accuracy_if_labelled(&self.state, self.source)?;
            out.record.target_acc = accuracy_if_labelled(&self.state, self.target)?;
        }
        Ok(out)
    }

    /// Runs the configured number of iterations.
    pub fn run(&mut self) -> Result<Vec<MetricsRecord>> {
        let total = self.state.config.iterations;
        let mut history = Vec::with_capacity(total as usize);
        while self.iteration() < total {
            history.push(self.step()?.record);
        }
        Ok(history)
    }
}

fn accuracy_if_labelled(state: &TrainState, ds: &LabeledDataset) -> Result<Option<f64>> {
    if ds.evaluation_labels().iter().any(|&l| l < 0) {
        return Ok(None);
    }
    Ok(Some(evaluate(state, ds)?.accuracy))
}

/// Trains from scratch and returns the final checkpoint with the metrics
/// history.
pub fn train(
    config: TrainConfig,
    source: &LabeledDataset,
    target: &LabeledDataset,
) -> Result<(Checkpoint, Vec<MetricsRecord>)> {
    let mut trainer = Trainer::new(config, source, target)?;
    let history = trainer.run()?;
    Ok((Checkpoint::new(trainer.into_state()), history))
}

/// Quotas the selection would use at iteration `t` for a batch of `n`.
pub fn quotas_at(t: u64, n: usize, classes: usize) -> (usize, usize) {
    let s = ThresholdState::at(t);
    (class_quota(s.tau_adv, n, classes), class_quota(s.tau_clu, n, classes))
}
