//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
#![allow(clippy::approx_constant)]

mod common;

use std::time::{Duration, Instant};

use common::*;
use dcp::alignment::{compute_centroids, loss_cc, loss_cs, relative_centroid_distances, relative_sample_distances};
use dcp::datasets::{gen_blobs, LabeledDataset, ShiftSpec};
use dcp::pseudo_label::{kmeans_assign, select_high_confidence, tau_adv, tau_clu, BranchView, ThresholdState};
use dcp::trainer::{metrics_csv, train, Seeds, TrainConfig, Trainer};
use dcp::verification::{run_gradcheck, CHECK_BATCH, CHECK_CLASSES, CHECK_FEATURE_DIM};
use dcp::{Graph, Tensor};
use rand::Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn benchmark(seed: u64) -> (LabeledDataset, LabeledDataset) {
    gen_blobs(&ShiftSpec {
        classes: 3,
        dim: 2,
        n_per_class: 200,
        rotation: 35.0,
        translation: vec![1.0, 0.0],
        noise_sigma: 0.6,
        seed,
    })
    .unwrap()
}

fn config(seed: u64, iterations: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        seeds: Seeds::from_base(seed),
        ..Default::default()
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let rows = run_gradcheck(20, 0, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut parts = Vec::new();
    for r in &rows {
        ensure(r.passed, || format!("{} max rel error {:.3e}", r.loss, r.max_rel_error))?;
        parts.push(format!("{}={:.1e}", r.loss, r.max_rel_error));
    }
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "20 instances (d_f={CHECK_FEATURE_DIM}, K={CHECK_CLASSES}, N_b={CHECK_BATCH}) {} in {:.2?}",
        parts.join(" "),
        elapsed
    ))
}

fn criterion_2() -> Verdict {
    let closed_adv = |t: f64| 1.0 / (1.0 + (-0.0001 * t * t).exp()) - 0.1;
    let closed_clu = |t: f64| 1.0 / (1.0 + (-0.01 * t).exp());
    for t in [0u64, 100] {
        ensure((tau_adv(t) - closed_adv(t as f64)).abs() < 1e-9, || format!("tau_adv({t})"))?;
        ensure((tau_clu(t) - closed_clu(t as f64)).abs() < 1e-9, || format!("tau_clu({t})"))?;
    }
    ensure((tau_adv(0) - 0.4).abs() < 1e-9, || "tau_adv(0) != 0.4".into())?;
    ensure((tau_adv(100) - 0.631059).abs() < 1e-6, || format!("tau_adv(100) = {}", tau_adv(100)))?;
    ensure((tau_clu(0) - 0.5).abs() < 1e-9, || "tau_clu(0) != 0.5".into())?;
    ensure((tau_clu(100) - 0.731059).abs() < 1e-6, || format!("tau_clu(100) = {}", tau_clu(100)))?;
    let ts: Vec<u64> = (0..=10_000).step_by(10).collect();
    for w in ts.windows(2) {
        ensure(tau_adv(w[1]) >= tau_adv(w[0]), || format!("tau_adv decreases at {}", w[1]))?;
        ensure(tau_clu(w[1]) >= tau_clu(w[0]), || format!("tau_clu decreases at {}", w[1]))?;
    }
    Ok(format!(
        "tau_adv(100)={:.6} tau_clu(100)={:.6}, monotone over {} samples",
        tau_adv(100),
        tau_clu(100),
        ts.len()
    ))
}

fn criterion_3() -> Verdict {
    let instances = 25;
    let mut worst = [0.0f64; 3];
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let (n, d, k) = (r.random_range(6..40), r.random_range(1..6), r.random_range(2..5));

        let x = random_tensor(&mut r, n, d, 5.0);
        let labels: Vec<i64> = (0..n).map(|i| if i < k { i as i64 } else { r.random_range(-1..k as i64) }).collect();
        let bank = compute_centroids(&x, &labels, k).map_err(|e| e.to_string())?;
        for (c, oracle) in loop_means(&rows_of(&x), &labels, k).iter().enumerate() {
            let oracle = oracle.as_ref().ok_or("oracle class empty")?;
            let err = bank.centroids.row(c).iter().zip(oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst[0] = worst[0].max(err);
        }

        let init = compute_centroids(&x, &labels, k).unwrap().centroids;
        let km = kmeans_assign(&x, &init, 200).map_err(|e| e.to_string())?;
        ensure(km.converged, || format!("k-means did not converge on instance {seed}"))?;
        let cents = rows_of(&km.centroids);
        for i in 0..n {
            let b = brute_nearest(x.row(i), &cents);
            ensure(km.labels[i] == b, || format!("instance {seed} row {i}: {} vs brute {b}", km.labels[i]))?;
        }

        let a = random_tensor(&mut r, n, d, 3.0);
        let b = random_tensor(&mut r, d, k, 3.0);
        let mm = a.matmul(&b).map_err(|e| e.to_string())?;
        worst[1] = worst[1].max(max_abs_diff(&rows_of(&mm), &naive_matmul(&rows_of(&a), &rows_of(&b))));

        let c = random_tensor(&mut r, k, d, 3.0);
        let mut g = Graph::new();
        let (cv, av) = (g.constant(c.clone()), g.constant(a.clone()));
        let pd = g.pairwise_euclidean(cv, av).map_err(|e| e.to_string())?;
        worst[2] = worst[2].max(max_abs_diff(&rows_of(g.value(pd)), &naive_pairwise(&rows_of(&c), &rows_of(&a))));
    }
    ensure(worst.iter().all(|&w| w <= 1e-12), || format!("max errors {worst:?}"))?;
    Ok(format!(
        "{instances} instances: centroids {:.1e}, matmul {:.1e}, pairwise {:.1e}, k-means = brute force",
        worst[0], worst[1], worst[2]
    ))
}

fn loss_of(f: fn(&mut Graph, dcp::Var, dcp::Var) -> dcp::Result<dcp::Var>, a: &Tensor, b: &Tensor) -> f64 {
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
    let l = f(&mut g, av, bv).unwrap();
    g.scalar_value(l).unwrap()
}

fn criterion_4() -> Verdict {
    let mut worst_self = 0.0f64;
    let mut worst_scale = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(2000 + seed);
        let m = random_tensor(&mut r, 3, 3, 2.0);
        let s = random_tensor(&mut r, 3, 8, 2.0);
        worst_self = worst_self.max(loss_of(loss_cc, &m, &m)).max(loss_of(loss_cs, &s, &s));

        let c = random_tensor(&mut r, 3, 4, 2.0);
        let f = random_tensor(&mut r, 8, 4, 2.0);
        let rel = |c: &Tensor, f: &Tensor| {
            let mut g = Graph::new();
            let (cv, fv) = (g.constant(c.clone()), g.constant(f.clone()));
            let cc = relative_centroid_distances(&mut g, cv).unwrap();
            let cs = relative_sample_distances(&mut g, cv, fv).unwrap();
            (rows_of(g.value(cc)), rows_of(g.value(cs)))
        };
        let scaled = |t: &Tensor| Tensor::new(t.rows(), t.cols(), t.data().iter().map(|v| v * 10.0).collect()).unwrap();
        let (cc1, cs1) = rel(&c, &f);
        let (cc2, cs2) = rel(&scaled(&c), &scaled(&f));
        worst_scale = worst_scale.max(max_abs_diff(&cc1, &cc2)).max(max_abs_diff(&cs1, &cs2));
    }
    let t = |rows: &[&[f64]]| Tensor::from_rows(rows).unwrap();
    let cc = loss_of(loss_cc, &t(&[&[0.0, 3.0], &[3.0, 0.0]]), &t(&[&[0.0, 1.0], &[1.0, 0.0]]));
    let cs = loss_of(loss_cs, &t(&[&[2.0, 2.0]]), &t(&[&[0.0, 0.0]]));
    ensure(worst_self <= 1e-5, || format!("loss(M, M) = {worst_self:e}"))?;
    ensure((cc - 0.707107).abs() < 1e-6, || format!("L_CC hand value {cc}"))?;
    ensure((cs - 1.414214).abs() < 1e-6, || format!("L_CS hand value {cs}"))?;
    ensure(worst_scale <= 1e-10, || format!("scale drift {worst_scale:e}"))?;
    Ok(format!(
        "self-loss {worst_self:.1e}, L_CC={cc:.6}, L_CS={cs:.6}, x10 scale drift {worst_scale:.1e}"
    ))
}

fn final_target_acc(cfg: TrainConfig, s: &LabeledDataset, t: &LabeledDataset) -> Result<(f64, Duration), String> {
    let start = Instant::now();
    let (_, history) = train(cfg, s, t).map_err(|e| e.to_string())?;
    let acc = history.last().and_then(|r| r.target_acc).ok_or("no final target accuracy")?;
    Ok((acc, start.elapsed()))
}

fn criterion_5() -> Verdict {
    let (mut dcp_sum, mut base_sum) = (0.0, 0.0);
    let mut slowest = Duration::ZERO;
    let mut per_seed = Vec::new();
    for seed in 0..5 {
        let (s, t) = benchmark(seed);
        let (full, t1) = final_target_acc(config(seed, 1500), &s, &t)?;
        let (base, t2) = final_target_acc(config(seed, 1500).baseline(), &s, &t)?;
        slowest = slowest.max(t1).max(t2);
        dcp_sum += full;
        base_sum += base;
        per_seed.push(format!("{full:.3}/{base:.3}"));
    }
    let (dcp_mean, base_mean) = (dcp_sum / 5.0, base_sum / 5.0);
    let gain = 100.0 * (dcp_mean - base_mean);
    let summary = format!(
        "DCP {dcp_mean:.4} vs baseline {base_mean:.4} (gain {gain:+.2} pp; per seed {}; slowest run {slowest:.2?})",
        per_seed.join(" ")
    );
    ensure(slowest < Duration::from_secs(120), || format!("{summary}: run too slow"))?;
    ensure(gain >= 10.0, || format!("{summary}: gain below 10 pp"))?;
    Ok(summary)
}

fn criterion_6() -> Verdict {
    let (mut sel, mut adv, mut clu) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..5 {
        let (s, t) = benchmark(seed);
        let mut trainer = Trainer::new(config(seed, 1500), &s, &t).map_err(|e| e.to_string())?;
        let out = loop {
            let out = trainer.step().map_err(|e| e.to_string())?;
            if out.record.t == 200 {
                break out;
            }
        };
        let d = out.diagnostics;
        sel.push(out.record.pseudo_precision.ok_or("nothing selected at T=200")?);
        adv.push(d.adv_precision.ok_or("no adversarial precision")?);
        clu.push(d.clu_precision.ok_or("no clustering precision")?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, ma, mc) = (mean(&sel), mean(&adv), mean(&clu));
    let summary = format!("selected {ms:.4}, adversarial argmax {ma:.4}, clustering k-means {mc:.4}");
    ensure(ms >= ma && ms >= mc, || summary.clone())?;
    Ok(summary)
}

fn criterion_7() -> Verdict {
    let (s, t) = benchmark(11);
    let run = || train(config(11, 300), &s, &t).map(|(_, h)| metrics_csv(&h).unwrap()).map_err(|e| e.to_string());
    let (a, b) = (run()?, run()?);
    ensure(a.as_bytes() == b.as_bytes(), || "metrics CSVs differ".into())?;
    Ok(format!("two 300-iteration runs, {} identical bytes", a.len()))
}

fn criterion_8() -> Verdict {
    let mut violations = 0usize;
    let mut selected_total = 0usize;
    for seed in 0..1000u64 {
        let mut r = rng(5000 + seed);
        let k = r.random_range(2..6);
        let n = r.random_range(1..40);
        let d = r.random_range(1..5);
        let fa = random_tensor(&mut r, n, d, 3.0);
        let fc = random_tensor(&mut r, n, d, 3.0);
        let ca = random_tensor(&mut r, k, d, 3.0);
        let cc = random_tensor(&mut r, k, d, 3.0);
        let la: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let lc: Vec<usize> = (0..n).map(|i| if r.random_bool(0.6) { la[i] } else { r.random_range(0..k) }).collect();
        let state = ThresholdState::at(r.random_range(0..600));
        let batch = select_high_confidence(
            BranchView { features: &fa, labels: &la, centroids: &ca },
            BranchView { features: &fc, labels: &lc, centroids: &cc },
            &state,
            k,
        )
        .map_err(|e| e.to_string())?;
        selected_total += batch.len();

        let qa = (state.tau_adv * n as f64 / k as f64).floor() as usize;
        let qc = (state.tau_clu * n as f64 / k as f64).floor() as usize;
        let rank = |f: &Tensor, l: &[usize], c: &Tensor, i: usize| {
            let dist = |j: usize| naive_pairwise(&[f.row(j).to_vec()], &[c.row(l[j]).to_vec()])[0][0];
            (0..n).filter(|&j| l[j] == l[i] && (dist(j), j) < (dist(i), i)).count()
        };
        let mut per_class = vec![0usize; k];
        for (&i, &lab) in batch.selected_indices.iter().zip(&batch.labels) {
            per_class[lab] += 1;
            if i >= n || la[i] != lab || lc[i] != lab || rank(&fa, &la, &ca, i) >= qa || rank(&fc, &lc, &cc, i) >= qc {
                violations += 1;
            }
        }
        violations += per_class.iter().filter(|&&c| c > qa.min(qc)).count();
        if batch.selected_indices.windows(2).any(|w| w[0] >= w[1]) {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("1000 fuzzed batches, {selected_total} selected samples, 0 violations"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient correctness", criterion_1),
        ("schedule exactness", criterion_2),
        ("oracle equivalence", criterion_3),
        ("loss identities", criterion_4),
        ("transfer benefit", criterion_5),
        ("high-confidence precision", criterion_6),
        ("determinism", criterion_7),
        ("selection contract", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
