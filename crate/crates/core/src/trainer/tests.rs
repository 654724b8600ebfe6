use super::*;
use crate::embedding::normalize;

fn rand_vec(rng: &mut SplitMix64, d: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..d).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    normalize(&v).unwrap().into_iter().map(|x| x as f32).collect()
}

fn rand_params(rng: &mut SplitMix64, d: usize, scale: f64) -> AdapterParams {
    let w = (0..d * d).map(|_| (rng.next_f64() * 2.0 - 1.0) * scale).collect();
    AdapterParams::from_matrix(d, w).unwrap()
}

fn finite_difference(params: &AdapterParams, f: impl Fn(&AdapterParams) -> f64) -> Vec<f64> {
    let h = 1e-4;
    (0..params.matrix().len())
        .map(|i| {
            let mut up = params.clone();
            up.matrix_mut()[i] += h;
            let mut down = params.clone();
            down.matrix_mut()[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[test]
fn list_gradients_match_finite_differences() {
    let mut rng = SplitMix64::new(2024);
    for trial in 0..100 {
        let d = 2 + rng.below(15) as usize;
        let m = 1 + rng.below(6) as usize;
        let q = rand_vec(&mut rng, d);
        let ps: Vec<Vec<f32>> = (0..m).map(|_| rand_vec(&mut rng, d)).collect();
        let refs: Vec<&[f32]> = ps.iter().map(Vec::as_slice).collect();
        let scores: Vec<f64> = (0..m).map(|_| rng.next_f64() * 10.0).collect();
        let params = rand_params(&mut rng, d, 0.2);
        for kind in [LossKind::Listnet, LossKind::Listmle] {
            let (_, g) = list_objective(kind, &q, &refs, &scores, &params, 2.0, false).unwrap();
            let numeric = finite_difference(&params, |p| {
                list_objective(kind, &q, &refs, &scores, p, 2.0, false).unwrap().0
            });
            let err = max_relative_error(&g, &numeric);
            assert!(err < 1e-4, "trial {trial} {kind:?}: relative error {err}");
        }
    }
}

#[test]
fn infonce_gradient_matches_finite_differences() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..20 {
        let d = 3 + rng.below(8) as usize;
        let b = 2 + rng.below(4) as usize;
        let qs: Vec<Vec<f32>> = (0..b).map(|_| rand_vec(&mut rng, d)).collect();
        let ps: Vec<Vec<f32>> = (0..b).map(|_| rand_vec(&mut rng, d)).collect();
        let qr: Vec<&[f32]> = qs.iter().map(Vec::as_slice).collect();
        let pr: Vec<&[f32]> = ps.iter().map(Vec::as_slice).collect();
        let ids: Vec<String> = (0..b).map(|i| format!("c{}", i % (b - 1).max(2))).collect();
        let idr: Vec<&str> = ids.iter().map(String::as_str).collect();
        let params = rand_params(&mut rng, d, 0.2);
        let (_, g) = infonce_objective(&qr, &pr, &idr, 0.5, &params).unwrap();
        let numeric = finite_difference(&params, |p| infonce_objective(&qr, &pr, &idr, 0.5, p).unwrap().0);
        assert!(max_relative_error(&g, &numeric) < 1e-4);
    }
}

#[test]
fn stationary_sample_has_zero_gradient() {
    // Two passages equidistant from the query with equal targets.
    let q = [1.0f32, 0.0, 0.0];
    let a = [0.0f32, 1.0, 0.0];
    let b = [0.0f32, 0.0, 1.0];
    let (_, g) = list_objective(LossKind::Listnet, &q, &[&a, &b], &[3.0, 3.0], &AdapterParams::zeros(3), 1.0, false)
        .unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn gradient_is_additive_over_samples() {
    let mut rng = SplitMix64::new(9);
    let d = 6;
    let params = rand_params(&mut rng, d, 0.1);
    let q1 = rand_vec(&mut rng, d);
    let q2 = rand_vec(&mut rng, d);
    let p: Vec<Vec<f32>> = (0..4).map(|_| rand_vec(&mut rng, d)).collect();
    let (_, g1) = list_objective(LossKind::Listnet, &q1, &[&p[0], &p[1]], &[2.0, 1.0], &params, 1.0, false).unwrap();
    let (_, g2) = list_objective(LossKind::Listnet, &q2, &[&p[2], &p[3]], &[0.5, 4.0], &params, 1.0, false).unwrap();
    // The same two lists expressed through one pair graph.
    let mut graph = PairGraph::new(&params, &[&q1, &p[0], &p[1], &q2, &p[2], &p[3]]).unwrap();
    for (qi, cols, scores) in [(0usize, [1usize, 2], [2.0, 1.0]), (3, [4, 5], [0.5, 4.0])] {
        let sims: Vec<f64> = cols.iter().map(|&c| graph.sim(qi, c)).collect();
        let t = target_distribution(&scores, 1.0).unwrap();
        for (c, g) in cols.iter().zip(listnet_grad(&sims, &t)) {
            graph.push(qi, *c, g);
        }
    }
    let joint = graph.weight_gradient();
    for i in 0..joint.len() {
        assert!((joint[i] - g1[i] - g2[i]).abs() < 1e-12);
    }
}

#[test]
fn small_step_from_zero_decreases_loss() {
    let mut rng = SplitMix64::new(31);
    for _ in 0..20 {
        let d = 8;
        let q = rand_vec(&mut rng, d);
        let ps: Vec<Vec<f32>> = (0..4).map(|_| rand_vec(&mut rng, d)).collect();
        let refs: Vec<&[f32]> = ps.iter().map(Vec::as_slice).collect();
        let scores = [9.0, 4.0, 2.0, 0.5];
        let zero = AdapterParams::zeros(d);
        let (before, g) = list_objective(LossKind::Listnet, &q, &refs, &scores, &zero, 1.0, false).unwrap();
        let mut stepped = zero.clone();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1e-3, d * d);
        opt.step(stepped.matrix_mut(), &g);
        let (after, _) = list_objective(LossKind::Listnet, &q, &refs, &scores, &stepped, 1.0, false).unwrap();
        assert!(after < before);
    }
}

fn toy_setup() -> (Vec<RankingSample>, BaseEmbeddings) {
    let mut rng = SplitMix64::new(5);
    let d = 8;
    let mut queries = EmbeddingTable::new(d);
    let mut chunks = EmbeddingTable::new(d);
    let mut samples = Vec::new();
    for qi in 0..6 {
        let qid = format!("q{qi}");
        queries.insert(qid.clone(), rand_vec(&mut rng, d));
        let passages: Vec<String> = (0..3).map(|j| format!("c{}", (qi + j) % 9)).collect();
        samples.push(RankingSample {
            query_id: qid.clone(),
            query_text: qid,
            passages,
            scores: vec![6.0, 3.0, 1.0],
            ranks: vec![0, 3, 8],
        });
    }
    for c in 0..9 {
        chunks.insert(format!("c{c}"), rand_vec(&mut rng, d));
    }
    (samples, BaseEmbeddings { queries, chunks })
}

#[test]
fn zero_steps_leave_params() {
    let (samples, emb) = toy_setup();
    let cfg = TrainConfig {
        steps: 0,
        ..TrainConfig::default()
    };
    let out = train(&mut FixedSamples(samples), &emb, AdapterParams::zeros(8), &cfg).unwrap();
    assert!(out.params.is_zero() && out.reports.is_empty());
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let (samples, emb) = toy_setup();
    for loss in [LossKind::Listnet, LossKind::Listmle, LossKind::Infonce] {
        let cfg = TrainConfig {
            loss,
            steps: 300,
            lr: 1e-2,
            infonce_batch: 4,
            infonce_tau: 0.5,
            ..TrainConfig::default()
        };
        let a = train(&mut FixedSamples(samples.clone()), &emb, AdapterParams::zeros(8), &cfg).unwrap();
        let b = train(&mut FixedSamples(samples.clone()), &emb, AdapterParams::zeros(8), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.reports.len(), 300);
        let head: f64 = a.reports[..20].iter().map(|r| r.loss).sum();
        let tail: f64 = a.reports[280..].iter().map(|r| r.loss).sum();
        assert!(tail < head, "{loss:?}: {head} -> {tail}");
    }
}

#[test]
fn non_finite_loss_aborts() {
    let (mut samples, emb) = toy_setup();
    for s in &mut samples {
        s.scores[0] = f64::INFINITY;
    }
    let err = train(&mut FixedSamples(samples), &emb, AdapterParams::zeros(8), &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_) | Error::NonFiniteLoss { .. }));
}

#[test]
fn checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.bin");
    let mut rng = SplitMix64::new(1);
    let params = rand_params(&mut rng, 5, 1.0);
    let ck = Checkpoint {
        loss: LossKind::Listmle,
        step: 1000,
        params: params.clone(),
    };
    ck.save(&path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 4 + 4 + 4 + 4 + 8 + 25 * 4);
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.loss, LossKind::Listmle);
    assert_eq!(back.step, 1000);
    for (a, b) in back.params.matrix().iter().zip(params.matrix()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn loss_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loss.csv");
    let reports = vec![LossReport {
        step: 0,
        loss: 0.5,
        grad_norm: 0.25,
        elapsed_ms: 1.0,
    }];
    write_loss_curve(&path, &reports).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "step,loss,grad_norm\n0,0.5,0.25\n");
}
