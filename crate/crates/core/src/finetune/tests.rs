use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::chemgraph::parse_smiles;
use crate::reaction::parse_reaction;

fn tiny(kind: EncoderKind) -> EncoderConfig {
    EncoderConfig {
        layers: 2,
        hidden_dim: 8,
        heads: 2,
        max_sp_distance: 4,
        edge_dim: 3,
        ..EncoderConfig::for_kind(kind)
    }
}

fn molecules(rows: &[(&str, f64, Option<bool>)]) -> Vec<Sample> {
    rows.iter()
        .map(|&(s, y, c)| {
            Sample::molecule(&LabeledMolecule {
                graph: parse_smiles(s).unwrap(),
                label: y,
                cliff: c,
            })
        })
        .collect()
}

fn reactions(rows: &[(&str, usize)]) -> Vec<Sample> {
    rows.iter()
        .map(|&(r, label)| {
            Sample::reaction(&LabeledReaction {
                record: parse_reaction(r).unwrap(),
                label,
            })
        })
        .collect()
}

const SMILES: [&str; 8] = ["C", "CC", "CCO", "c1ccccc1", "CC(=O)O", "CCN", "c1ccncc1", "OCCO"];

#[test]
fn constant_labels_are_fit_exactly() {
    let s = molecules(&SMILES.map(|m| (m, 2.5, None)));
    let cfg = FinetuneConfig {
        lr: 1e-3,
        epochs: 200,
        batch_size: 4,
        splits: Some(vec![1.0]),
        ..FinetuneConfig::default()
    };
    let out = finetune::<f64>(TaskKind::Regression, &cfg, &tiny(EncoderKind::Gin), &s, None).unwrap();
    let rmse = out.report.metrics["rmse"].unwrap();
    // Adam's normalized steps leave a residual of order lr
    assert!(rmse < 1e-2, "{rmse}");
    assert_eq!(out.report.eval_split, "train");
    assert_eq!(out.report.metrics["rmse_cliff"], None);
}

#[test]
fn regression_standardizes_and_reports_cliff_subset() {
    let rows: Vec<(&str, f64, Option<bool>)> = SMILES.iter().enumerate().map(|(k, &m)| (m, k as f64, Some(k % 2 == 0))).collect();
    let s = molecules(&rows);
    let cfg = FinetuneConfig {
        epochs: 2,
        splits: Some(vec![0.5, 0.5]),
        ..FinetuneConfig::default()
    };
    let out = finetune::<f64>(TaskKind::Regression, &cfg, &tiny(EncoderKind::Gin), &s, None).unwrap();
    assert_eq!(out.report.eval_split, "val");
    assert!(out.model.target_scale > 0.0);
    // reported rmse matches the metric applied to predict() on the eval rows
    let eval: Vec<&Sample> = out.splits[1].iter().map(|&i| &s[i]).collect();
    let p = predict(&out.model, &out.store, &eval).unwrap();
    let y: Vec<f64> = eval.iter().map(|e| e.value().unwrap()).collect();
    assert_eq!(out.report.metrics["rmse"], Some(metrics::rmse(p.data(), &y).unwrap()));
    assert!(out.report.metrics["rmse_cliff"].is_some() || eval.iter().all(|e| e.cliff != Some(true)));
    assert_eq!(out.history.len(), 3);
}

#[test]
fn regression_gradient_is_the_rmse_gradient() {
    // analytic check of the scaled per-example accumulation against a
    // finite difference of batch RMSE through predict()
    let s = molecules(&[("CCO", 1.0, None), ("c1ccccc1", 3.0, None), ("CC", -2.0, None)]);
    let batch: Vec<&Sample> = s.iter().collect();
    let model = FinetuneModel::new(TaskKind::Regression, tiny(EncoderKind::Gin), &[5], 1).unwrap();
    let mut store = ParameterStore::<f64>::new(4);
    model.register(&mut store).unwrap();
    let (g, _) = super::train::batch_gradients(&model, &store, &batch).unwrap();
    let y: Vec<f64> = batch.iter().map(|b| b.value().unwrap()).collect();
    let loss = |st: &ParameterStore<f64>| metrics::rmse(predict(&model, st, &batch).unwrap().data(), &y).unwrap();
    for name in ["head.1.b", "head.0.w", "enc.gin.1.mlp.0.b"] {
        let a = g.param(name).unwrap();
        for k in [0, a.data().len() - 1] {
            let mut plus = store.clone();
            let mut minus = store.clone();
            let eps = 1e-6;
            let mut v = plus.value(name).unwrap().clone();
            v.data_mut()[k] += eps;
            plus.set_value(name, v).unwrap();
            let mut v = minus.value(name).unwrap().clone();
            v.data_mut()[k] -= eps;
            minus.set_value(name, v).unwrap();
            let num = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let ana = a.data()[k];
            assert!((num - ana).abs() <= 1e-6 * num.abs().max(1e-3), "{name}[{k}]: {ana} vs {num}");
        }
    }
}

#[test]
fn pair_head_aborts_on_a_single_class() {
    let p: Vec<Sample> = (0..6)
        .map(|_| {
            Sample::pair(&LabeledPair {
                graph_a: parse_smiles("CC").unwrap(),
                graph_b: parse_smiles("CO").unwrap(),
                label: 1,
            })
        })
        .collect();
    let cfg = FinetuneConfig { epochs: 1, ..FinetuneConfig::default() };
    let err = finetune::<f64>(TaskKind::Pair, &cfg, &tiny(EncoderKind::Gin), &p, None).unwrap_err();
    assert!(matches!(err, FinetuneError::SingleClass(1)));
}

#[test]
fn pair_head_reports_classification_metrics() {
    let p: Vec<Sample> = (0..10)
        .map(|k| {
            Sample::pair(&LabeledPair {
                graph_a: parse_smiles(SMILES[k % 8]).unwrap(),
                graph_b: parse_smiles(SMILES[(k + 3) % 8]).unwrap(),
                label: k % 2,
            })
        })
        .collect();
    let cfg = FinetuneConfig { epochs: 2, ..FinetuneConfig::default() };
    let out = finetune::<f64>(TaskKind::Pair, &cfg, &tiny(EncoderKind::Gin), &p, None).unwrap();
    assert_eq!(out.splits.iter().map(Vec::len).collect::<Vec<_>>(), vec![6, 2, 2]);
    assert_eq!(out.report.eval_split, "test");
    for key in ["accuracy", "precision", "recall", "f1", "roc_auc", "train_accuracy"] {
        assert!(out.report.metrics.contains_key(key), "{key}");
    }
    assert_eq!(out.model.head_sizes, vec![16, 8, 2]);
}

#[test]
fn reaction_head_needs_graphormer() {
    let r = reactions(&[("CBr.[I-]>>CI.[Br-]", 0), ("CC=O>>CCO", 1)]);
    let err = finetune::<f64>(TaskKind::ReactionType, &FinetuneConfig::default(), &tiny(EncoderKind::Gin), &r, None).unwrap_err();
    assert!(matches!(err, FinetuneError::Unsupported(_)), "{err}");
}

#[test]
fn reaction_head_shapes() {
    let r = reactions(&[("CBr.[I-]>>CI.[Br-]", 0), ("CC=O>[Na+].[BH4-]>CCO", 1), ("CC(=O)O.OC>>CC(=O)OC.O", 2)]);
    let model = FinetuneModel::new(TaskKind::ReactionType, tiny(EncoderKind::Graphormer), &[1024, 1024], 3).unwrap();
    assert_eq!(model.head_sizes, vec![16, 1024, 1024, 3]);
    let mut store = ParameterStore::<f32>::new(0);
    model.register(&mut store).unwrap();
    let batch: Vec<&Sample> = r.iter().collect();
    assert_eq!(predict(&model, &store, &batch).unwrap().shape(), &[3, 3]);
    match &r[1].input {
        TaskInput::Reaction { input, groups } => {
            // reagents are dropped: 2 reactant atoms, 3 product atoms
            assert_eq!(input.atom_count(), 6);
            assert_eq!(groups[0], vec![0, 1, 2]);
            assert_eq!(groups[1], vec![3, 4, 5]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn frozen_encoder_is_untouched() {
    let s = molecules(&SMILES.map(|m| (m, m.len() as f64, None)));
    let cfg = FinetuneConfig {
        epochs: 2,
        lr: 1e-2,
        freeze_encoder: true,
        splits: Some(vec![1.0]),
        ..FinetuneConfig::default()
    };
    let enc = tiny(EncoderKind::Gin);
    let out = finetune::<f64>(TaskKind::Regression, &cfg, &enc, &s, None).unwrap();
    let mut fresh = ParameterStore::<f64>::new(cfg.seed);
    out.model.register(&mut fresh).unwrap();
    for name in fresh.names() {
        let same = fresh.value(name).unwrap() == out.store.value(name).unwrap();
        assert_eq!(same, name.starts_with("enc."), "{name}");
    }
}

#[test]
fn init_copies_encoder_parameters() {
    let enc = tiny(EncoderKind::Gin);
    let mut pre = ParameterStore::<f64>::new(99);
    crate::encoders::Encoder::new(enc.clone()).unwrap().register(&mut pre).unwrap();
    let s = molecules(&SMILES.map(|m| (m, 1.0, None)));
    let cfg = FinetuneConfig { epochs: 0, ..FinetuneConfig::default() };
    let out = finetune::<f64>(TaskKind::Regression, &cfg, &enc, &s, Some(&pre)).unwrap();
    for name in pre.names() {
        assert_eq!(pre.value(name).unwrap(), out.store.value(name).unwrap());
    }
    let empty = ParameterStore::<f64>::new(0);
    assert!(matches!(
        finetune::<f64>(TaskKind::Regression, &cfg, &enc, &s, Some(&empty)),
        Err(FinetuneError::Checkpoint(_))
    ));
}

#[test]
fn config_defaults_and_validation() {
    let c = FinetuneConfig::default();
    assert_eq!((c.lr, c.freeze_encoder), (1e-4, false));
    assert_eq!(c.splits_for(TaskKind::Regression), vec![0.8, 0.2]);
    assert_eq!(c.splits_for(TaskKind::Pair), vec![0.6, 0.2, 0.2]);
    let bad = FinetuneConfig { splits: Some(vec![0.5, 0.4]), ..c.clone() };
    assert!(bad.validate(TaskKind::Pair).is_err());
    assert!(serde_json::from_str::<FinetuneConfig>(r#"{"rate": 1}"#).is_err());
}

#[test]
fn untrained_head_is_near_chance() {
    // many distinct molecules, labels assigned at random over 4 classes
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pool = ["C", "CC", "CCC", "CCCC", "CO", "CCO", "CCCO", "CN", "CCN", "c1ccccc1", "Cc1ccccc1", "OCCO"];
    let rows: Vec<Sample> = (0..400)
        .map(|_| {
            use rand::Rng;
            Sample::pair(&LabeledPair {
                graph_a: parse_smiles(pool[rng.random_range(0..pool.len())]).unwrap(),
                graph_b: parse_smiles(pool[rng.random_range(0..pool.len())]).unwrap(),
                label: rng.random_range(0..4),
            })
        })
        .collect();
    let cfg = FinetuneConfig { epochs: 0, splits: Some(vec![1.0]), ..FinetuneConfig::default() };
    let out = finetune::<f64>(TaskKind::Pair, &cfg, &tiny(EncoderKind::Gin), &rows, None).unwrap();
    let acc = out.report.metrics["accuracy"].unwrap();
    // labels are independent of the inputs, so any fixed predictor sits at 1/4 up to sampling noise
    assert!((acc - 0.25).abs() < 0.08, "{acc}");
}

proptest! {
    #[test]
    fn splits_partition_the_rows(n in 0usize..200, a in 0.0f64..1.0, seed in any::<u64>()) {
        let b = (1.0 - a) / 2.0;
        let parts = split_indices(n, &[a, b, 1.0 - a - b], &mut ChaCha8Rng::seed_from_u64(seed));
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!((parts[0].len() as f64 - a * n as f64).abs() <= 1.0);
        let again = split_indices(n, &[a, b, 1.0 - a - b], &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(parts, again);
    }
}
