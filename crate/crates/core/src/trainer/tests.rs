use super::*;
use crate::encoder::{Encoder, EncoderConfig, TokenVocab};
use crate::ingest::{split_by_source, DatasetSplit, FunctionRecord};
use crate::nn::{Graph, ParamStore};
use crate::synthetic::{synthetic_dataset, synthetic_labels};
use crate::tasks::{HeadConfig, Model};
use crate::Exec;

struct Toy {
    data: Vec<FunctionRecord>,
    labels: Vec<Vec<String>>,
    split: DatasetSplit,
}

impl Toy {
    fn new(sources: usize, seed: u64) -> Self {
        let data = synthetic_dataset(sources, 3, seed);
        let labels = synthetic_labels(sources, 3, seed);
        let split = split_by_source(&data, 5, seed).unwrap().remove(0);
        Toy { data, labels, split }
    }

    fn fold(&self) -> FoldData<'_> {
        FoldData { records: &self.data, labels: &self.labels, split: &self.split }
    }
}

fn small_cfg() -> TrainConfig {
    TrainConfig { max_steps: 6, pretrain_steps: 4, eval_every: 3, batch_size: 4, ..TrainConfig::toy() }
}

fn same_values(a: &ParamStore, b: &ParamStore) -> bool {
    a.len() == b.len()
        && a.iter().all(|(n, p)| {
            let q = b.param(n).unwrap();
            p.value.data == q.value.data && p.adam_m.data == q.adam_m.data && p.adam_v.data == q.adam_v.data
        })
}

#[test]
fn checkpoint_round_trip() {
    let toy = Toy::new(6, 3);
    let model = build_model(toy.fold(), EncoderConfig::toy(), HeadConfig::toy()).unwrap();
    let store = model.init_params(3);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &model, &store, Some(&small_cfg())).unwrap();
    let (m2, s2) = load_checkpoint(dir.path()).unwrap();
    assert!(same_values(&store, &s2));
    assert!(m2.names.labels().eq(model.names.labels()));
    assert_eq!(m2.encoder.vocab.len(), model.encoder.vocab.len());
    let rec = &toy.data[0];
    assert_eq!(model.predict_name(&store, rec, 8).unwrap(), m2.predict_name(&s2, rec, 8).unwrap());

    std::fs::remove_file(dir.path().join(checkpoint::NAME_VOCAB_FILE)).unwrap();
    assert!(load_checkpoint(dir.path()).is_err());
}

#[test]
fn pretraining_resumes_exactly() {
    let toy = Toy::new(6, 5);
    let fold = toy.fold();
    let model = build_model(fold, EncoderConfig::toy(), HeadConfig::toy()).unwrap();
    let train = fold::pretrain_samples(fold, &fold.train().unwrap(), 5, Exec::Serial).unwrap();
    let cfg = TrainConfig { eval_every: 100, ..small_cfg() };

    let mut straight = model.init_params(5);
    pretrain_alm(&model.encoder, &mut straight, &train, &[], &cfg, 0, 6, Exec::Serial).unwrap();

    let mut first = model.init_params(5);
    pretrain_alm(&model.encoder, &mut first, &train, &[], &cfg, 0, 3, Exec::Serial).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &model, &first, None).unwrap();
    let (_, mut resumed) = load_checkpoint(dir.path()).unwrap();
    pretrain_alm(&model.encoder, &mut resumed, &train, &[], &cfg, 3, 3, Exec::Serial).unwrap();

    assert_eq!(straight.step, 6);
    assert_eq!(resumed.step, 6);
    assert!(same_values(&straight, &resumed));
}

#[test]
fn pretraining_rejects_shared_functions() {
    let toy = Toy::new(6, 5);
    let fold = toy.fold();
    let model = build_model(fold, EncoderConfig::toy(), HeadConfig::toy()).unwrap();
    let train = fold::pretrain_samples(fold, &fold.train().unwrap(), 5, Exec::Serial).unwrap();
    let mut store = model.init_params(5);
    let err = pretrain_alm(&model.encoder, &mut store, &train, &train[..1], &small_cfg(), 0, 1, Exec::Serial).unwrap_err();
    assert!(matches!(err, crate::Error::Leakage(_)), "{err}");
}

#[test]
fn no_similarity_leaves_similarity_head_untouched() {
    let toy = Toy::new(6, 9);
    let fold = toy.fold();
    let model = build_model(fold, EncoderConfig::toy(), HeadConfig::toy()).unwrap();
    let start = model.init_params(9);

    // gradient of the joint loss with lambda2 = 0
    let w = LossWeights { lambda1: 1.0, lambda2: 0.0, margin: 0.5, literal: false };
    let gold = model.names.encode(&toy.labels[0]);
    let mut g = Graph::new(&start);
    let (l, _) = multitask_loss(&model, &mut g, &toy.data[0], &gold, Some((&toy.data[1], &toy.data[3])), &w).unwrap();
    let grads = g.backward(l);
    assert_eq!(grads.sq_norm_with_prefix("sim."), 0.0);

    let mut store = start.clone();
    let cfg = small_cfg();
    let r = train_multitask(&model, &mut store, fold, &cfg, Ablation::NoSimilarity, Exec::Serial).unwrap();
    assert!(r.history.iter().all(|s| s.j_cs == 0.0));
    for name in ["sim.h1.w", "sim.h2.w", "sim.h1.b"] {
        assert_eq!(store.value(name).data, start.value(name).data, "{name}");
    }
    assert_ne!(store.value("dec.out.w").data, start.value("dec.out.w").data);
}

#[test]
fn joint_gradient_is_weighted_sum() {
    let toy = Toy::new(6, 2);
    let fold = toy.fold();
    let model = build_model(fold, EncoderConfig::toy(), HeadConfig::toy()).unwrap();
    let store = model.init_params(2);
    let gold = model.names.encode(&toy.labels[0]);
    let yz = Some((&toy.data[1], &toy.data[3]));
    let grad = |l1: f64, l2: f64| {
        let w = LossWeights { lambda1: l1, lambda2: l2, margin: 3.0, literal: false };
        let mut g = Graph::new(&store);
        let (l, _) = multitask_loss(&model, &mut g, &toy.data[0], &gold, yz, &w).unwrap();
        g.backward(l)
    };
    let cg = grad(1.0, 0.0);
    let cs = grad(0.0, 1.0);
    let joint = grad(0.7, 1.3);
    assert!(cs.sq_norm_with_prefix("sim.") > 0.0);
    for name in store.names() {
        let get = |gr: &crate::nn::Gradients| gr.get(&name).map(|m| m.data.clone());
        let n = store.value(&name).data.len();
        let a = get(&cg).unwrap_or(vec![0.0; n]);
        let b = get(&cs).unwrap_or(vec![0.0; n]);
        let j = get(&joint).unwrap_or(vec![0.0; n]);
        for i in 0..n {
            let want = 0.7 * a[i] + 1.3 * b[i];
            assert!((j[i] - want).abs() <= 1e-9 * (1.0 + want.abs()), "{name}[{i}]: {} vs {want}", j[i]);
        }
    }
}

#[test]
fn early_stopping_after_patience() {
    let toy = Toy::new(6, 4);
    let fold = toy.fold();
    let model = build_model(fold, EncoderConfig::toy(), HeadConfig::toy()).unwrap();
    let mut store = model.init_params(4);
    // steps too small to change any greedy prediction
    let cfg = TrainConfig { lr: 1e-300, max_steps: 40, eval_every: 2, patience: 3, ..small_cfg() };
    let r = train_multitask(&model, &mut store, fold, &cfg, Ablation::None, Exec::Serial).unwrap();
    assert!(r.stopped_early);
    assert_eq!(r.validation.len(), 4);
    assert_eq!(r.steps, 8);
    assert!(r.validation.iter().all(|v| v.1 == r.validation[0].1));
}

#[test]
fn training_is_deterministic_across_exec_modes() {
    let toy = Toy::new(6, 11);
    let cfg = small_cfg();
    let run = |exec| train_fold(toy.fold(), EncoderConfig::toy(), HeadConfig::toy(), &cfg, Ablation::None, exec).unwrap();
    let (_, a, ra) = run(Exec::Serial);
    let (_, b, rb) = run(Exec::Parallel);
    let (_, c, _) = run(Exec::Parallel);
    assert!(same_values(&a, &b));
    assert!(same_values(&b, &c));
    assert_eq!(ra, rb);
    assert!(ra.pretrain.is_some());
}

#[test]
fn no_pretrain_skips_alm() {
    let toy = Toy::new(6, 11);
    let cfg = TrainConfig { max_steps: 2, ..small_cfg() };
    let (_, _, r) = train_fold(toy.fold(), EncoderConfig::toy(), HeadConfig::toy(), &cfg, Ablation::NoPretrain, Exec::Serial).unwrap();
    assert!(r.pretrain.is_none());
    assert_eq!("no-similarity".parse::<Ablation>().unwrap(), Ablation::NoSimilarity);
    assert!("nope".parse::<Ablation>().is_err());
}

#[test]
fn vocabulary_from_other_records_is_leakage() {
    let toy = Toy::new(6, 13);
    let fold = toy.fold();
    let all: Vec<(&str, &[String])> = toy.data.iter().zip(&toy.labels).map(|(r, l)| (r.id.as_str(), l.as_slice())).collect();
    let names = crate::tasks::NameVocabulary::build(all);
    let enc = Encoder::new(EncoderConfig::toy(), TokenVocab::build(&toy.data, 1)).unwrap();
    let model = Model::new(enc, HeadConfig::toy(), names).unwrap();
    let mut store = model.init_params(1);
    let err = train_multitask(&model, &mut store, fold, &small_cfg(), Ablation::None, Exec::Serial).unwrap_err();
    assert!(matches!(err, crate::Error::Leakage(_)), "{err}");
}

#[test]
fn overfits_a_frozen_batch() {
    let toy = Toy::new(6, 21);
    let fold = toy.fold();
    let model = build_model(fold, EncoderConfig::toy(), HeadConfig::toy()).unwrap();
    let mut store = model.init_params(21);
    let train = fold.train().unwrap();
    let batch: Vec<_> = train.iter().take(4).map(|&i| (&toy.data[i], model.names.encode(&toy.labels[i]))).collect();
    let cfg = TrainConfig::toy();
    let losses = fit_names(&model, &mut store, &batch, &cfg, 150, Exec::Parallel).unwrap();
    let last = *losses.last().unwrap();
    assert!(last < 0.1, "final J_cg {last}, start {}", losses[0]);
}
