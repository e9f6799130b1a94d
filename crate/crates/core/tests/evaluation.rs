use fcl_core::data::{generate_synthetic, partition, split_train_test, PartitionSpec};
use fcl_core::evaluation::{
    accuracy, extract_representations, probe_training_set, train_probe, LinearProbe, LpMode, ProbeEvaluator,
};
use fcl_core::model::{ModelDims, ModelParams};
use fcl_core::Rng;

fn dims() -> ModelDims {
    ModelDims { input_dim: 16, num_clients: 8, ..ModelDims::default() }
}

#[test]
fn probing_leaves_the_model_untouched() {
    let ds = generate_synthetic(10, 16, 30, 2.0, &mut Rng::new(0)).unwrap();
    let params = ModelParams::init(&dims(), &mut Rng::new(1)).unwrap();
    let before = params.clone();
    let mut eval = ProbeEvaluator::new(params.encoder.forward(&ds.x).unwrap().output.cols(), 10, (ds.x.clone(), ds.y.clone()), &ds, 5, 0.1);
    eval.evaluate(&params).unwrap();
    assert_eq!(params, before);
    assert_eq!(eval.probe.version(), 1);
}

#[test]
fn probe_is_warm_started() {
    let ds = generate_synthetic(10, 16, 30, 2.0, &mut Rng::new(2)).unwrap();
    let params = ModelParams::init(&dims(), &mut Rng::new(3)).unwrap();
    let reps = extract_representations(&params, &ds.x).unwrap();
    let probe = LinearProbe::new(10, reps.cols());
    let once = train_probe(&probe, &reps, &ds.y, 4, 0.1).unwrap();
    let twice = train_probe(&once, &reps, &ds.y, 4, 0.1).unwrap();
    let direct = train_probe(&probe, &reps, &ds.y, 8, 0.1).unwrap();
    assert_eq!((once.version(), twice.version()), (1, 2));
    assert_eq!(twice.weight, direct.weight);
    assert_eq!(twice.bias, direct.bias);
}

#[test]
fn probe_training_set_size_follows_mode() {
    let ds = generate_synthetic(10, 16, 50, 2.0, &mut Rng::new(4)).unwrap();
    let (train, _) = split_train_test(&ds, 0.2, &mut Rng::new(5)).unwrap();
    let spec = PartitionSpec { num_clients: 8, labelled_fraction: 0.1, ..Default::default() };
    let clients = partition(&train, &spec, &mut Rng::new(6)).unwrap();
    let (x, y) = probe_training_set(&train, &clients, LpMode::FullLabels);
    assert_eq!((x.rows(), y.len()), (train.len(), train.len()));
    assert_eq!(x, train.x);
    let expected: usize = clients.iter().map(|c| (0.1 * c.len() as f64).floor() as usize).sum();
    let (x, y) = probe_training_set(&train, &clients, LpMode::LabelledSubset);
    assert_eq!((x.rows(), y.len()), (expected, expected));
}

#[test]
fn untrained_probe_is_at_chance() {
    let mut total = 0.0;
    for seed in 0..10u64 {
        let ds = generate_synthetic(10, 16, 100, 2.0, &mut Rng::new(seed)).unwrap();
        let mut rng = Rng::new(seed + 100);
        let mut probe = LinearProbe::new(10, 16);
        for v in probe.weight.as_mut_slice() {
            *v = rng.normal();
        }
        // random projections of random classes
        let labels: Vec<usize> = (0..ds.len()).map(|_| rng.below(10)).collect();
        total += accuracy(&probe, &ds.x, &labels).unwrap();
    }
    let mean = total / 10.0;
    assert!((mean - 0.10).abs() < 0.03, "{mean}");
}

#[test]
fn probe_learns_separable_classes() {
    let ds = generate_synthetic(10, 16, 100, 4.0, &mut Rng::new(7)).unwrap();
    let (train, test) = split_train_test(&ds, 0.2, &mut Rng::new(8)).unwrap();
    let probe = train_probe(&LinearProbe::new(10, 16), &train.x, &train.y, 200, 0.5).unwrap();
    assert!(accuracy(&probe, &test.x, &test.y).unwrap() > 0.9);
}
