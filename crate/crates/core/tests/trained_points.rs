//! Properties of models trained on the two-moons domain. The two models are
//! trained once and shared by every test in this file.

use std::sync::OnceLock;

use decdm::diffusion::{
    draw_noise, loss_value, make_schedule, train, EpsPredictor, MlpArch, ScheduleKind, TrainConfig,
};
use decdm::metrics::{manifold_proximity, row_distances};
use decdm::translate::{translate, DomainPair};
use decdm::{decode, encode, make_dataset, DenoiserModel, Domain, IntegrationPlan, LatentBatch};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Trained {
    data: Array2<f64>,
    model: DenoiserModel,
    twin: DenoiserModel,
    initial: DenoiserModel,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let schedule = make_schedule(1000, ScheduleKind::LinearBeta).unwrap();
        let arch = MlpArch::points(2);
        let data = make_dataset(Domain::TM, 4096, 1).unwrap().to_array();
        let cfg = TrainConfig::default();
        let (model, _) = train(data.view(), &arch, &cfg, &schedule, "tm", vec![2]).unwrap();
        let other = make_dataset(Domain::TM, 4096, 2).unwrap().to_array();
        let twin_cfg = TrainConfig {
            seed: 1,
            ..cfg.clone()
        };
        let (twin, _) = train(
            other.view(),
            &arch,
            &twin_cfg,
            &schedule,
            "tm-twin",
            vec![2],
        )
        .unwrap();
        let initial = DenoiserModel::init(arch, schedule, "tm", vec![2], cfg.seed).unwrap();
        Trained {
            data,
            model,
            twin,
            initial,
        }
    })
}

#[test]
fn held_out_loss_halves() {
    let t = trained();
    let held = make_dataset(Domain::TM, 2048, 77).unwrap().to_array();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = draw_noise(held.nrows(), 2, 1000, &mut rng);
    let before = loss_value(
        &t.initial.arch,
        &t.initial.params,
        &t.initial.schedule,
        held.view(),
        &draws,
    )
    .unwrap();
    let after = loss_value(
        &t.model.arch,
        &t.model.params,
        &t.model.schedule,
        held.view(),
        &draws,
    )
    .unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn noise_prediction_stays_bounded_near_the_data() {
    let t = trained();
    let eps = t.model.predict_eps(t.data.view(), 1.0);
    let mean_norm = eps
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .sum::<f64>()
        / eps.nrows() as f64;
    // E||eps|| for eps ~ N(0, I_2) is sqrt(pi / 2)
    let bound = 3.0 * (std::f64::consts::PI / 2.0).sqrt();
    assert!(mean_norm <= bound, "{mean_norm}");
}

#[test]
fn latents_look_gaussian() {
    let t = trained();
    let z = encode(&t.model, t.data.view(), 200).unwrap().latents;
    // Loose bounds: the bias of a small trained model dominates sampling error.
    for col in z.columns() {
        let mean = col.mean().unwrap();
        let var = col.var(0.0);
        assert!(mean.abs() <= 0.25, "mean {mean}");
        assert!((0.6..=1.4).contains(&var), "var {var}");
    }
}

#[test]
fn decoded_prior_samples_land_on_the_moons() {
    let t = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = Array2::from_shape_simple_fn((1000, 2), || rng.sample(StandardNormal));
    let batch = LatentBatch {
        latents: z,
        source_domain_tag: "prior".into(),
        schedule_hash: t.model.schedule.hash(),
        data_shape: vec![2],
        plan: IntegrationPlan::encoding(1000, 200).unwrap(),
    };
    let x = decode(&t.model, &batch).unwrap();
    let frac = manifold_proximity(x.view(), t.data.view(), 0.3).unwrap();
    assert!(frac >= 0.95, "{frac}");
}

#[test]
fn doubling_steps_shrinks_round_trip_error() {
    let t = trained();
    let x = make_dataset(Domain::TM, 512, 21).unwrap().to_array();
    let same = DomainPair::new(t.model.clone(), t.model.clone()).unwrap();
    let errs: Vec<Vec<f64>> = [100, 200]
        .iter()
        .map(|&n| row_distances(x.view(), translate(x.view(), &same, n).unwrap().view()).unwrap())
        .collect();
    let improved = errs[0].iter().zip(&errs[1]).filter(|(a, b)| b <= a).count();
    assert!(improved as f64 >= 0.9 * 512.0, "{improved}/512");
}

#[test]
fn same_distribution_translation_is_near_identity() {
    let t = trained();
    let pair = DomainPair::new(t.model.clone(), t.twin.clone()).unwrap();
    let x = make_dataset(Domain::TM, 512, 33).unwrap().to_array();
    let y = translate(x.view(), &pair, 200).unwrap();
    let d = row_distances(x.view(), y.view()).unwrap();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    // Independently trained twins learn slightly different flows, so compare
    // against the typical distance between two unrelated samples.
    let shifted = ndarray::concatenate![
        ndarray::Axis(0),
        x.slice(ndarray::s![1.., ..]),
        x.slice(ndarray::s![..1, ..])
    ];
    let unrelated = row_distances(x.view(), shifted.view()).unwrap();
    let baseline = unrelated.iter().sum::<f64>() / unrelated.len() as f64;
    assert!(mean <= 0.25 * baseline, "{mean} vs unrelated {baseline}");
}
