mod common;

use common::*;
use qahm::eval::*;
use qahm::nets::LayerWidths;
use qahm::rng::stream;
use qahm::sampler::MetropolisConfig;
use qahm::{Dataset, QahmError, SamplerBackend, TrainState};

#[test]
fn visible_distribution_matches_brute_force() {
    let widths = LayerWidths::new(0, 4, vec![3, 2]).unwrap();
    let state = random_state(&widths, 1.0, 0.4, 1.0, 1);
    let p = exact_visible_distribution(&state).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (k, pk) in p.iter().enumerate() {
        let v = spins(k, 4);
        assert!((pk.ln() - oracle_log_likelihood(&state, &v)).abs() < 1e-10);
    }
}

#[test]
fn bound_estimate_agrees_with_exhaustive_bound() {
    let widths = LayerWidths::new(0, 4, vec![3, 2]).unwrap();
    let state = random_state(&widths, 1.0, 0.5, 1.0, 2);
    let data = Dataset::bars_and_stripes(2, 2).unwrap().visible_vectors();
    let est = bound_estimate(&state, &SamplerBackend::ExactQuantumDiagonal, &data, 4000, 3).unwrap();
    let exact = exhaustive_bound(&state, &data).unwrap();
    assert!(
        (est.mean - exact).abs() < 4.0 * est.std_err + 1e-9,
        "{est:?} vs {exact}"
    );
    assert!(exact <= mean_log_likelihood(&state, &data).unwrap() + 1e-9);
}

#[test]
fn bound_estimate_refuses_inexact_backends() {
    let widths = LayerWidths::new(0, 2, vec![2]).unwrap();
    let state = TrainState::init(&widths, 1.0, 0.0, None, 0).unwrap();
    let backend = SamplerBackend::mcmc(MetropolisConfig::default()).unwrap();
    assert!(matches!(
        bound_estimate(&state, &backend, &[vec![1.0, 1.0]], 10, 0),
        Err(QahmError::WrongBackend { .. })
    ));
}

#[test]
fn kl_capacity_limit() {
    let widths = LayerWidths::new(0, 8, vec![4, 2]).unwrap();
    let state = TrainState::init(&widths, 1.0, 0.0, None, 0).unwrap();
    assert!(matches!(
        exact_kl(&state, &[vec![1.0; 8]]),
        Err(QahmError::Capacity { .. })
    ));
}

#[test]
fn kl_of_initial_model_near_uniform() {
    let widths = LayerWidths::new(0, 4, vec![4, 2]).unwrap();
    let state = TrainState::init(&widths, 1.0, 0.0, None, 5).unwrap();
    let data = Dataset::bars_and_stripes(2, 2).unwrap().visible_vectors();
    let kl = exact_kl(&state, &data).unwrap();
    assert!((kl - (16.0f64 / 6.0).ln()).abs() < 1e-3);
}

#[test]
fn nearest_neighbors_order_and_copies() {
    let dataset = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]];
    let samples = vec![vec![0.9, 0.0], vec![0.0, 0.0]];
    let pairs = nearest_neighbors(&samples, &dataset, 2).unwrap();
    assert_eq!(pairs.len(), 4);
    assert_eq!((pairs[0].sample, pairs[0].index), (0, 1));
    assert!((pairs[0].distance - 0.1).abs() < 1e-12);
    assert_eq!((pairs[2].sample, pairs[2].index), (1, 0));
    assert!(pairs[2].is_copy() && !pairs[0].is_copy());
    let report = EvalReport {
        nn_pairs: pairs,
        ..EvalReport::default()
    };
    assert_eq!(report.copies(), 1);
    assert!(report.summary_json().contains("\"exact_copies\":1"));
    assert_eq!(report.neighbors_csv().lines().count(), 5);
}

#[test]
fn neighbor_dimension_mismatch() {
    assert!(nearest_neighbors(&[vec![0.0; 3]], &[vec![0.0; 2]], 1).is_err());
}

#[test]
fn image_grid_round_trip() {
    let mut rng = stream(6, &[]);
    let samples: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..12).map(|_| rand::Rng::random_range(&mut rng, -1.0..=1.0)).collect())
        .collect();
    let bytes = encode_image_grid(&samples, 3, 4, 2).unwrap();
    let img = decode_pgm(&bytes).unwrap();
    assert_eq!((img.width, img.height), (2 * 4 + 1, 3 * 3 + 2));
    for (n, s) in samples.iter().enumerate() {
        let tile = grid_tile(&img, 3, 4, 2, n);
        for (a, b) in tile.iter().zip(s) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }
    assert!(img.pixels[4] == SEPARATOR);
}

#[test]
fn pgm_rejects_bad_inputs() {
    assert!(encode_image_grid(&[vec![1.5]], 1, 1, 1).is_err());
    assert!(decode_pgm(b"P2 1 1 255\n\x00").is_err());
    assert!(decode_pgm(b"P5 2 2 255\n\x00").is_err());
    assert!(decode_pgm(b"P5 1 1 65535\n\x00").is_err());
}

#[test]
fn pgm_file_io() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.pgm");
    write_image_grid(&[vec![-1.0, 1.0]], 1, 2, 4, &path).unwrap();
    assert_eq!(read_pgm(&path).unwrap().pixels, vec![0, 255]);
}

#[test]
fn class_readout_follows_generator_bias() {
    let widths = LayerWidths::new(2, 3, vec![2]).unwrap();
    let mut state = TrainState::init(&widths, 1.0, 0.0, None, 0).unwrap();
    let head = state.generator.head.as_mut().unwrap();
    head.binary.biases_mut().copy_from_slice(&[-2.0, 3.0, 1.0]);
    let mut rng = stream(7, &[]);
    let (best, probs) = class_probabilities(
        &state,
        &ClassQuery::Image(vec![0.3, -0.2, 1.0, 1.0, 1.0]),
        3,
        CLASS_PASSES,
        &mut rng,
    )
    .unwrap();
    assert_eq!(best, 1);
    assert!(probs[1] > probs[2] && probs[2] > probs[0]);
    let deepest = ClassQuery::Deepest(qahm::SpinVector::filled(2, 1.0));
    assert_eq!(most_probable_class(&state, &deepest, 3, &mut rng).unwrap(), 1);
    assert!(class_probabilities(&state, &deepest, 4, 1, &mut rng).is_err());
}

#[test]
fn recon_error_of_zero_generator() {
    let widths = LayerWidths::new(2, 0, vec![2]).unwrap();
    let state = TrainState::init(&widths, 1.0, 0.0, None, 0).unwrap();
    let mut st = state.clone();
    for k in 0..st.generator.parameters().len() {
        *st.generator.parameter_mut(k) = 0.0;
    }
    let mse = recon_mse(&st, &[vec![0.5, -0.5], vec![1.0, 0.0]], 1).unwrap();
    assert!((mse - (0.25 + 0.25 + 1.0) / 4.0).abs() < 1e-12);
}
