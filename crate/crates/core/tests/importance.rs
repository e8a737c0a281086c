use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use asvd::importance::profile_for_task;
use asvd::linalg::Matrix;
use asvd::network::{Activation, LayerSpec, Network, Sample, Target};

/// Forward pass written out by hand, returning each layer's (input, W·input).
fn manual_captures(weights: &[Matrix], acts: &[Activation], x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut h = x.to_vec();
    let mut out = Vec::new();
    for (w, act) in weights.iter().zip(acts) {
        let mut y = vec![0.0; w.rows()];
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                y[r] += w[(r, c)] * h[c];
            }
        }
        let next = y.iter().map(|&z| act.apply(z)).collect();
        out.push((h, y));
        h = next;
    }
    out
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn profile_matches_independent_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let specs = [
        LayerSpec { input_dim: 6, output_dim: 6, activation: Activation::Tanh },
        LayerSpec { input_dim: 6, output_dim: 6, activation: Activation::Tanh },
        LayerSpec { input_dim: 6, output_dim: 6, activation: Activation::Identity },
    ];
    let mut net = Network::random(&specs, 0.5, &mut rng).unwrap();
    // Near-identity layers keep every score positive so the rescaling is exercised.
    for l in 0..3 {
        let w = &net.layer(l).weight + &Matrix::identity(6);
        net.set_weight(l, w).unwrap();
    }
    let samples: Vec<Sample> = (0..40)
        .map(|i| {
            let x = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
            Sample::new(x, Target::Class(i % 6))
        })
        .collect();
    let n = 32;
    let profile = profile_for_task(&net, &samples, n).unwrap();

    let weights: Vec<Matrix> = net.weights().cloned().collect();
    let acts: Vec<Activation> = net.layers().iter().map(|l| l.activation).collect();
    let mut raw = vec![0.0; 3];
    for s in &samples[..n] {
        for (l, (x, y)) in manual_captures(&weights, &acts, &s.x).iter().enumerate() {
            raw[l] += cosine(x, y) / n as f64;
        }
    }
    let total: f64 = raw.iter().sum();
    assert!(profile.fallback.is_none());
    for l in 0..3 {
        assert!((profile.raw[l] - raw[l]).abs() <= 1e-12);
        assert!((profile.normalized[l] - raw[l] * 3.0 / total).abs() <= 1e-12);
    }
}

#[test]
fn non_square_layers_are_pinned_and_the_rest_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let specs = [
        LayerSpec { input_dim: 4, output_dim: 4, activation: Activation::Identity },
        LayerSpec { input_dim: 4, output_dim: 4, activation: Activation::Identity },
        LayerSpec { input_dim: 4, output_dim: 2, activation: Activation::Identity },
    ];
    let mut net = Network::random(&specs, 1.0, &mut rng).unwrap();
    net.set_weight(0, Matrix::identity(4)).unwrap();
    net.set_weight(1, Matrix::diag(&[1.0, 2.0, 3.0, 4.0])).unwrap();
    let samples: Vec<Sample> = (0..8)
        .map(|i| Sample::new((0..4).map(|j| ((i * 4 + j) as f64).sin()).collect(), Target::Class(i % 2)))
        .collect();
    let p = profile_for_task(&net, &samples, 8).unwrap();
    assert_eq!(p.undefined_layers, vec![2]);
    assert_eq!(p.normalized[2], 1.0);
    assert!((p.normalized[0] + p.normalized[1] - 2.0).abs() <= 1e-12);
    // The identity layer scores exactly 1 and outranks the diagonal stretch.
    assert!((p.raw[0] - 1.0).abs() <= 1e-12);
    assert!(p.normalized[0] > p.normalized[1]);
}

#[test]
fn negative_total_falls_back_to_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let specs = [LayerSpec { input_dim: 3, output_dim: 3, activation: Activation::Identity }];
    let mut net = Network::random(&specs, 1.0, &mut rng).unwrap();
    net.set_weight(0, Matrix::diag(&[-1.0, -2.0, -1.0])).unwrap();
    let samples: Vec<Sample> = (0..4).map(|i| Sample::new(vec![1.0, i as f64, -0.5], Target::Class(0))).collect();
    let p = profile_for_task(&net, &samples, 4).unwrap();
    assert!(p.raw[0] < 0.0);
    assert_eq!(p.normalized, vec![1.0]);
    assert!(p.fallback.is_some());
}
