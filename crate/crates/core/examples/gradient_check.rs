//! Backpropagation against central finite differences for every
//! activation and loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use asvd::network::{flatten, relative_error, Activation, LayerSpec, LossKind, Network, Sample, Target};

fn main() -> asvd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for activation in [Activation::Identity, Activation::Tanh, Activation::Relu] {
        for loss in [LossKind::SoftmaxCrossEntropy, LossKind::MeanSquaredError] {
            let specs = [
                LayerSpec { input_dim: 4, output_dim: 5, activation },
                LayerSpec { input_dim: 5, output_dim: 3, activation: Activation::Identity },
            ];
            let net = Network::random(&specs, 1.0, &mut rng)?;
            let batch: Vec<Sample> = (0..6)
                .map(|i| {
                    let x = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let y = match loss {
                        LossKind::SoftmaxCrossEntropy => Target::Class(i % 3),
                        LossKind::MeanSquaredError => {
                            Target::Values((0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
                        }
                    };
                    Sample::new(x, y)
                })
                .collect();
            let analytic = net.flat_gradient(&batch, loss)?;
            let numeric = flatten(&net.finite_difference_gradient(&batch, loss, 1e-5)?);
            println!(
                "{:<9} {:<22} relative error {:.2e}",
                activation.name(),
                format!("{loss:?}"),
                relative_error(&analytic, &numeric, 1e-8)
            );
        }
    }
    Ok(())
}
