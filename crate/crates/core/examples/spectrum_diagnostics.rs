//! Singular-value statistics, noise-edge classification, a pruning sweep
//! and per-direction input norms for a trained continual-learning net.

use asvd::continual::{data_spec, execute, RunConfig};
use asvd::spectrum::{
    classify_noise, direction_activation_norms, prune_low_rank, spectrum_stats, Keep, LayerSelector, PruneSpec,
};
use asvd::tasks::generate;

fn main() -> asvd::Result<()> {
    let cfg = RunConfig::default();
    let net = execute(&cfg, 0)?.network;
    let tasks = generate(&data_spec(&cfg, 0))?;

    for (s, layer) in spectrum_stats(&net)?.iter().zip(net.layers()) {
        let n = classify_noise(s.layer, &layer.weight, 1.0, None)?;
        println!(
            "layer {} ({}x{}): sigma in [{:.3}, {:.3}], median {:.3}; {}/{} above the noise edge {:.3}",
            s.layer, s.rows, s.cols, s.min, s.max, s.median, n.above, n.above + n.below, n.threshold
        );
    }

    println!("\nkeep   mean accuracy");
    for k in [16, 12, 8, 4, 2, 1] {
        let spec = PruneSpec {
            layers: LayerSelector::Layers(vec![0, 1]),
            keep: Keep::Count(k),
        };
        let (_, r) = prune_low_rank(&net, &spec, &tasks)?;
        println!("{k:>4}   {:.4} ({:+.4})", r.mean_after, r.mean_delta);
    }

    let batch: Vec<_> = tasks.iter().flat_map(|t| t.test.iter().cloned()).collect();
    println!("\nlayer 0 directions: sigma, mean |v^T x|");
    for d in direction_activation_norms(&net, 0, &batch)? {
        println!("{:>3} {:>8.4} {:>8.4}", d.index, d.sigma, d.mean_norm);
    }
    Ok(())
}
