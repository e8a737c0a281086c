//! Partitions a random weight by its singular values and projects a
//! gradient off the retained block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use asvd::linalg::{svd, Matrix};
use asvd::subspace::{allocate_rank, interference, partition, project_gradient, RetentionConfig};

fn main() -> asvd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let w = Matrix::from_fn(6, 4, |_, _| normal());
    let g = Matrix::from_fn(6, 4, |_, _| normal());

    let f = svd(&w)?;
    println!("sigma = {:.4?}", f.sigma);
    println!("reconstruction error = {:.2e}", (&f.reconstruct() - &w).frobenius_norm());

    let retention = RetentionConfig::default();
    for importance in [0.0, 0.5, 1.0, 1.5] {
        let fraction = allocate_rank(importance, &retention);
        let p = partition(&f, fraction)?;
        let projected = project_gradient(&g, &p)?;
        println!(
            "importance {importance:.1}: fraction {fraction:.2}, r = {}, interference {:.3} -> {:.1e}, kept {:.1}% of the gradient norm",
            p.r_count,
            interference(&g, &p)?,
            interference(&projected, &p)?,
            100.0 * projected.frobenius_norm() / g.frobenius_norm()
        );
    }
    Ok(())
}
