//! Forgetting bounds on one constructed block-diagonal Hessian, then the
//! quadratic forgetting prediction on a converged tanh net.

use asvd::experiment::{teacher_diagnostics, TeacherConfig};
use asvd::seeding::substream;
use asvd::subspace::RetentionConfig;
use asvd::theory::{bound_hierarchy_experiment, construct_instance, InstanceShape};

fn main() -> asvd::Result<()> {
    let retention = RetentionConfig::default();
    let fixed = retention.trr;
    let mut rng = substream(0, "example");
    let mut rejected = 0;
    let inst = loop {
        let inst = construct_instance(&InstanceShape::default(), &retention, fixed, &mut rng)?;
        if inst.premise_holds {
            break inst;
        }
        rejected += 1;
    };
    println!("instance after {rejected} rejected draws, block sizes {:?}", inst.bundle.block_sizes);
    for (l, eig) in inst.bundle.block_eigenvalues().iter().enumerate() {
        println!("  block {l}: importance {:.3}, eigenvalues {:.3?}", inst.importance[l], eig);
    }
    let r = bound_hierarchy_experiment(&inst.bundle, &inst.importance, &retention, fixed, 1.0)?;
    println!("cuts fixed {:?} adaptive {:?}", r.fixed_cuts, r.adaptive_cuts);
    println!("{:<9} {:>10} {:>10}", "", "bound", "realized");
    for (name, b, x) in [
        ("full", r.bound_full, r.realized_full),
        ("fixed", r.bound_fixed, r.realized_fixed),
        ("adaptive", r.bound_adaptive, r.realized_adaptive),
    ] {
        println!("{name:<9} {b:>10.4} {x:>10.4}");
    }
    println!("status {:?}", r.status);

    let d = teacher_diagnostics(&TeacherConfig::default(), 0)?;
    println!("\nteacher net: {} parameters, gradient norm {:.1e}", d.parameter_count, d.gradient_norm);
    for (n, e) in d.norms.iter().zip(&d.relative_errors) {
        println!("  |dtheta| {n:.2e}: relative error of the quadratic prediction {e:.3e}");
    }
    println!("off-block Hessian ratio {:.3}", d.off_block_ratio);
    if let Some(c) = d.importance_curvature_correlation {
        println!("importance vs block curvature correlation {c:.3}");
    }
    Ok(())
}
