//! Layer importance (mean cosine between a layer's input and its linear
//! output) of a trained net, and the retained fraction it buys each layer.

use asvd::continual::{execute, RunConfig, TrainerKind};
use asvd::importance::profile_for_task;
use asvd::subspace::{allocate_rank, RetentionConfig};
use asvd::tasks::generate;

fn main() -> asvd::Result<()> {
    let mut cfg = RunConfig::default().with_trainer(TrainerKind::SeqFull);
    cfg.tasks.task_count = 1;
    let outcome = execute(&cfg, 0)?;
    let data = generate(&asvd::continual::data_spec(&cfg, 0))?;
    let profile = profile_for_task(&outcome.network, &data[0].train, 128)?;
    let retention = RetentionConfig::default();
    println!("{:>5} {:>10} {:>10} {:>9}", "layer", "raw", "normalized", "fraction");
    for (l, (raw, norm)) in profile.raw.iter().zip(&profile.normalized).enumerate() {
        let note = if profile.undefined_layers.contains(&l) { "  (non-square)" } else { "" };
        println!("{l:>5} {raw:>10.4} {norm:>10.4} {:>9.3}{note}", allocate_rank(*norm, &retention));
    }
    if let Some(f) = &profile.fallback {
        println!("fallback: {f}");
    }
    Ok(())
}
