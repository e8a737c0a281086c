//! Adaptive SVD with the default retention ratios against both ratios halved.

use asvd::continual::{run_ablation_halved_retention, RunConfig};

fn main() -> asvd::Result<()> {
    let seeds: Vec<u64> = std::env::args().nth(1).map_or(vec![0, 1, 2], |s| {
        s.split(',').map(|v| v.parse().expect("seed list")).collect()
    });
    let base = RunConfig::default();
    let halved = base.training.retention.halved();
    println!(
        "default mrr/trr {}/{}, halved {}/{}",
        base.training.retention.mrr, base.training.retention.trr, halved.mrr, halved.trr
    );
    let mut wins = 0;
    for &seed in &seeds {
        let cmp = run_ablation_halved_retention(&base, seed)?;
        wins += usize::from(cmp.default.aa > cmp.halved.aa);
        println!(
            "seed {seed}: AA {:.4} vs {:.4}   BWT {:+.4} vs {:+.4}",
            cmp.default.aa, cmp.halved.aa, cmp.default.bwt, cmp.halved.bwt
        );
    }
    println!("default ahead in {wins}/{} seeds", seeds.len());
    Ok(())
}
