//! Runs every trainer on the rotated Gaussian stream and prints AA / BWT.

use asvd::continual::{execute, RunConfig, TrainerKind};

fn main() -> asvd::Result<()> {
    let seeds: Vec<u64> = std::env::args().nth(1).map_or(vec![0, 1, 2], |s| {
        s.split(',').map(|v| v.parse().expect("seed list")).collect()
    });
    let base = RunConfig::default();
    let trainers = [
        TrainerKind::SeqFull,
        TrainerKind::AdaptiveSvd,
        TrainerKind::FixedRank,
        TrainerKind::FixedBudget,
        TrainerKind::NoProjectionAblation,
        TrainerKind::JointMultitask,
    ];
    println!("{:<24} {:>6} {:>8} {:>8}", "trainer", "seed", "AA", "BWT");
    for trainer in trainers {
        for &seed in &seeds {
            let r = execute(&base.with_trainer(trainer), seed)?.report;
            println!("{:<24} {:>6} {:>8.4} {:>8.4}", trainer.name(), seed, r.aa, r.bwt);
        }
    }
    Ok(())
}
