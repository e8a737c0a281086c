//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use asvd::continual::{execute, train_continual, RunConfig, TrainSettings, TrainerKind};
use asvd::experiment::{run_experiment, run_theory, ExperimentConfig, OutputOptions, TheoryConfig, TrialKind};
use asvd::linalg::{svd, symmetric_eigendecomposition, Matrix};
use asvd::metrics::{average_accuracy, backward_transfer, AccuracyMatrix};
use asvd::network::{relative_error, Activation, Layer, LayerSpec, LossKind, Network, Sample, Target};
use asvd::spectrum::{prune_low_rank, Keep, LayerSelector, PruneSpec};
use asvd::subspace::{interference, partition, project_gradient, RetentionConfig};
use asvd::tasks::{evaluate, TaskData, TaskKind};
use asvd::theory::{matrix_with_spectrum, rayleigh_check, second_order_check_with, exact_hessian, ensure_optimum, HierarchyStatus, BOUND_SLACK};

const PROJECTION_TOL: f64 = 1e-10;
const PROJECTION_PAIRS: usize = 10_000;
const PROJECTION_BUDGET: Duration = Duration::from_secs(10);
const GRADIENT_TOL: f64 = 1e-5;
const GRADIENT_NETS: u64 = 20;
const GRADIENT_BUDGET: Duration = Duration::from_secs(30);
const FIRST_ORDER_TOL: f64 = 1e-8;
const QUADRATIC_TOL: f64 = 1e-10;
const HALVING_SLACK: f64 = 1.05;
const HIERARCHY_TRIALS: usize = 50;
const RAYLEIGH_TRIALS: usize = 1000;
const TOP_EIGENVECTOR_TOL: f64 = 1e-8;
const ORDERING_BUDGET: Duration = Duration::from_secs(300);
const PRUNE_TOL: f64 = 0.01;
const ECKART_YOUNG_TOL: f64 = 1e-8;
const METRIC_TOL: f64 = 1e-12;

const SEEDS: [u64; 3] = [0, 1, 2];
const ORDERS: [[usize; 5]; 3] = [[0, 1, 2, 3, 4], [3, 0, 4, 1, 2], [2, 4, 1, 0, 3]];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

fn projection_exactness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_interference, mut worst_idempotence) = (0.0f64, 0.0f64);
    for _ in 0..PROJECTION_PAIRS {
        let (m, n) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let w = random_matrix(m, n, &mut rng);
        let g = random_matrix(m, n, &mut rng);
        let p = partition(&svd(&w).unwrap(), rng.random_range(0.0..=1.0)).unwrap();
        let once = project_gradient(&g, &p).unwrap();
        let twice = project_gradient(&once, &p).unwrap();
        worst_interference = worst_interference.max(interference(&once, &p).unwrap());
        worst_idempotence = worst_idempotence.max((&twice - &once).frobenius_norm());
    }
    let elapsed = start.elapsed();
    verdict(
        worst_interference <= PROJECTION_TOL && worst_idempotence <= PROJECTION_TOL && elapsed < PROJECTION_BUDGET,
        format!(
            "{PROJECTION_PAIRS} pairs, max interference {worst_interference:.2e}, max idempotence residual {worst_idempotence:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn gradient_oracle() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for activation in [Activation::Identity, Activation::Tanh, Activation::Relu] {
        for loss in [LossKind::SoftmaxCrossEntropy, LossKind::MeanSquaredError] {
            for seed in 0..GRADIENT_NETS {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let specs = [
                    LayerSpec { input_dim: 5, output_dim: 6, activation },
                    LayerSpec { input_dim: 6, output_dim: 4, activation },
                    LayerSpec { input_dim: 4, output_dim: 3, activation: Activation::Identity },
                ];
                let net = Network::random(&specs, 1.0, &mut rng).unwrap();
                let batch: Vec<Sample> = (0..8)
                    .map(|i| {
                        let x = (0..5).map(|_| normal(&mut rng)).collect();
                        let y = match loss {
                            LossKind::SoftmaxCrossEntropy => Target::Class(i % 3),
                            LossKind::MeanSquaredError => Target::Values((0..3).map(|_| normal(&mut rng)).collect()),
                        };
                        Sample::new(x, y)
                    })
                    .collect();
                let analytic = net.flat_gradient(&batch, loss).unwrap();
                let numeric: Vec<f64> = net
                    .finite_difference_gradient(&batch, loss, 1e-5)
                    .unwrap()
                    .iter()
                    .flat_map(|m| m.as_slice().to_vec())
                    .collect();
                worst = worst.max(relative_error(&analytic, &numeric, 1e-8));
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= GRADIENT_TOL && elapsed < GRADIENT_BUDGET,
        format!("{checked} nets, max relative error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn ordering_config() -> RunConfig {
    RunConfig::default()
}

/// Mean AA and BWT per trainer over the seed/order grid, plus per-seed AA.
struct Grid {
    aa: f64,
    bwt: f64,
    per_seed_aa: Vec<f64>,
    first_order_max: f64,
}

fn run_grid(cfg: &RunConfig) -> Grid {
    let mut per_seed_aa = Vec::new();
    let (mut aa, mut bwt, mut first_order_max) = (0.0, 0.0, 0.0f64);
    for seed in SEEDS {
        let mut seed_aa = 0.0;
        for order in ORDERS {
            let mut c = cfg.clone();
            c.task_order = Some(order.to_vec());
            let r = execute(&c, seed).unwrap().report;
            seed_aa += r.aa / ORDERS.len() as f64;
            bwt += r.bwt;
            first_order_max = first_order_max.max(r.first_order_max);
        }
        aa += seed_aa / SEEDS.len() as f64;
        per_seed_aa.push(seed_aa);
    }
    Grid {
        aa,
        bwt: bwt / (SEEDS.len() * ORDERS.len()) as f64,
        per_seed_aa,
        first_order_max,
    }
}

fn first_order(adaptive: &Grid) -> Verdict {
    verdict(
        adaptive.first_order_max <= FIRST_ORDER_TOL,
        format!(
            "adaptive_svd over {} seeds x {} orders, max |<P_U G_prev P_V, dW>| {:.2e}",
            SEEDS.len(),
            ORDERS.len(),
            adaptive.first_order_max
        ),
    )
}

fn second_order() -> Verdict {
    let mut worst_quadratic = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let (m, n) = (rng.random_range(1..=4), rng.random_range(1..=5));
        let w = random_matrix(m, n, &mut rng);
        let net = Network::from_layers(vec![Layer { weight: w.clone(), activation: Activation::Identity }]).unwrap();
        let batch: Vec<Sample> = (0..10)
            .map(|_| {
                let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
                let y = w.matvec(&x).unwrap();
                Sample::new(x, Target::Values(y))
            })
            .collect();
        let loss = LossKind::MeanSquaredError;
        ensure_optimum(&net, &batch, loss).unwrap();
        let bundle = exact_hessian(&net, &batch, loss).unwrap();
        let delta: Vec<f64> = (0..m * n).map(|_| 0.1 * normal(&mut rng)).collect();
        let check = second_order_check_with(&net, &batch, loss, &bundle, &delta).unwrap();
        worst_quadratic = worst_quadratic.max(check.relative_error);
    }

    let teacher = asvd::experiment::TeacherConfig::default();
    let mut monotone = true;
    let mut sample = Vec::new();
    for seed in 0..5 {
        let d = asvd::experiment::teacher_diagnostics(&teacher, seed).unwrap();
        monotone &= d.relative_errors.windows(2).all(|w| w[1] <= w[0] * HALVING_SLACK);
        if seed == 0 {
            sample = d.relative_errors;
        }
    }
    verdict(
        worst_quadratic <= QUADRATIC_TOL && monotone,
        format!(
            "quadratic max relative gap {worst_quadratic:.2e}; tanh teachers monotone over {} halvings: {monotone} (seed 0: {})",
            teacher.halvings,
            sample.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn hierarchy() -> Verdict {
    let cfg = TheoryConfig {
        trials: HIERARCHY_TRIALS,
        teacher: None,
        rayleigh_trials: 0,
        ..TheoryConfig::default()
    };
    let report = run_theory(&cfg).unwrap();
    let constructed: Vec<_> = report.trials.iter().filter(|t| t.kind == TrialKind::Constructed).collect();
    let ordered = report
        .trials
        .iter()
        .filter(|t| t.report.bound_adaptive <= t.report.bound_fixed && t.report.bound_fixed <= t.report.bound_full)
        .count();
    let strict = constructed
        .iter()
        .filter(|t| t.report.bound_adaptive < t.report.bound_fixed && t.report.bound_fixed < t.report.bound_full)
        .count();
    let within = report
        .trials
        .iter()
        .filter(|t| {
            let r = &t.report;
            r.realized_full <= r.bound_full + BOUND_SLACK
                && r.realized_fixed <= r.bound_fixed + BOUND_SLACK
                && r.realized_adaptive <= r.bound_adaptive + BOUND_SLACK
        })
        .count();
    let statuses_agree = constructed.iter().all(|t| t.report.status == HierarchyStatus::Strict);
    let rejected: usize = constructed.iter().map(|t| t.rejected).sum();
    verdict(
        constructed.len() >= HIERARCHY_TRIALS
            && ordered == report.trials.len()
            && strict == constructed.len()
            && within == report.trials.len()
            && statuses_agree,
        format!(
            "{} constructed trials ({rejected} rejected draws): ordered {ordered}/{}, strict {strict}/{}, realized within bound {within}/{}",
            constructed.len(),
            report.trials.len(),
            constructed.len(),
            report.trials.len()
        ),
    )
}

fn rayleigh() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let mut violations = 0;
    let mut top_gap = 0.0f64;
    for _ in 0..RAYLEIGH_TRIALS {
        let n = rng.random_range(1..=12);
        let spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let h = matrix_with_spectrum(&spectrum, &mut rng).unwrap();
        let e = symmetric_eigendecomposition(&h).unwrap();
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0) * normal(&mut rng)).collect();
        if !rayleigh_check(&h, e.max(), &delta).unwrap().holds {
            violations += 1;
        }
        let top = rayleigh_check(&h, e.max(), &e.eigenvectors.column(0)).unwrap();
        top_gap = top_gap.max((top.bound - top.quadratic_form).abs());
    }
    verdict(
        violations == 0 && top_gap <= TOP_EIGENVECTOR_TOL,
        format!("{violations} violations in {RAYLEIGH_TRIALS} trials; top-eigenvector gap {top_gap:.2e}"),
    )
}

fn forgetting_ordering(adaptive: &Grid, elapsed_so_far: Duration) -> Verdict {
    let start = Instant::now();
    let base = ordering_config();
    let seq = run_grid(&base.with_trainer(TrainerKind::SeqFull));
    let noproj = run_grid(&base.with_trainer(TrainerKind::NoProjectionAblation));
    let mut halved_cfg = base.with_trainer(TrainerKind::AdaptiveSvd);
    halved_cfg.training.retention = halved_cfg.training.retention.halved();
    let halved = run_grid(&halved_cfg);
    let elapsed = elapsed_so_far + start.elapsed();
    let wins = adaptive
        .per_seed_aa
        .iter()
        .zip(&halved.per_seed_aa)
        .filter(|(a, h)| a > h)
        .count();
    verdict(
        adaptive.aa > seq.aa
            && adaptive.aa > noproj.aa
            && adaptive.bwt > seq.bwt
            && 2 * wins > SEEDS.len()
            && elapsed < ORDERING_BUDGET,
        format!(
            "AA adaptive {:.4} / seq_full {:.4} / no_projection {:.4}; BWT adaptive {:+.4} / seq_full {:+.4}; default beats halved in {wins}/{} seeds; {:.1}s",
            adaptive.aa,
            seq.aa,
            noproj.aa,
            adaptive.bwt,
            seq.bwt,
            SEEDS.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn degenerate_equivalence() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.tasks.train_per_task = 300;
    cfg.tasks.test_per_task = 100;
    let mut mismatches = Vec::new();
    for seed in SEEDS {
        let mut zero = cfg.with_trainer(TrainerKind::AdaptiveSvd);
        zero.training.retention = RetentionConfig::new(0.0, 0.0).unwrap();
        let a = execute(&zero, seed).unwrap();
        let b = execute(&cfg.with_trainer(TrainerKind::SeqFull), seed).unwrap();
        let same_params = a
            .network
            .parameter_vector()
            .iter()
            .zip(b.network.parameter_vector())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        let same_acc = a.report.accuracy_matrix == b.report.accuracy_matrix;
        if !(same_params && same_acc) {
            mismatches.push(seed);
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("{} seeds compared bitwise; mismatching seeds {mismatches:?}", SEEDS.len()),
    )
}

/// Eight classes at the corners of a cube living in a 3-dimensional
/// subspace of the input space.
fn cube_task(dim: usize, seed: u64) -> TaskData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = svd(&random_matrix(dim, 3, &mut rng)).unwrap().u;
    let corner = |c: usize| -> Vec<f64> { (0..3).map(|b| if c >> b & 1 == 1 { 1.5 } else { -1.5 }).collect() };
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let c = i % 8;
                let coords: Vec<f64> = corner(c).iter().map(|m| m + 0.35 * normal(rng)).collect();
                Sample::new(basis.matvec(&coords).unwrap(), Target::Class(c))
            })
            .collect()
    };
    let train = draw(1600, &mut rng);
    let test = draw(800, &mut rng);
    TaskData {
        task_id: 0,
        kind: TaskKind::Classification { classes: 8 },
        train,
        test,
    }
}

fn low_rank_validation() -> Verdict {
    let task = cube_task(16, 4000);
    let specs = [
        LayerSpec { input_dim: 16, output_dim: 16, activation: Activation::Tanh },
        LayerSpec { input_dim: 16, output_dim: 8, activation: Activation::Identity },
    ];
    let net = Network::random(&specs, 0.05, &mut ChaCha8Rng::seed_from_u64(4001)).unwrap();
    let mut settings = TrainSettings {
        trainer: TrainerKind::SeqFull,
        ..TrainSettings::default()
    };
    settings.optimizer.epochs_per_task = 30;
    settings.optimizer.learning_rate = 0.1;
    let trained = train_continual(net, std::slice::from_ref(&task), &settings, 4002).unwrap().network;
    let tasks = [task];
    let prune = |k: usize| {
        prune_low_rank(
            &trained,
            &PruneSpec {
                layers: LayerSelector::Layers(vec![0]),
                keep: Keep::Count(k),
            },
            &tasks,
        )
        .unwrap()
        .1
    };
    let at_rank = prune(3);
    let below = prune(2);
    let before = evaluate(&trained, &tasks[0]).unwrap();
    verdict(
        at_rank.mean_delta.abs() < PRUNE_TOL && below.mean_after < at_rank.mean_after,
        format!(
            "intrinsic rank 3: accuracy {before:.4} -> {:.4} (delta {:+.4}); rank 2: {:.4}",
            at_rank.mean_after, at_rank.mean_delta, below.mean_after
        ),
    )
}

fn eckart_young() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let (mut worst, mut worst_oracle) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (m, n) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let w = random_matrix(m, n, &mut rng);
        let f = svd(&w).unwrap();
        let k = rng.random_range(0..=f.rank());
        let residual = (&w - &f.truncated(k)).frobenius_norm();
        let tail: f64 = f.sigma[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
        worst = worst.max((residual - tail).abs());
        // Independent route: the tail of the eigenvalues of WᵀW or WWᵀ.
        let gram = if m <= n { w.matmul(&w.transpose()) } else { w.transpose().matmul(&w) };
        let mut eig = symmetric_eigendecomposition(&gram).unwrap().eigenvalues;
        eig.sort_by(|a, b| b.total_cmp(a));
        let oracle_sq: f64 = eig[k..].iter().sum::<f64>().max(0.0);
        worst_oracle = worst_oracle.max((residual * residual - oracle_sq).abs());
    }
    verdict(
        worst <= ECKART_YOUNG_TOL && worst_oracle <= ECKART_YOUNG_TOL,
        format!("100 matrices, max |residual - tail| {worst:.2e}, max |residual^2 - eigen tail| {worst_oracle:.2e}"),
    )
}

struct MetricFixture {
    rows: Vec<Vec<f64>>,
    aa: f64,
    bwt: f64,
}

fn metric_fixtures() -> Vec<MetricFixture> {
    let fx = |rows: Vec<Vec<f64>>, aa: f64, bwt: f64| MetricFixture { rows, aa, bwt };
    vec![
        fx(vec![vec![0.9]], 0.9, 0.0),
        fx(vec![vec![0.9, 0.0], vec![0.7, 0.8]], 0.75, -0.1),
        fx(vec![vec![1.0, 0.0], vec![1.0, 1.0]], 1.0, 0.0),
        fx(vec![vec![0.5, 0.0], vec![0.75, 0.5]], 0.625, 0.125),
        fx(
            vec![vec![0.9, 0.0, 0.0], vec![0.8, 0.9, 0.0], vec![0.6, 0.7, 0.9]],
            0.7333333333333333,
            -(0.3 + 0.2) / 3.0,
        ),
        fx(
            vec![vec![0.25, 0.0, 0.0], vec![0.5, 0.5, 0.0], vec![0.75, 0.75, 0.75]],
            0.75,
            (0.5 + 0.25) / 3.0,
        ),
        fx(
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.5, 1.0, 0.0, 0.0],
                vec![0.5, 0.5, 1.0, 0.0],
                vec![0.5, 0.5, 0.5, 1.0],
            ],
            0.625,
            -1.5 / 4.0,
        ),
        fx(
            vec![
                vec![0.8, 0.1, 0.1, 0.1],
                vec![0.8, 0.8, 0.1, 0.1],
                vec![0.8, 0.8, 0.8, 0.1],
                vec![0.8, 0.8, 0.8, 0.8],
            ],
            0.8,
            0.0,
        ),
        fx(
            vec![
                vec![0.6, 0.0, 0.0, 0.0, 0.0],
                vec![0.4, 0.7, 0.0, 0.0, 0.0],
                vec![0.3, 0.5, 0.8, 0.0, 0.0],
                vec![0.2, 0.4, 0.6, 0.9, 0.0],
                vec![0.1, 0.3, 0.5, 0.7, 1.0],
            ],
            0.52,
            -(0.5 + 0.4 + 0.3 + 0.2) / 5.0,
        ),
        fx(vec![vec![0.0, 0.0], vec![0.0, 0.0]], 0.0, 0.0),
    ]
}

fn metric_formulas() -> Verdict {
    let fixtures = metric_fixtures();
    let mut worst = 0.0f64;
    for f in &fixtures {
        // Fixtures are written as full matrices; entries above the diagonal
        // are never observed.
        let lower = f.rows.iter().enumerate().map(|(t, r)| r[..=t].to_vec()).collect();
        let m = AccuracyMatrix::from_rows(lower).unwrap();
        let t = m.task_count();
        worst = worst
            .max((average_accuracy(&m).unwrap() - f.aa).abs())
            .max((backward_transfer(&m, t).unwrap() - f.bwt).abs());
    }
    verdict(
        worst <= METRIC_TOL,
        format!("{} fixtures, max deviation {worst:.2e}", fixtures.len()),
    )
}

fn strip_wall_clock(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"wall_clock_seconds\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Verdict {
    let mut run = RunConfig::default();
    run.tasks.task_count = 3;
    run.tasks.train_per_task = 200;
    run.tasks.test_per_task = 100;
    run.ability_suite = Some(asvd::continual::AbilitySuiteConfig { task_count: 2 });
    let cfg = ExperimentConfig {
        run,
        trainers: Some(vec![TrainerKind::AdaptiveSvd, TrainerKind::SeqFull, TrainerKind::NoProjectionAblation]),
        seeds: vec![0, 5],
        ..ExperimentConfig::default()
    };
    let root = tempfile::tempdir().unwrap();
    let run_into = |name: &str| {
        run_experiment(
            &cfg,
            &OutputOptions {
                output_dir: Some(root.path().join(name)),
                ..OutputOptions::default()
            },
        )
        .unwrap()
    };
    let first = run_into("a");
    let second = run_into("b");
    let mut compared = 0;
    let mut differing = Vec::new();
    for (job, _) in &first.runs {
        let name = format!("{}.report.json", job.run_id);
        let a = fs::read_to_string(first.output_dir.join(&name)).unwrap();
        let b = fs::read_to_string(second.output_dir.join(&name)).unwrap();
        compared += 1;
        if strip_wall_clock(&a) != strip_wall_clock(&b) {
            differing.push(job.run_id.clone());
        }
        let ca = fs::read(first.output_dir.join(format!("{}.ckpt", job.run_id))).unwrap();
        let cb = fs::read(second.output_dir.join(format!("{}.ckpt", job.run_id))).unwrap();
        if ca != cb {
            differing.push(format!("{} checkpoint", job.run_id));
        }
    }
    verdict(
        differing.is_empty() && compared == 6,
        format!("{compared} reports compared byte-for-byte; differing {differing:?}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |id: usize, name: &'static str, v: Verdict| {
        println!("{} [{id:>2}] {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    record(1, "projection exactness", projection_exactness());
    record(2, "gradient oracle", gradient_oracle());
    let start = Instant::now();
    let adaptive = run_grid(&ordering_config().with_trainer(TrainerKind::AdaptiveSvd));
    let adaptive_time = start.elapsed();
    record(3, "first-order non-interference", first_order(&adaptive));
    record(4, "second-order approximation", second_order());
    record(5, "bound hierarchy", hierarchy());
    record(6, "rayleigh bound", rayleigh());
    record(7, "desk-scale forgetting ordering", forgetting_ordering(&adaptive, adaptive_time));
    record(8, "degenerate equivalence", degenerate_equivalence());
    record(9, "low-rank validation", low_rank_validation());
    record(10, "eckart-young residual", eckart_young());
    record(11, "metric formulas", metric_formulas());
    record(12, "determinism", determinism());

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!("acceptance: {}/{} passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
