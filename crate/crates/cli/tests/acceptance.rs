//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! real standard output, so the lines show up without `--nocapture`.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use intervalcp::baseline::{fit_pinball, Target};
use intervalcp::conformal::{score_set, split_conformal};
use intervalcp::estimator::{KernelFamily, KernelSpec};
use intervalcp::interval::{Interval, IntervalUnion};
use intervalcp::sim::{run_experiment, ExperimentConfig, ExperimentReport, Method, Model};
use intervalcp::solver::{brute_force_min_union, fit_prediction_rule, min_union, SolverConfig, WeightedBrackets};
use intervalcp::{Dataset, Observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, pass: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "criterion {id}: {tag} {detail}");
    let _ = out.flush();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Quarter-integer values, so that endpoints coincide often.
fn quarter(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    rng.random_range(lo * 4..=hi * 4) as f64 / 4.0
}

fn random_union(rng: &mut ChaCha8Rng) -> IntervalUnion {
    match rng.random_range(0..20) {
        0 => IntervalUnion::empty(),
        1 => IntervalUnion::full_line(),
        _ => {
            let k = rng.random_range(1..=4);
            let raw: Vec<Interval> = (0..k)
                .map(|_| {
                    let a = quarter(rng, -5, 5);
                    let b = a + quarter(rng, 0, 3);
                    let lo = if rng.random_bool(0.05) { f64::NEG_INFINITY } else { a };
                    let hi = if rng.random_bool(0.05) { f64::INFINITY } else { b };
                    Interval { lo, hi }
                })
                .collect();
            IntervalUnion::normalize(&raw).unwrap()
        }
    }
}

#[test]
fn criterion_1_score_duality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0usize;
    let pairs = 100_000;
    for _ in 0..pairs {
        let set = random_union(&mut rng);
        let lo = quarter(&mut rng, -6, 6);
        let hi = lo + if rng.random_bool(0.3) { 0.0 } else { quarter(&mut rng, 0, 3) };
        let contained_oracle = set.intervals().iter().any(|iv| iv.lo <= lo && hi <= iv.hi);
        let s = score_set(lo, hi, &set);
        let lib = set.contains_bracket(lo, hi);
        if (s <= 0.0) != lib || lib != contained_oracle {
            mismatches += 1;
        }
    }
    let t = secs(start.elapsed());
    verdict(
        1,
        mismatches == 0 && t < 5.0,
        format!("{pairs} pairs, {mismatches} mismatches, {t:.2} s (limit 5 s)"),
    );
}

#[test]
fn criterion_2_solver_matches_exhaustive_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = Vec::new();
    let instances = 500;
    for i in 0..instances {
        let pool_size = rng.random_range(2..=16);
        let mut pool: Vec<f64> = Vec::new();
        while pool.len() < pool_size {
            let v = rng.random_range(-10..=30) as f64;
            if !pool.contains(&v) {
                pool.push(v);
            }
        }
        pool.sort_by(f64::total_cmp);
        let n = rng.random_range(1..=12);
        let triples: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                let a = rng.random_range(0..pool.len());
                let b = if rng.random_bool(0.3) { a } else { rng.random_range(a..pool.len()) };
                (pool[a], pool[b], rng.random_range(0.01..1.0))
            })
            .collect();
        let wb = WeightedBrackets::from_triples(&triples).unwrap();
        let m = [1, 2, 3][i % 3];
        let alpha = [0.1, 0.3, 0.5][(i / 3) % 3];
        let cfg = SolverConfig {
            alpha,
            psi: 0.0,
            max_components: m,
            weight_grid: 1e-6,
            min_component_weight: 0.0,
        };
        let fast = min_union(&wb, &cfg).unwrap();
        let oracle = brute_force_min_union(&wb, &cfg).unwrap();
        if fast.volume() != oracle.volume() {
            mismatches.push((i, fast.to_pairs(), oracle.to_pairs()));
        }
    }
    let t = secs(start.elapsed());
    verdict(
        2,
        mismatches.is_empty() && t < 60.0,
        format!(
            "{instances} instances, {} volume mismatches {:?}, {t:.2} s (limit 60 s)",
            mismatches.len(),
            mismatches.first()
        ),
    );
}

fn example1_data(n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let obs = (0..n)
        .map(|_| {
            let hi = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            Observation::new(vec![0.0], 0.0, hi).unwrap()
        })
        .collect();
    Dataset::new(obs).unwrap()
}

#[test]
fn criterion_3_example1_estimator() {
    let start = Instant::now();
    let n = 10_000;
    let reps = 200;
    let spec = KernelSpec::new(KernelFamily::Epanechnikov, vec![1.0]).unwrap();
    let grid = vec![vec![0.0]];
    let plain = SolverConfig::new(0.5, 0.0, 2).unwrap();
    let slack = SolverConfig::new(0.5, (n as f64).powf(-1.0 / 3.0), 2).unwrap();
    let mut wide = 0usize;
    let mut narrow_slack = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..reps {
        let data = example1_data(n, &mut rng);
        let a = fit_prediction_rule(&data, &grid, &spec, &plain).unwrap();
        let b = fit_prediction_rule(&data, &grid, &spec, &slack).unwrap();
        if a.sets[0].to_pairs() == vec![(0.0, 2.0)] {
            wide += 1;
        }
        if b.sets[0].to_pairs() == vec![(0.0, 1.0)] {
            narrow_slack += 1;
        }
    }
    let t = secs(start.elapsed());
    let f_wide = wide as f64 / reps as f64;
    let f_narrow = narrow_slack as f64 / reps as f64;
    verdict(
        3,
        (f_wide - 0.5).abs() <= 0.07 && f_narrow >= 0.95 && t < 120.0,
        format!(
            "psi=0: P([0,2]) = {f_wide:.3} (target 0.5 +/- 0.07); psi=n^(-1/3): P([0,1]) = {f_narrow:.3} (>= 0.95); {t:.1} s"
        ),
    );
}

/// Six equally likely atoms `(x, y_lo, y_hi, y)`.
const ATOMS: [(f64, f64, f64, f64); 6] = [
    (0.0, 0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0, 1.0),
    (0.0, 2.0, 2.0, 2.0),
    (1.0, 1.0, 3.0, 3.0),
    (1.0, 1.0, 1.0, 1.0),
    (1.0, 4.0, 5.0, 4.5),
];

#[test]
fn criterion_4_marginal_validity_on_discrete_design() {
    let start = Instant::now();
    let reps = 10_000;
    let n = 40;
    let alpha = 0.2;
    let spec = KernelSpec::new(KernelFamily::Epanechnikov, vec![0.5]).unwrap();
    let cfg = SolverConfig::new(alpha, 0.0, 2).unwrap();
    let grid = vec![vec![0.0], vec![1.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut total = 0.0;
    for rep in 0..reps {
        let obs = (0..n)
            .map(|_| {
                let a = ATOMS[rng.random_range(0..6)];
                Observation::new(vec![a.0], a.1, a.2).unwrap()
            })
            .collect();
        let data = Dataset::new(obs).unwrap();
        let (rule, _) = split_conformal(&data, &grid, alpha, 0.75, &spec, &cfg, rep as u64).unwrap();
        let covered = ATOMS
            .iter()
            .filter(|a| rule.set_at(&[a.0]).unwrap().contains_point(a.3))
            .count();
        total += covered as f64 / 6.0;
    }
    let t = secs(start.elapsed());
    let mean = total / reps as f64;
    verdict(
        4,
        mean >= 0.79 && t < 300.0,
        format!("latent coverage {mean:.4} over {reps} replications (>= 0.79), {t:.1} s"),
    );
}

fn simulation_report() -> &'static (ExperimentReport, Duration) {
    static REPORT: OnceLock<(ExperimentReport, Duration)> = OnceLock::new();
    REPORT.get_or_init(|| {
        let cfg = ExperimentConfig {
            models: vec![Model::A, Model::B, Model::C],
            methods: vec![Method::MinUnion, Method::Local, Method::Quantile(2), Method::Quantile(3)],
            reps: 100,
            n: 2500,
            alpha: 0.1,
            ..ExperimentConfig::default()
        };
        let start = Instant::now();
        let report = run_experiment(&cfg).unwrap();
        (report, start.elapsed())
    })
}

#[test]
fn criterion_5_simulation_coverage() {
    let (report, elapsed) = simulation_report();
    let mut pass = secs(*elapsed) < 1800.0;
    let mut parts = Vec::new();
    for model in [Model::A, Model::B, Model::C] {
        let mu = report.summary_for(model, Method::MinUnion).unwrap();
        let local = report.summary_for(model, Method::Local).unwrap();
        let ok_mu = (0.88..=0.93).contains(&mu.coverage_mean);
        let ok_bins = local.bin_coverage_mean.iter().all(|c| (0.86..=0.94).contains(c));
        pass &= ok_mu && ok_bins;
        parts.push(format!(
            "{model}: min-union {:.4}, local bins [{}]",
            mu.coverage_mean,
            local
                .bin_coverage_mean
                .iter()
                .map(|c| format!("{c:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    verdict(
        5,
        pass,
        format!("{}; {:.0} s (limit 1800 s)", parts.join("; "), secs(*elapsed)),
    );
}

#[test]
fn criterion_6_volume_ordering() {
    let (report, _) = simulation_report();
    let mut pass = true;
    let mut parts = Vec::new();
    for model in [Model::A, Model::B] {
        let vol = |m: Method| report.summary_for(model, m).unwrap().volume_mean;
        let (mu, q2, q3) = (vol(Method::MinUnion), vol(Method::Quantile(2)), vol(Method::Quantile(3)));
        let per_rep = |m: Method| -> Vec<f64> {
            report
                .records
                .iter()
                .filter(|r| r.model == model && r.method == m)
                .map(|r| r.volume)
                .collect()
        };
        let (a, b, c) = (per_rep(Method::MinUnion), per_rep(Method::Quantile(2)), per_rep(Method::Quantile(3)));
        let wins = (0..a.len()).filter(|&i| a[i] < b[i] && a[i] < c[i]).count();
        pass &= mu < q2 && mu < q3 && wins >= 90;
        parts.push(format!(
            "{model}: min-union {mu:.3} vs q2 {q2:.3}, q3 {q3:.3}; smaller in {wins}/{} reps",
            a.len()
        ));
    }
    verdict(6, pass, parts.join("; "));
}

#[test]
fn criterion_7_threshold_shrinks_with_n() {
    let mut medians = Vec::new();
    for n in [500, 2000, 8000] {
        let cfg = ExperimentConfig {
            models: vec![Model::C],
            methods: vec![Method::MinUnion],
            reps: 20,
            n,
            n_eval: 100,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&cfg).unwrap();
        let mut t: Vec<f64> = report.records.iter().map(|r| r.threshold.unwrap().abs()).collect();
        t.sort_by(f64::total_cmp);
        medians.push(0.5 * (t[9] + t[10]));
    }
    let pass = medians[0] > medians[1] && medians[1] > medians[2] && medians[2] < 0.1;
    verdict(
        7,
        pass,
        format!(
            "median |theta| at n = 500, 2000, 8000: {:.4}, {:.4}, {:.4} (decreasing, last < 0.1)",
            medians[0], medians[1], medians[2]
        ),
    );
}

#[test]
fn criterion_8_constant_quantile_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for i in 0..100 {
        let n = rng.random_range(5..300);
        // Levels on a 1/1000 lattice so the oracle rank is exact integer arithmetic.
        let a: usize = rng.random_range(20..=980);
        let level = a as f64 / 1000.0;
        let obs: Vec<Observation> = (0..n)
            .map(|_| {
                let lo = (rng.random_range(-50.0f64..50.0) * 4.0).round() / 4.0;
                let hi = lo + (rng.random_range(0.0f64..5.0) * 2.0).round() / 2.0;
                Observation::new(vec![rng.random_range(-1.0..1.0)], lo, hi).unwrap()
            })
            .collect();
        let data = Dataset::new(obs).unwrap();
        let target = if i % 2 == 0 { Target::Lower } else { Target::Upper };
        let mut values: Vec<f64> = data
            .iter()
            .map(|o| if target == Target::Lower { o.y_lo } else { o.y_hi })
            .collect();
        values.sort_by(f64::total_cmp);
        // Smallest order statistic v_(k) with k / n >= level.
        let k = (1..=n).find(|&k| k * 1000 >= a * n).unwrap();
        let oracle = values[k - 1];
        let fit = fit_pinball(&data, target, level, 0).unwrap();
        let got = fit.predict(&[0.3]);
        if got != oracle {
            failures.push((i, n, level, got, oracle));
        }
    }
    verdict(
        8,
        failures.is_empty(),
        format!("100 datasets, {} mismatches {:?}", failures.len(), failures.first()),
    );
}

#[test]
fn criterion_9_reports_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"models": ["A", "B"], "methods": ["min-union", "local", "q2"], "reps": 3, "n": 400,
            "n_eval": 300, "seed": 99, "grid": {"points": [21]}, "eval_grid_points": 21}"#,
    )
    .unwrap();
    let run = |dir: &std::path::Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_intervalcp"))
            .args(["report", "--config", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a);
    run(&b);
    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let manifests_equal = read(&a, "manifest.json") == read(&b, "manifest.json");
    let identical: Vec<bool> = ["records.csv", "long.csv"].iter().map(|f| read(&a, f) == read(&b, f)).collect();
    verdict(
        9,
        manifests_equal && identical.iter().all(|x| *x),
        format!("manifests equal: {manifests_equal}; records.csv, long.csv identical: {identical:?}"),
    );
}
