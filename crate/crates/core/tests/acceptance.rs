//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pndm::analysis::{
    estimate_order, eps_coefficient_magnitude, global_error, log_spaced_desc, probe_report,
    OrderReport, Problem, REFERENCE_FACTOR,
};
use pndm::cli::{cmd_probe, cmd_sample, cmd_stats, slope_window};
use pndm::config::RunConfig;
use pndm::predictor::{forward_diffuse, gaussian_noise, ExactOracle};
use pndm::transfer::phi;
use pndm::{
    sample, AnalyticToy, ConstantNoise, Method, PredictorSpec, SamplerSpec, Schedule, StateVec,
    TimeGrid,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!("{} [{:.2} s]", o.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail += &format!(" exceeds {} s", limit.as_secs());
        }
    }
    o
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> StateVec {
    StateVec::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn schedules() -> Vec<Schedule> {
    vec![
        Schedule::linear_beta_default(),
        Schedule::cosine(0.008).unwrap(),
        Schedule::toy_linear(),
        Schedule::exponential(-0.5, -2.0).unwrap(),
    ]
}

fn transfer_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let all = schedules();
    let mut bad = 0;
    for _ in 0..10_000 {
        let s = &all[rng.random_range(0..all.len())];
        let dim = rng.random_range(1..=16);
        let x = random_state(&mut rng, dim, 100.0);
        let e = random_state(&mut rng, dim, 100.0);
        let t = rng.random_range(0.0..=1.0);
        if phi(&x, &e, t, t, s).map(|y| y != x).unwrap_or(true) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 10000 inputs not returned exactly"))
}

fn exact_noise_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let all = schedules();
    let mut worst: f64 = 0.0;
    for problem in 0..100u64 {
        let s = &all[rng.random_range(0..all.len())];
        let dim = rng.random_range(2..=64);
        let steps = [5, 10, 50][rng.random_range(0..3)];
        let t_start = rng.random_range(0.5..0.99);
        let x0 = gaussian_noise(1000 + problem, dim);
        let eps = gaussian_noise(2000 + problem, dim);
        let oracle = ExactOracle::new(x0.clone(), s.clone());
        let grid = TimeGrid::uniform(s, steps, t_start, 0.0).unwrap();
        let x_init = forward_diffuse(&x0, &eps, s, t_start).unwrap();
        for m in [Method::Ddim, Method::SPndm, Method::FPndm] {
            let traj = sample(&SamplerSpec::new(m, &grid, s, &oracle), &x_init).unwrap();
            for (t, x) in &traj.states {
                let want = forward_diffuse(&x0, &eps, s, *t).unwrap();
                worst = worst.max(x.distance(&want) / want.norm());
            }
        }
    }
    outcome(worst <= 1e-10, format!("worst relative deviation {worst:.2e} (limit 1e-10)"))
}

fn reduction() -> Outcome {
    let mut mismatches = Vec::new();
    for (k, s) in schedules().iter().enumerate() {
        for steps in [4, 10, 25] {
            let pred = ConstantNoise::new(gaussian_noise(k as u64, 5));
            let grid = TimeGrid::uniform(s, steps, 0.95, 0.0).unwrap();
            let x = gaussian_noise(50 + k as u64, 5);
            let ddim = sample(&SamplerSpec::new(Method::Ddim, &grid, s, &pred), &x).unwrap();
            for m in [Method::SPndm, Method::FPndm] {
                let other = sample(&SamplerSpec::new(m, &grid, s, &pred), &x).unwrap();
                if other.states != ddim.states {
                    mismatches.push(format!("{m} on {} S={steps}", s.kind().name()));
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "S-PNDM and F-PNDM bitwise equal to DDIM on 12 grids".to_string()
        } else {
            mismatches.join("; ")
        },
    )
}

const ORDER_STEPS: [usize; 5] = [25, 50, 100, 200, 400];
const ORDER_METHODS: [Method; 4] = [Method::Ddim, Method::SPndm, Method::FPndm, Method::FonRk4];

fn toy_start(seed: u64, t_start: f64) -> StateVec {
    PredictorSpec::AnalyticToy
        .initial_state(seed, &Schedule::toy_linear(), t_start)
        .unwrap()
}

fn order_reports() -> Vec<OrderReport> {
    let s = Schedule::toy_linear();
    let problem = Problem::new(&s, &AnalyticToy, toy_start(0, 0.9), 0.9, 0.1);
    let ref_steps = REFERENCE_FACTOR * ORDER_STEPS[ORDER_STEPS.len() - 1];
    let reference = problem.run(Method::FonRk4, ref_steps).unwrap();
    let label = format!("FON-RK4 with {ref_steps} steps");
    ORDER_METHODS
        .iter()
        .map(|&m| estimate_order(&problem, m, &ORDER_STEPS, &reference, &label).unwrap())
        .collect()
}

fn convergence_order(reports: &[OrderReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        let (lo, hi) = slope_window(r.method);
        let ok = r.slope >= lo && r.slope <= hi && r.points.len() >= 5;
        pass &= ok;
        parts.push(format!("{} {:.3}{}", r.method, r.slope, if ok { "" } else { " (out of window)" }));
    }
    outcome(pass, parts.join(", "))
}

fn halving_ratios(reports: &[OrderReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        let checks = r.ratio_checks();
        let ok = !checks.is_empty() && checks.iter().all(|c| c.passes());
        pass &= ok;
        let (lo, hi) = checks.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), c| {
            let q = c.ratio / c.expected;
            (lo.min(q), hi.max(q))
        });
        parts.push(format!("{} observed/expected in [{lo:.2}, {hi:.2}]", r.method));
    }
    outcome(pass, parts.join(", "))
}

fn singularity() -> Outcome {
    let ts = log_spaced_desc(1e-6, 1e-2, 20).unwrap();
    let growing = probe_report(&Schedule::exponential(0.0, -1.0).unwrap(), &ts).unwrap();
    let flat_schedule = Schedule::exponential(-1.0, 0.0).unwrap();
    let flat = probe_report(&flat_schedule, &ts).unwrap();
    let at_tiny = eps_coefficient_magnitude(&flat_schedule, 1e-6).unwrap();
    let at_edge = eps_coefficient_magnitude(&flat_schedule, 1e-2).unwrap();
    let pass = (growing.slope + 0.5).abs() <= 0.1
        && flat.bounded
        && at_tiny.is_finite()
        && at_tiny <= 2.0 * at_edge;
    outcome(
        pass,
        format!(
            "b=-1 slope {:.4}; a=-1,b=0 magnitude {at_tiny:.4} at 1e-6 vs {at_edge:.4} at 1e-2, slope {:.4}",
            growing.slope, flat.slope
        ),
    )
}

/// Start points drawn from the toy problem's initial distribution.
const TOY_STARTS: u64 = 64;

/// Mean final-state error of `method` and `baseline` over all start points, and
/// how many starts `method` wins.
fn mean_errors(
    t_end: f64,
    (method, steps): (Method, usize),
    (baseline, base_steps): (Method, usize),
    reference: impl Fn(&Problem<'_>) -> pndm::Trajectory,
) -> (f64, f64, u64) {
    let s = Schedule::toy_linear();
    let (mut a, mut b, mut wins) = (0.0, 0.0, 0);
    for seed in 0..TOY_STARTS {
        let problem = Problem::new(&s, &AnalyticToy, toy_start(seed, 0.95), 0.95, t_end);
        let r = reference(&problem);
        let ea = global_error(&problem, method, steps, &r).unwrap();
        let eb = global_error(&problem, baseline, base_steps, &r).unwrap();
        a += ea;
        b += eb;
        wins += u64::from(ea < eb);
    }
    let n = TOY_STARTS as f64;
    (a / n, b / n, wins)
}

fn comparative_accuracy() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for budget in [20, 50, 100] {
        // F-PNDM spends 9 evaluations beyond one per step.
        let (f, d, wins) = mean_errors(
            0.05,
            (Method::FPndm, budget - 9),
            (Method::Ddim, budget),
            |p| p.run(Method::FonRk4, 20_000).unwrap(),
        );
        pass &= f < d;
        parts.push(format!("budget {budget}: F-PNDM {f:.2e} vs DDIM {d:.2e} ({wins}/{TOY_STARTS} starts)"));
    }
    for steps in [20, 50, 100] {
        let (f, rk, wins) = mean_errors(
            1e-3,
            (Method::FPndm, steps),
            (Method::FonRk4, steps),
            |p| p.run(Method::FPndm, REFERENCE_FACTOR * steps).unwrap(),
        );
        pass &= rk > f;
        parts.push(format!("to 1e-3 S={steps}: FON-RK4 {rk:.2e} vs F-PNDM {f:.2e} ({wins}/{TOY_STARTS} starts)"));
    }
    outcome(pass, format!("mean final-state error over {TOY_STARTS} starts; {}", parts.join("; ")))
}

fn eval_counts() -> Outcome {
    let s = Schedule::toy_linear();
    let x = toy_start(3, 0.9);
    let mut bad = Vec::new();
    for steps in [4, 10, 50, 137] {
        let grid = TimeGrid::uniform(&s, steps, 0.9, 0.1).unwrap();
        for (m, want) in [
            (Method::Ddim, steps),
            (Method::SPndm, steps + 1),
            (Method::FPndm, steps + 9),
            (Method::FonRk4, 4 * steps),
        ] {
            let got = sample(&SamplerSpec::new(m, &grid, &s, &AnalyticToy), &x)
                .unwrap()
                .predictor_eval_count();
            if got != want {
                bad.push(format!("{m} S={steps}: {got} != {want}"));
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "S, S+1, S+9, 4S for S in {4, 10, 50, 137}".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn replay() -> Outcome {
    let sample_cfg = RunConfig::parse(
        "schedule.kind=cosine\npredictor.kind=exact-oracle\npredictor.x0=0.5,-1,2,0.25\n\
         sampler.method=F-PNDM\nsampler.steps=30\nsampler.seed=42\ngrid.t_start=1\ngrid.t_end=0\n",
    )
    .unwrap();
    let toy_cfg = RunConfig::parse(
        "schedule.kind=toy-linear\npredictor.kind=analytic-toy\nsampler.method=S-PNDM\n\
         sampler.steps=40\nsampler.seed=5\ngrid.t_start=0.9\ngrid.t_end=0.1\nstats.samples=300\n",
    )
    .unwrap();
    let probe_cfg = RunConfig::parse("schedule.kind=exponential\nschedule.params.a=-0.5\nschedule.params.b=-1\n").unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        cmd_sample(&sample_cfg, &d.path().join("a"), true).unwrap();
        cmd_sample(&toy_cfg, &d.path().join("b"), true).unwrap();
        cmd_stats(&toy_cfg, &d.path().join("b")).unwrap();
        cmd_probe(&probe_cfg, &d.path().join("c")).unwrap();
    }
    let files = [
        "a/trajectory.csv",
        "a/eps.csv",
        "b/trajectory.csv",
        "b/eps.csv",
        "b/norm_band.csv",
        "b/pixel_pair.csv",
        "c/singularity.csv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(dirs[0].path().join(f)).unwrap() != fs::read(dirs[1].path().join(f)).unwrap())
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} CSV files byte-identical across two runs", files.len())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "transfer identity", timed(secs(1), transfer_identity)));
    results.push((2, "exact noise stays on the forward process", timed(secs(10), exact_noise_property)));
    results.push((3, "constant predictor reduction", timed(secs(1), reduction)));

    let start = Instant::now();
    let reports = order_reports();
    let order_time = start.elapsed();
    let mut order = convergence_order(&reports);
    order.detail = format!("{} [{:.2} s]", order.detail, order_time.as_secs_f64());
    if order_time > Duration::from_secs(60) {
        order.pass = false;
        order.detail += " exceeds 60 s";
    }
    results.push((4, "convergence order", order));
    results.push((5, "halving ratios", timed(None, || halving_ratios(&reports))));
    results.push((6, "noise coefficient singularity", timed(secs(1), singularity)));
    results.push((7, "comparative accuracy", timed(secs(30), comparative_accuracy)));
    results.push((8, "evaluation counts", timed(None, eval_counts)));
    results.push((9, "determinism and replay", timed(None, replay)));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
