//! Acceptance suite: one test per criterion, each printing a PASS or FAIL
//! line to the real stdout (uncaptured) before asserting.
// orderings are written as `!(a < b)` so that NaN counts as a violation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tempfile::TempDir;
use wncs_cli::sweep::{execute, run_sweep, SweepSpec};
use wncs_core::channel::FadingState;
use wncs_core::control::{apply_tick, compute_command, reference_pose, Gains, Pose, TrackSpec};
use wncs_core::link_adaptation::{default_catalogue, expected_bler, rb_needed};
use wncs_core::numerics::{bessel_j0, marcum_q1, rayleigh_expect, QuadratureSpec};
use wncs_core::scheduler::PolicyKind;
use wncs_core::simulator::{AgvRecord, AgvStatus, SimConfig, Simulation};
use wncs_core::stability::{p_back_to_back, p_instability, solve_pe_threshold, PbbForm};

fn report(criterion: u32, title: &str, problems: &[String], notes: &[String]) {
    let mut out = std::io::stdout().lock();
    let verdict = if problems.is_empty() { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "criterion {criterion} {verdict}: {title}");
    for n in notes {
        let _ = writeln!(out, "    {n}");
    }
    for p in problems {
        let _ = writeln!(out, "    violated: {p}");
    }
}

fn conclude(criterion: u32, title: &str, problems: Vec<String>, notes: Vec<String>) {
    report(criterion, title, &problems, &notes);
    assert!(problems.is_empty(), "criterion {criterion} failed:\n{}", problems.join("\n"));
}

fn check_runtime(problems: &mut Vec<String>, notes: &mut Vec<String>, start: Instant, limit: Duration) {
    let took = start.elapsed();
    notes.push(format!("runtime {:.2} s (limit {} s)", took.as_secs_f64(), limit.as_secs()));
    if took >= limit {
        problems.push(format!("runtime {took:?} exceeds {limit:?}"));
    }
}

#[test]
fn criterion_1_numerics() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut notes = Vec::new();

    let mut worst = 0.0f64;
    for a in [0.0, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 25.0] {
        let q = marcum_q1(a, 0.0).unwrap();
        worst = worst.max((q - 1.0).abs());
    }
    for b in [0.0, 0.01, 0.3, 1.0, 2.0, 3.5, 5.0, 8.0] {
        let q = marcum_q1(0.0, b).unwrap();
        worst = worst.max((q - (-b * b / 2.0f64).exp()).abs());
    }
    notes.push(format!("Marcum identities: worst deviation {worst:.2e}"));
    if worst > 1e-10 {
        problems.push(format!("Marcum identity off by {worst:e}"));
    }

    // step curve 1{γ < t}: E = 1 - exp(-t / γ_b)
    let spec = QuadratureSpec::default();
    let mut worst = 0.0f64;
    let mut points = 0;
    for gamma_b in [0.05, 1.0, 3.7, 50.0, 1e4] {
        let n = 400;
        for i in 0..=n {
            let ratio = 0.01 * 1000f64.powf(i as f64 / n as f64);
            let t = ratio * gamma_b;
            let got = rayleigh_expect(|g| if g < t { 1.0 } else { 0.0 }, gamma_b, &spec).unwrap();
            worst = worst.max((got - (-(-ratio).exp_m1())).abs());
            points += 1;
        }
    }
    notes.push(format!("step-curve expectation: worst error {worst:.2e} over {points} points"));
    if worst > 1e-6 {
        problems.push(format!("step-curve expectation off by {worst:e}"));
    }

    let root = 2.404_825_557_695_773;
    let j = bessel_j0(root).unwrap();
    notes.push(format!("J0 at its first zero: {j:.2e}"));
    if j.abs() > 1e-9 {
        problems.push(format!("J0({root}) = {j:e}"));
    }

    check_runtime(&mut problems, &mut notes, start, Duration::from_secs(5));
    conclude(1, "numerics suite", problems, notes);
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[test]
fn criterion_2_back_to_back_consistency() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut notes = Vec::new();

    let mut worst = 0.0f64;
    for p in [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9] {
        let b = p_back_to_back(p, 0.0, PbbForm::Corrected).unwrap();
        worst = worst.max((b - p).abs());
    }
    notes.push(format!("uncorrelated channel: worst |P_bb - p| = {worst:.2e}"));
    if worst > 1e-9 {
        problems.push(format!("P_bb at ρ = 0 differs from p by {worst:e}"));
    }

    // joint outage of a stationary Gauss-Markov pair; outage is |h|² below
    // the p-quantile of Exp(1)
    let pairs = 10_000_000;
    for (k, rho) in [0.5, 0.9, 0.989].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024 + k as u64);
        let innovation = (1.0f64 - rho * rho).sqrt();
        let ps = [0.05, 0.1, 0.3];
        let thresholds = ps.map(|p: f64| -(-p).ln_1p());
        let mut first = [0u64; 3];
        let mut both = [0u64; 3];
        for _ in 0..pairs {
            let h1 = complex_normal(&mut rng);
            let h2 = h1 * rho + complex_normal(&mut rng) * innovation;
            let (g1, g2) = (h1.norm_sqr(), h2.norm_sqr());
            for i in 0..3 {
                if g1 < thresholds[i] {
                    first[i] += 1;
                    if g2 < thresholds[i] {
                        both[i] += 1;
                    }
                }
            }
        }
        for i in 0..3 {
            let mc = both[i] as f64 / first[i] as f64;
            let model = p_back_to_back(ps[i], rho, PbbForm::Corrected).unwrap();
            let rel = (mc - model).abs() / model;
            notes.push(format!(
                "ρ = {rho}, p = {}: Monte-Carlo {mc:.5}, closed form {model:.5}, rel. diff {rel:.2e}",
                ps[i]
            ));
            if rel > 0.02 {
                problems.push(format!("ρ = {rho}, p = {}: {mc} vs {model}", ps[i]));
            }
        }
    }

    check_runtime(&mut problems, &mut notes, start, Duration::from_secs(120));
    conclude(2, "P_bb consistency", problems, notes);
}

/// Fraction of trials in which a stationary two-state error/success chain
/// with `P(e) = p` and `P(e | e) = pbb` starts with `run` errors in a row.
/// Only the start state and the error-to-error transition can extend a
/// streak that begins at the first packet, so a trial ends at the first
/// success.
fn markov_run_frequency(p: f64, pbb: f64, run: u32, trials: u64, rng: &mut ChaCha8Rng) -> f64 {
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut error = rng.random::<f64>() < p;
        let mut streak = 0;
        while error && streak < run {
            streak += 1;
            error = rng.random::<f64>() < pbb;
        }
        if streak == run {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

#[test]
fn criterion_3_instability_oracle() {
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    let n_max = 10;
    let form = PbbForm::Corrected;

    let mut compared = 0;
    let mut worst = 0.0f64;
    for (k, rho) in [0.5, 0.9, 0.989].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + k as u64);
        for p in [0.05, 0.1, 0.3] {
            let pbb = p_back_to_back(p, rho, form).unwrap();
            for delta in 0..n_max {
                let model = p_instability(p, rho, n_max, delta, form).unwrap();
                if model < 1e-5 {
                    continue;
                }
                // about 1e4 expected hits: 1% standard error
                let trials = (1e4 / model).ceil() as u64;
                let mc = markov_run_frequency(p, pbb, n_max - delta, trials, &mut rng);
                let rel = (mc - model).abs() / model;
                worst = worst.max(rel);
                compared += 1;
                if rel > 0.05 {
                    problems.push(format!("ρ = {rho}, p = {p}, δ = {delta}: chain {mc:e} vs closed form {model:e}"));
                }
            }
        }
    }
    notes.push(format!("{compared} grid points with P_us >= 1e-5, worst rel. diff {worst:.2e}"));

    for rho in [0.0, 0.5, 0.9, 0.989] {
        let table: Vec<f64> = (0..n_max).map(|d| solve_pe_threshold(rho, n_max, d, 1e-9, form).unwrap()).collect();
        if table[9] != 1e-9 {
            problems.push(format!("ρ = {rho}: p*(9) = {:e}", table[9]));
        }
        if !table.windows(2).all(|w| w[1] <= w[0]) {
            problems.push(format!("ρ = {rho}: p* increases with δ: {table:?}"));
        }
        if rho == 0.989 {
            notes.push(format!(
                "p*(δ) at ρ = 0.989: {}",
                table.iter().map(|p| format!("{p:.3e}")).collect::<Vec<_>>().join(", ")
            ));
        }
    }
    conclude(3, "P_us oracle equivalence", problems, notes);
}

#[test]
fn criterion_4_threshold_closed_form() {
    let mut problems = Vec::new();
    let p = solve_pe_threshold(0.0, 10, 0, 1e-9, PbbForm::Corrected).unwrap();
    // uncorrelated: P_us = p^10
    let want = 10f64.powf(-0.9);
    let notes = vec![format!("p* = {p:.10}, closed form {want:.10}")];
    if (p - want).abs() > 1e-6 {
        problems.push(format!("{p} vs {want}"));
    }
    conclude(4, "threshold solver closed form", problems, notes);
}

fn vehicle(track: TrackSpec, start: Pose) -> AgvRecord {
    AgvRecord {
        id: 0,
        arrival_tick: 0,
        service_end_tick: u64::MAX,
        pose: start,
        track,
        track_tick: 0,
        loss_count: 0,
        last_command: None,
        error: 0.0,
        status: AgvStatus::Active,
        fading: FadingState::with_gain(Complex64::new(1.0, 0.0), 1.0),
        last_mcs: None,
    }
}

#[test]
fn criterion_5_control_sanity() {
    let ts = 0.005;
    let gains = Gains::default();
    let mut problems = Vec::new();
    let mut notes = Vec::new();

    let track = TrackSpec::line(Pose::new(10.0, -4.0, 0.7), 1.0);
    let heading: f64 = 0.7;
    let start = Pose::new(10.0 - 0.01 * heading.sin(), -4.0 + 0.01 * heading.cos(), 0.72);
    let mut rec = vehicle(track, start);
    let mut worst_after = 0.0f64;
    for tick in 0..4000u64 {
        let reference = reference_pose(&rec.track, rec.track_tick, ts);
        let fresh = compute_command(&rec.pose, &reference, rec.track.speed, rec.track.angular_rate(), &gains, tick);
        apply_tick(&mut rec, true, fresh, ts);
        if tick >= 100 {
            worst_after = worst_after.max(rec.error);
        }
    }
    notes.push(format!("line track, 1 cm start offset: worst error after 100 ticks {worst_after:.2e} m"));
    if worst_after >= 0.02 {
        problems.push(format!("error {worst_after} m after the transient"));
    }

    // δ_k = δ_(k-1) + 1 on loss, 0 on delivery; the applied command is the
    // one issued at the last delivery
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut patterns: Vec<Vec<bool>> = vec![
        vec![false; 12],
        vec![true; 12],
        vec![true, false, false, true, false, false, false, true, false, true],
        vec![false, false, true, false, true, true, false, false, false, false, false, true],
    ];
    for _ in 0..200 {
        let len = rng.random_range(1..300);
        let loss = rng.random_range(0.0..1.0);
        patterns.push((0..len).map(|_| rng.random::<f64>() >= loss).collect());
    }
    let mut steps = 0;
    for (n, pattern) in patterns.iter().enumerate() {
        let mut rec = vehicle(TrackSpec::line(Pose::default(), 1.0), Pose::default());
        let mut delta = 0u32;
        let mut last_delivery = None;
        for (tick, &ok) in pattern.iter().enumerate() {
            let tick = tick as u64;
            let reference = reference_pose(&rec.track, rec.track_tick, ts);
            let fresh = compute_command(&rec.pose, &reference, 1.0, 0.0, &gains, tick);
            let applied = apply_tick(&mut rec, ok, fresh, ts);
            delta = if ok { 0 } else { delta + 1 };
            if ok {
                last_delivery = Some(tick);
            }
            if rec.loss_count != delta {
                problems.push(format!("pattern {n}, tick {tick}: δ = {}, expected {delta}", rec.loss_count));
                break;
            }
            let stale_ok = match last_delivery {
                Some(t) => applied.issue_tick == t,
                None => applied.linear_velocity == 0.0 && applied.angular_velocity == 0.0,
            };
            if !stale_ok {
                problems.push(format!("pattern {n}, tick {tick}: applied command from tick {}", applied.issue_tick));
                break;
            }
            steps += 1;
        }
    }
    notes.push(format!("{} scripted loss patterns, {steps} ticks: δ trace exact", patterns.len()));
    conclude(5, "control sanity", problems, notes);
}

fn mean_by<F: Fn(&wncs_cli::sweep::CellResult) -> f64>(
    results: &[wncs_cli::sweep::CellResult],
    lambda: f64,
    policy: PolicyKind,
    f: F,
) -> f64 {
    let cells: Vec<f64> = results.iter().filter(|c| c.lambda == lambda && c.policy == policy).map(f).collect();
    cells.iter().sum::<f64>() / cells.len() as f64
}

#[test]
fn criterion_6_qualitative_reproduction() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    let base = SimConfig { total_ticks: 10_000, ..SimConfig::default() };
    let lambdas = [2e-3, 4e-3, 6e-3, 8e-3];
    let spec = SweepSpec {
        lambdas: lambdas.to_vec(),
        policies: PolicyKind::ALL.to_vec(),
        seeds: vec![1, 2, 3],
        out_dir: "unused".into(),
        trace: false,
        jobs: None,
        table_source: "builtin".into(),
    };
    let outcome = execute(&spec, &base, &default_catalogue()).unwrap();
    for f in &outcome.failures {
        problems.push(format!("run λ = {}, {}, seed {} failed: {}", f.lambda, f.policy, f.seed, f.message));
    }
    let results = &outcome.results;
    use PolicyKind::*;
    for &l in &lambdas {
        let ru = |p| mean_by(results, l, p, |c| c.summary.mean_ru_pct());
        let un = |p| mean_by(results, l, p, |c| c.summary.unstable as f64);
        notes.push(format!(
            "λ = {l}: RU instability {:.2}%, maxsnr {:.2}%, error {:.2}%; unstable {:.2}, {:.2}, {:.2}",
            ru(Instability),
            ru(MaxSnr),
            ru(ErrorFirst),
            un(Instability),
            un(MaxSnr),
            un(ErrorFirst)
        ));
        if l < 7e-3 {
            if !(ru(Instability) < ru(MaxSnr)) {
                problems.push(format!("λ = {l}: RU instability {} not below maxsnr {}", ru(Instability), ru(MaxSnr)));
            }
            if !(ru(Instability) < ru(ErrorFirst)) {
                problems.push(format!(
                    "λ = {l}: RU instability {} not below error {}",
                    ru(Instability),
                    ru(ErrorFirst)
                ));
            }
        } else {
            for p in PolicyKind::ALL {
                if !(ru(p) > 95.0) {
                    problems.push(format!("λ = {l}: RU {p} = {:.2}% is not above 95%", ru(p)));
                }
            }
        }
        if l > 5e-3 && !(un(Instability) <= un(MaxSnr) && un(MaxSnr) <= un(ErrorFirst)) {
            problems.push(format!(
                "λ = {l}: unstable counts {} / {} / {} not ordered instability <= maxsnr <= error",
                un(Instability),
                un(MaxSnr),
                un(ErrorFirst)
            ));
        }
    }
    check_runtime(&mut problems, &mut notes, start, Duration::from_secs(600));
    conclude(6, "qualitative orderings at desk scale", problems, notes);
}

#[test]
fn criterion_7_determinism() {
    let dir = TempDir::new().unwrap();
    let base = SimConfig { total_ticks: 2000, seed: 11, ..SimConfig::default() };
    let spec = |name: &str, jobs| SweepSpec {
        lambdas: vec![8e-3, 3e-3],
        policies: PolicyKind::ALL.to_vec(),
        seeds: wncs_cli::sweep::derive_seeds(base.seed, 2),
        out_dir: dir.path().join(name),
        trace: false,
        jobs,
        table_source: "builtin".into(),
    };
    let cat = default_catalogue();
    let a = spec("a", Some(1));
    let b = spec("b", None);
    run_sweep(&a, &base, &cat).unwrap();
    run_sweep(&b, &base, &cat).unwrap();
    let bytes_a = std::fs::read(a.out_dir.join("summary.csv")).unwrap();
    let bytes_b = std::fs::read(b.out_dir.join("summary.csv")).unwrap();
    let mut problems = Vec::new();
    if bytes_a != bytes_b {
        problems.push("summary.csv differs between repeated sweeps".to_string());
    }
    let notes = vec![format!(
        "{} bytes, {} rows, identical across 1 and default worker threads",
        bytes_a.len(),
        bytes_a.iter().filter(|&&c| c == b'\n').count() - 1
    )];
    conclude(7, "byte-identical summary.csv", problems, notes);
}

#[test]
fn criterion_8_scheduler_invariants() {
    let cat = default_catalogue();
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    let spec = QuadratureSpec::default();
    for policy in PolicyKind::ALL {
        // empty start at a high arrival rate plus a burst halfway: light,
        // moderate and overloaded ticks in one run
        let cfg = SimConfig { arrival_rate: 8e-3, total_ticks: 10_000, policy, seed: 8, ..SimConfig::default() };
        let total_rb = cfg.total_rb;
        let mut sim = Simulation::new(cfg, &cat).unwrap();
        let stability = *sim.stability();
        let mut budget_violations = 0u64;
        let mut saturated = 0u64;
        let mut checked = 0u64;
        let mut literal_violations = 0u64;
        let mut literal_worst = 0.0f64;
        let mut instantaneous_violations = 0u64;
        let mut fallbacks = 0u64;
        while !sim.is_finished() {
            if sim.tick() == 5000 {
                for _ in 0..15 {
                    sim.inject_arrival();
                }
            }
            let report = sim.step().unwrap();
            let d = &report.decision;
            let rb_sum: u32 = d.allocations.iter().map(|a| a.rb_count).sum();
            let mut tick_ok = rb_sum <= total_rb && rb_sum == report.record.rb_used;
            for a in &d.allocations {
                match (a.scheduled, a.mcs) {
                    (true, Some(m)) => tick_ok &= a.rb_count == rb_needed(600, cat.get(m)),
                    (false, None) => tick_ok &= a.rb_count == 0 && a.inst_bler == 1.0,
                    _ => tick_ok = false,
                }
            }
            if !tick_ok {
                budget_violations += 1;
            }
            if rb_sum + rb_needed(600, cat.get(cat.most_robust())) > total_rb
                && d.allocations.iter().any(|a| !a.scheduled)
            {
                saturated += 1;
            }
            if policy != PolicyKind::Instability {
                continue;
            }
            for a in d.allocations.iter().filter(|a| a.scheduled) {
                if a.fallback {
                    fallbacks += 1;
                    continue;
                }
                let c = report.candidates.iter().find(|c| c.id == a.id).unwrap();
                let entry = cat.get(a.mcs.unwrap());
                let pe = expected_bler(entry, c.mean_snr, &spec).unwrap();
                let literal =
                    p_instability(pe, stability.correlation, stability.n_max, c.loss_count, stability.form).unwrap();
                let instantaneous =
                    p_instability(a.inst_bler, stability.correlation, stability.n_max, c.loss_count, stability.form)
                        .unwrap();
                checked += 1;
                if literal > stability.instability_bound {
                    literal_violations += 1;
                    literal_worst = literal_worst.max(literal);
                }
                if instantaneous > stability.instability_bound {
                    instantaneous_violations += 1;
                }
            }
        }
        let summary = sim.finish();
        notes.push(format!(
            "{policy}: {} ticks, {saturated} with the budget binding, {budget_violations} budget violations, {} arrivals",
            summary.ru_pct.len(),
            summary.arrived
        ));
        if budget_violations > 0 {
            problems.push(format!("{policy}: budget conservation broken on {budget_violations} ticks"));
        }
        if policy == PolicyKind::Instability {
            notes.push(format!(
                "instability: {checked} non-fallback allocations checked, {fallbacks} fallbacks (run reports {})",
                summary.fallback_count
            ));
            notes.push(format!(
                "P_us(expected BLER of selected MCS at mean SNR) <= 1e-9 violated {literal_violations} times, worst {literal_worst:.3e}"
            ));
            notes.push(format!(
                "P_us(BLER of selected MCS at instantaneous SNR) <= 1e-9 violated {instantaneous_violations} times"
            ));
            if summary.fallback_count != fallbacks {
                problems.push(format!("fallback count {} but {fallbacks} observed", summary.fallback_count));
            }
            if literal_violations > 0 {
                problems.push(format!(
                    "stability constraint on expected BLER failed for {literal_violations} of {checked} allocations"
                ));
            }
            if instantaneous_violations > 0 {
                problems.push(format!(
                    "stability constraint on instantaneous BLER failed {instantaneous_violations} times"
                ));
            }
        }
    }
    conclude(8, "budget conservation and stability constraint", problems, notes);
}
