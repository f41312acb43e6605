//! Acceptance checks, run in sequence so that timing checks are not disturbed by other tests.
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netadapt::adapt::{run_scenario, PlannerKind, RunConfig};
use netadapt::harness::experiment::{
    default_sweep_values, run_experiment, run_sweep, ExperimentSpec, Metric, SweepAxis,
};
use netadapt::harness::scenario_io::load_scenario;
use netadapt::harness::stats::{a12_effect_size, wilcoxon_exact, wilcoxon_normal_approx};
use netadapt::netmodel::{link_loads, utilizations, Demands, Flow, LinkId, NodeId};
use netadapt::planner::{combined_fitness, lcs_flow_distance, run_genplan, BestSol, GpConfig};

const CANNED: &str = "((1.5*threshold)*(1.5*threshold))/((1.5*threshold-util)*(1.5*threshold-util))";

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn netadapt(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_netadapt"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn replay_canned() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ticks = dir.path().join("ticks.csv");
    let metrics = dir.path().join("m.csv");
    let sc = scenario_path("three_paths_staggered.json");
    let started = Instant::now();
    let log = netadapt(&[
        "replay",
        "--scenario",
        sc.to_str().unwrap(),
        "--expr",
        CANNED,
        "--trace",
        "--ticks",
        ticks.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ])?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;

    let lines: Vec<(u64, &str, &str)> = log
        .lines()
        .map(|l| {
            let mut it = l.splitn(3, '\t');
            (
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap(),
                it.next().unwrap_or(""),
            )
        })
        .collect();
    let mut route: BTreeMap<String, String> = BTreeMap::new();
    for &(_, kind, payload) in &lines {
        if kind == "arrival" {
            let (r, p) = payload.split_once(' ').unwrap();
            route.insert(r.into(), p.into());
        }
        if kind == "applied" {
            let moved = payload.split("moved=[").nth(1).unwrap().trim_end_matches(']');
            for m in moved.split("; ").filter(|m| !m.is_empty()) {
                let (r, p) = m.split_once(' ').unwrap();
                route.insert(r.into(), p.into());
            }
        }
    }
    let want = [
        ("r1", "0->1"),
        ("r2", "0->1"),
        ("r3", "0->2->1"),
        ("r4", "0->2->1"),
        ("r5", "0->3->4->1"),
        ("r6", "0->3->4->1"),
    ];
    for (r, p) in want {
        ensure(
            route.get(r).map(String::as_str) == Some(p),
            format!("{r} on {:?}, want {p}", route.get(r)),
        )?;
    }
    let detected: Vec<u64> = lines
        .iter()
        .filter(|l| l.1 == "congestion-detected")
        .map(|l| l.0)
        .collect();
    ensure(detected == vec![20], format!("congestion detected at {detected:?}"))?;
    let applied = lines.iter().filter(|l| l.1 == "applied").count();
    ensure(applied == 1, format!("{applied} applications"))?;
    let applied_at = lines.iter().position(|l| l.1 == "applied").unwrap();
    let w_after = lines[applied_at + 1..]
        .iter()
        .find(|l| l.1 == "weights")
        .ok_or("no weight trace after adaptation")?;
    ensure(
        w_after.2.split(' ').any(|w| w == "0->1=4@0.600"),
        format!("weights after adaptation: {}", w_after.2),
    )?;
    ensure(
        w_after.2.split(' ').any(|w| w == "0->2=1@0.300"),
        "middle path weight should stay 1 at 30%",
    )?;
    let after_r4 = lines
        .iter()
        .find(|l| l.0 == 30 && l.1 == "weights")
        .ok_or("no trace at r4")?;
    ensure(
        after_r4.2.split(' ').any(|w| w == "0->2=4@0.600"),
        "middle path weight should be 4 at 60%",
    )?;

    let ticks = std::fs::read_to_string(&ticks).map_err(|e| e.to_string())?;
    let late_congested = ticks
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next().unwrap().parse::<u64>().unwrap() > 20)
        .filter(|l| l.split(',').nth(2) == Some("1"))
        .count();
    ensure(
        late_congested == 0,
        format!("{late_congested} congested ticks after adaptation"),
    )?;
    Ok(format!(
        "routes, single adaptation at tick 20, w(0->1)=4 at 60%, {elapsed:.0?}"
    ))
}

fn fitness_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100_000 {
        let fit1 = if i % 1000 == 0 { 0.8 } else { rng.gen_range(0.0..2.0) };
        let fit2 = rng.gen_range(0.0..500.0f64).floor();
        let fit3 = rng.gen_range(0.0..10_000.0);
        let f = combined_fitness(fit1, fit2, fit3, 0.8);
        ensure(
            (0.0..=3.0).contains(&f),
            format!("fitness {f} for ({fit1}, {fit2}, {fit3})"),
        )?;
        ensure(
            (f < 2.0) == (fit1 < 0.8),
            format!("fitness {f} disagrees with fit1 {fit1}"),
        )?;
    }
    Ok("100000 triples in [0,3], below 2 exactly when fit1 < threshold".into())
}

fn brute_lcs(a: &[LinkId], b: &[LinkId]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<LinkId> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        let mut it = b.iter();
        if sub.iter().all(|x| it.any(|y| y == x)) {
            best = best.max(sub.len());
        }
    }
    best
}

fn lcs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let path = |rng: &mut ChaCha8Rng| -> Vec<LinkId> {
            let len = rng.gen_range(0..=8);
            (0..len).map(|_| LinkId(rng.gen_range(0..6))).collect()
        };
        let (a, b) = (path(&mut rng), path(&mut rng));
        let want = a.len() + b.len() - 2 * brute_lcs(&a, &b);
        let got = lcs_flow_distance(&Flow::new(1, a.clone()), &Flow::new(1, b.clone()));
        ensure(got == want, format!("{a:?} vs {b:?}: {got} != {want}"))?;
    }
    Ok("1000 random path pairs match subset-enumeration LCS".into())
}

fn gp_search() -> Outcome {
    let sc = load_scenario(scenario_path("three_paths_staggered.json")).map_err(|e| e.to_string())?;
    let n = &sc.network;
    let direct = n.find_link(NodeId(0), NodeId(1)).unwrap();
    let flows: Vec<Flow> = (1..=3).map(|i| Flow::new(i, vec![direct])).collect();
    let demands = Demands::from_pairs((1..=3).map(|i| (i, 30.0)));
    let cfg = GpConfig::default().with_generations(300);
    let (mut solved, mut slowest) = (0, Duration::ZERO);
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Instant::now();
        let out = run_genplan(n, &flows, &demands, &BestSol::new(5), &cfg, &mut rng).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        let util = utilizations(n, &link_loads(n, &out.new_flows, &demands).map_err(|e| e.to_string())?);
        if out.best_fitness < 2.0 && util.iter().all(|&u| u <= 0.8) {
            solved += 1;
        }
    }
    ensure(solved >= 27, format!("{solved}/30 runs resolved"))?;
    ensure(slowest < Duration::from_secs(1), format!("slowest run {slowest:?}"))?;
    Ok(format!("{solved}/30 runs resolved, slowest {slowest:.1?}"))
}

fn comparative_direction() -> Outcome {
    let sc = load_scenario(scenario_path("four_paths_pairs.json")).map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        gp: GpConfig::default().with_generations(sc.max_generations.unwrap_or(500)),
        ..RunConfig::default()
    };
    let spec = ExperimentSpec::new(sc, vec![PlannerKind::GenAdapt, PlannerKind::Reroute]);
    let r = run_experiment(&spec, &cfg);
    ensure(r.failures().is_empty(), format!("{} failed runs", r.failures().len()))?;
    let (g, d) = (
        r.values(PlannerKind::GenAdapt, Metric::CongestionOccurrences),
        r.values(PlannerKind::Reroute, Metric::CongestionOccurrences),
    );
    let (mg, md) = (
        r.mean(PlannerKind::GenAdapt, Metric::CongestionOccurrences),
        r.mean(PlannerKind::Reroute, Metric::CongestionOccurrences),
    );
    let a12 = a12_effect_size(&g, &d).map_err(|e| e.to_string())?;
    let detail = format!("mean occurrences {mg:.2} vs {md:.2}, A12 {a12:.3}");
    ensure(mg <= md && a12 <= 0.5, detail.clone())?;
    Ok(detail)
}

fn static_failure_mode() -> Outcome {
    let sc = load_scenario(scenario_path("three_paths_staggered.json")).map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        gp: GpConfig::default().with_generations(sc.max_generations.unwrap_or(300)),
        ..RunConfig::default()
    };
    let st = run_scenario(&sc, PlannerKind::StaticUnit, &cfg, 0)
        .map_err(|e| e.to_string())?
        .metrics;
    let sustained = st.per_tick.iter().filter(|s| s.tick >= 20).all(|s| s.congested);
    ensure(sustained, "static unit weights are not congested throughout from r3 on")?;
    ensure(st.packet_loss_ratio > 0.0, "static unit weights lose nothing")?;
    let last = sc.duration_ticks - 10;
    let late = |seed: u64| -> Result<usize, String> {
        let m = run_scenario(&sc, PlannerKind::GenAdapt, &cfg, seed)
            .map_err(|e| e.to_string())?
            .metrics;
        Ok(m.per_tick.iter().filter(|s| s.tick >= last && s.congested).count())
    };
    let default_late = late(0)?;
    // other seeds are reported, not gated: a seed whose final fix lands one tick late shows up here
    let mut clean = 0;
    for seed in 0..30 {
        clean += usize::from(late(seed)? == 0);
    }
    let detail = format!(
        "static-unit congested from tick 20, loss {:.2}%; adaptive run has {default_late} congested ticks in the final 10 \
         (clean in {clean}/30 seeds)",
        st.packet_loss_ratio * 100.0
    );
    ensure(default_late == 0, detail.clone())?;
    Ok(detail)
}

fn scalability() -> Outcome {
    let cfg = RunConfig::default();
    let mut notes = Vec::new();
    for axis in [SweepAxis::Nodes, SweepAxis::Requests] {
        let r = run_sweep(axis, &default_sweep_values(), &cfg, 3, 0)?;
        let fit = r.fit.ok_or("no fit")?;
        let worst = r.points.iter().map(|p| p.max_plan_time).max().unwrap_or_default();
        let name = match axis {
            SweepAxis::Nodes => "links",
            SweepAxis::Requests => "requests",
        };
        let curve: Vec<String> = r
            .points
            .iter()
            .map(|p| format!("{:.1}", p.mean_plan_time.as_secs_f64() * 1e3))
            .collect();
        ensure(
            fit.r_squared >= 0.9,
            format!("R^2 vs {name} = {:.4}, mean ms [{}]", fit.r_squared, curve.join(" ")),
        )?;
        ensure(worst < Duration::from_secs(10), format!("slowest call {worst:?}"))?;
        notes.push(format!("R^2 vs {name} {:.4} (slowest call {worst:.0?})", fit.r_squared));
    }
    Ok(notes.join(", "))
}

fn brute_a12(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Exact two-sided p over all labellings, by bitmask.
fn brute_exact(ranks_a: &[f64], ranks_b: &[f64]) -> f64 {
    let all: Vec<f64> = ranks_a.iter().chain(ranks_b).copied().collect();
    let n = all.len();
    let e = ranks_a.len() as f64 * (n + 1) as f64 / 2.0;
    let obs = (ranks_a.iter().sum::<f64>() - e).abs();
    let (mut hit, mut tot) = (0u32, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == ranks_a.len() {
            tot += 1;
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| all[i]).sum();
            hit += u32::from((w - e).abs() >= obs - 1e-9);
        }
    }
    f64::from(hit) / f64::from(tot)
}

fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let na = rng.gen_range(1..=20);
        let nb = rng.gen_range(1..=20);
        let a: Vec<f64> = (0..na).map(|_| f64::from(rng.gen_range(0..8u8))).collect();
        let b: Vec<f64> = (0..nb).map(|_| f64::from(rng.gen_range(0..8u8))).collect();
        let x = a12_effect_size(&a, &b).map_err(|e| e.to_string())?;
        ensure(x == brute_a12(&a, &b), format!("A12 mismatch on {a:?} / {b:?}"))?;
    }
    // every tie-free 6+6 sample is one of these rank splits
    let mut worst: f64 = 0.0;
    let mut splits = 0;
    for mask in 0u32..(1 << 12) {
        if mask.count_ones() != 6 {
            continue;
        }
        splits += 1;
        let a: Vec<f64> = (0..12)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| f64::from(i + 1))
            .collect();
        let b: Vec<f64> = (0..12)
            .filter(|i| mask & (1 << i) == 0)
            .map(|i| f64::from(i + 1))
            .collect();
        let exact = wilcoxon_exact(&a, &b).map_err(|e| e.to_string())?;
        ensure(
            (exact - brute_exact(&a, &b)).abs() < 1e-12,
            format!("exact p wrong on {a:?}"),
        )?;
        let approx = wilcoxon_normal_approx(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((exact - approx).abs());
    }
    ensure(worst <= 0.02, format!("approximation off by {worst:.4}"))?;
    Ok(format!(
        "A12 = pair count on 2000 samples; {splits} tie-free 6+6 splits, worst approx gap {worst:.4}"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sc = scenario_path("three_paths_staggered.json");
    let sc = sc.to_str().unwrap();
    let burst = scenario_path("burst_seven_nodes.json");
    let burst = burst.to_str().unwrap();
    let mut checked = 0;
    for planner in ["genadapt", "reroute", "static-unit", "static-invbw"] {
        let mut outputs = Vec::new();
        for i in 0..2 {
            let out = dir.path().join(format!("{planner}-{i}.csv"));
            let events = dir.path().join(format!("{planner}-{i}.log"));
            netadapt(&[
                "replay",
                "--scenario",
                burst,
                "--planner",
                planner,
                "--seed",
                "5",
                "--out",
                out.to_str().unwrap(),
                "--events",
                events.to_str().unwrap(),
            ])?;
            outputs.push((std::fs::read(&out).unwrap(), std::fs::read(&events).unwrap()));
        }
        ensure(
            outputs[0] == outputs[1],
            format!("replay {planner} differs between runs"),
        )?;
        checked += 1;
    }
    let mut csvs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("compare-{i}.csv"));
        netadapt(&[
            "compare",
            "--scenario",
            sc,
            "--planner",
            "genadapt",
            "--planner",
            "reroute",
            "--planner",
            "static-invbw",
            "--runs",
            "5",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
            "--stats",
            dir.path().join("stats.txt").to_str().unwrap(),
        ])?;
        csvs.push(std::fs::read(&out).unwrap());
    }
    ensure(csvs[0] == csvs[1], "compare output differs between runs")?;
    ensure(!csvs[0].is_empty(), "compare wrote nothing")?;
    Ok(format!("{} commands byte-identical on repeat", checked + 1))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("canned-expression replay", replay_canned),
        ("fitness algebra", fitness_algebra),
        ("LCS oracle", lcs_oracle),
        ("GP search capability", gp_search),
        ("adaptive vs reroute-only direction", comparative_direction),
        ("static baseline failure mode", static_failure_mode),
        ("planner-time scalability", scalability),
        ("statistics oracles", statistics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let t = started.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{t:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{t:.1?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
