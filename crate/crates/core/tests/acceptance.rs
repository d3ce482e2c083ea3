// SPDX-License-Identifier: Apache-2.0

//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.

use std::collections::BTreeSet;
use std::convert::Infallible;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbarlife::circuit::{
    calibrate_drive, corner_params, current_asymmetry, solve_currents, CellStateGrid, SolverMode,
};
use xbarlife::energy::{self, EnergyParams};
use xbarlife::partition::{kl_bipartition, partition_workload, Clustering, PartitionOptions};
use xbarlife::pipeline::{run_strategy, Platform, Strategy};
use xbarlife::placement::LifetimeMode;
use xbarlife::swarm::{pareto_front, run, Evaluation, FnEvaluator, Fitness, Mapping, SwarmConfig};
use xbarlife::thermal::{endurance_map, simulate_peak, PcmParams};
use xbarlife::workload::{
    generate, ActivationDist, GeneratorSpec, Neuron, NeuronKind, SnnGraph, Synapse, Topology,
};

mod common;
use common::dense_oracle;

type Check = Result<(bool, String), String>;

struct Harness {
    failed: Vec<usize>,
}

impl Harness {
    fn criterion(&mut self, id: usize, name: &str, budget_s: f64, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && secs <= budget_s, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let over = if secs > budget_s { " OVER BUDGET" } else { "" };
        println!(
            "{} [{id}] {name} ({secs:.1}s / {budget_s:.0}s{over}): {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failed.push(id);
        }
    }
}

fn e<T: std::fmt::Display>(err: T) -> String {
    err.to_string()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn asymmetry_vs_size() -> Check {
    let reference = [(32, 13.3), (64, 25.1), (128, 39.2), (256, 55.8)];
    let mut ok = true;
    let mut last = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for (n, want) in reference {
        let cfg = corner_params(65, 298.0).map_err(e)?.with_dims(n, n);
        let map = solve_currents(&cfg, &CellStateGrid::all_set(&cfg), 1.0, SolverMode::FullNetwork).map_err(e)?;
        let got = 100.0 * current_asymmetry(&map).fraction;
        ok &= (got - want).abs() <= 8.0 && got > last;
        last = got;
        parts.push(format!("{n}: {got:.1}% (want {want}±8)"));
    }
    Ok((ok, parts.join(", ")))
}

fn calibrated_128() -> Check {
    let cfg = corner_params(65, 298.0).map_err(e)?.with_dims(128, 128);
    let (v, map) = calibrate_drive(&cfg, &CellStateGrid::all_set(&cfg), 200e-6, SolverMode::FullNetwork).map_err(e)?;
    let short = map.i_short();
    let ok = (short / 329e-6 - 1.0).abs() <= 0.10;
    Ok((
        ok,
        format!(
            "V = {v:.3}, longest {:.1} uA, shortest {:.1} uA (want 329 ±10%)",
            map.i_long() * 1e6,
            short * 1e6
        ),
    ))
}

fn endurance_structure() -> Check {
    let cfg = corner_params(65, 298.0).map_err(e)?.with_dims(128, 128);
    let (_, map) = calibrate_drive(&cfg, &CellStateGrid::all_set(&cfg), 200e-6, SolverMode::FullNetwork).map_err(e)?;
    let em = endurance_map(&map, 298.0, &PcmParams::default()).map_err(e)?;
    let vals = em.endurance.as_slice();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (s, l) = (cfg.shortest_path_cell(), cfg.longest_path_cell());
    let at_short = em.at(s.0, s.1);
    let at_long = em.at(l.0, l.1);
    let ok = at_short == lo && at_long == hi && hi / lo >= 1e3;
    Ok((
        ok,
        format!(
            "min {lo:.3e} at shortest corner: {}, max {hi:.3e} at longest corner: {}, ratio {:.2e}, {} sims",
            at_short == lo,
            at_long == hi,
            hi / lo,
            em.unique_simulations
        ),
    ))
}

fn thermal_traces() -> Check {
    let p = PcmParams::default();
    let hot = simulate_peak(329e-6, 298.0, &p).map_err(e)?;
    let cold = simulate_peak(200e-6, 298.0, &p).map_err(e)?;
    let mut ok = hot.t_sh_peak > cold.t_sh_peak && hot.amorphization_time < cold.amorphization_time;
    let half = PcmParams {
        dt_s: p.dt_s / 2.0,
        ..p.clone()
    };
    let mut worst: f64 = 0.0;
    for (i, base) in [(329e-6, &hot), (200e-6, &cold)] {
        let fine = simulate_peak(i, 298.0, &half).map_err(e)?;
        worst = worst.max((fine.t_sh_peak / base.t_sh_peak - 1.0).abs());
    }
    ok &= worst < 0.005;
    Ok((
        ok,
        format!(
            "peak {:.1} K vs {:.1} K, amorphized {:.3} ns vs {:.3} ns, dt halving {:.3}%",
            hot.t_sh_peak,
            cold.t_sh_peak,
            hot.amorphization_time * 1e9,
            cold.amorphization_time * 1e9,
            worst * 100.0
        ),
    ))
}

const SUITE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn suite_clustering(seed: u64) -> Result<Clustering, String> {
    let g = generate(&GeneratorSpec {
        topology: Topology::Feedforward { layers: vec![64, 200] },
        activations: ActivationDist::Zipf { s: 1.1, max: 1000 },
        seed,
    })
    .map_err(e)?;
    partition_workload(&g, (64, 64), &PartitionOptions::default()).map_err(e)
}

fn platform(tiles: usize) -> Result<Platform, String> {
    Platform::calibrated(
        corner_params(65, 298.0).map_err(e)?.with_dims(64, 64),
        &PcmParams::default(),
        200e-6,
        SolverMode::FullNetwork,
        tiles,
        EnergyParams::default(),
        LifetimeMode::Accumulate,
    )
    .map_err(e)
}

fn pso(seed: u64) -> SwarmConfig {
    SwarmConfig {
        seed,
        ..SwarmConfig::default()
    }
}

/// Per-workload (spinemap, spinemap++, espine) lifetimes and spinemap mappings.
struct SuiteRuns {
    lifetimes: Vec<[f64; 3]>,
    spinemap_mappings: Vec<Vec<usize>>,
}

fn strategy_ordering(clusterings: &[Clustering], out: &mut Option<SuiteRuns>) -> Check {
    let p = platform(4).map_err(e)?;
    let mut lifetimes = Vec::new();
    let mut mappings = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, seed) in clusterings.iter().zip(SUITE_SEEDS) {
        let mut l = [0.0; 3];
        for (k, s) in Strategy::ALL.into_iter().enumerate() {
            let r = run_strategy(&p, c, s, &pso(seed)).map_err(e)?;
            l[k] = r.lifetime.min_lifetime;
            if s == Strategy::Spinemap {
                mappings.push(r.mapping.assignment.clone());
            }
        }
        ok &= l[2] >= l[1] && l[1] >= l[0];
        parts.push(format!("w{seed} {:.1}/{:.1}/{:.1}", l[0], l[1], l[2]));
        lifetimes.push(l);
    }
    let ratio = median(lifetimes.iter().map(|l| l[2] / l[0]).collect());
    ok &= ratio >= 1.5;
    *out = Some(SuiteRuns {
        lifetimes,
        spinemap_mappings: mappings,
    });
    Ok((
        ok,
        format!("spinemap/spinemap++/espine {}; median espine/spinemap {ratio:.2} (want >= 1.5)", parts.join(", ")),
    ))
}

fn iteration_scaling(clustering: &Clustering) -> Check {
    let p = platform(4).map_err(e)?;
    let mut last = (f64::NEG_INFINITY, 0.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for iterations in [1, 10, 100] {
        let cfg = SwarmConfig {
            iterations,
            ..pso(1)
        };
        let r = run_strategy(&p, clustering, Strategy::Espine, &cfg).map_err(e)?;
        let best = r.swarm.best_evaluation.min_lifetime;
        ok &= best >= last.0 && r.elapsed_s > last.1;
        last = (best, r.elapsed_s);
        parts.push(format!("{iterations}: {best:.2} in {:.2}s", r.elapsed_s));
    }
    Ok((ok, parts.join(", ")))
}

fn resource_scaling(clusterings: &[Clustering], four: Option<&SuiteRuns>) -> Check {
    let four = four.ok_or("strategy ordering run unavailable")?;
    let mut medians = vec![(4, median(four.lifetimes.iter().map(|l| l[2] / l[0]).collect()))];
    for tiles in [16, 32] {
        let p = platform(tiles).map_err(e)?;
        let mut ratios = Vec::new();
        for (c, seed) in clusterings.iter().zip(SUITE_SEEDS) {
            let base = run_strategy(&p, c, Strategy::Spinemap, &pso(seed)).map_err(e)?;
            let best = run_strategy(&p, c, Strategy::Espine, &pso(seed)).map_err(e)?;
            ratios.push(best.lifetime.min_lifetime / base.lifetime.min_lifetime);
        }
        medians.push((tiles, median(ratios)));
    }
    let ok = medians.windows(2).all(|w| w[1].1 >= w[0].1);
    let parts: Vec<String> = medians.iter().map(|(t, r)| format!("{t} tiles {r:.2}x")).collect();
    Ok((ok, format!("median espine/spinemap {}", parts.join(", "))))
}

fn random_graph(n: u32, p: f64, seed: u64) -> SnnGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = SnnGraph {
        neurons: (0..n).map(|id| Neuron { id, kind: NeuronKind::Hidden }).collect(),
        synapses: Vec::new(),
    };
    for pre in 0..n {
        for post in 0..n {
            if pre != post && rng.random_bool(p) {
                g.synapses.push(Synapse {
                    pre,
                    post,
                    weight: 0.0,
                    activations: rng.random_range(1..20),
                });
            }
        }
    }
    g
}

fn cut(g: &SnnGraph, b: &BTreeSet<u32>) -> u64 {
    g.synapses
        .iter()
        .filter(|s| b.contains(&s.pre) != b.contains(&s.post))
        .map(|s| s.activations)
        .sum()
}

fn oracles() -> Check {
    let mut parts = Vec::new();

    let cfg = corner_params(65, 298.0).map_err(e)?.with_dims(2, 2);
    let states = CellStateGrid::all_set(&cfg);
    let map = solve_currents(&cfg, &states, 1.3, SolverMode::FullNetwork).map_err(e)?;
    let oracle = dense_oracle(&cfg, states.grid(), 1.3);
    let circuit_err = map
        .currents
        .iter()
        .map(|(i, j, v)| ((v - oracle[i][j]) / oracle[i][j]).abs())
        .fold(0.0, f64::max);
    let a = circuit_err <= 1e-9;
    parts.push(format!("(a) 2x2 rel err {circuit_err:.1e}"));

    let mut kl_hits = 0;
    for seed in 0..20u64 {
        let g = random_graph(8, 0.4, 500 + seed);
        let p = kl_bipartition(&g, 0.1, seed).map_err(e)?;
        let best = (0u32..256)
            .filter(|m| m.count_ones() == 4 && m & 1 == 0)
            .map(|m| cut(&g, &(0..8).filter(|i| m >> i & 1 == 1).collect()))
            .min()
            .unwrap();
        kl_hits += usize::from(p.a.len() == 4 && p.cut_cost == best);
    }
    let b = kl_hits == 20;
    parts.push(format!("(b) KL optimal {kl_hits}/20"));

    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let table: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.random_range(1.0..100.0), rng.random_range(1.0..1e6)))
        .collect();
    let ev = FnEvaluator(|m: &Mapping| {
        let (en, life) = table[m.assignment[0] * 2 + m.assignment[1]];
        Ok::<_, Infallible>(Evaluation::feasible(en, life))
    });
    let mut c = true;
    for fitness in [Fitness::Lifetime, Fitness::Energy] {
        let want = table
            .iter()
            .map(|&(en, life)| Evaluation::feasible(en, life).score(fitness))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut hits = 0;
        for seed in 0..20 {
            let cfg = SwarmConfig {
                particles: 10,
                seed,
                fitness,
                ..SwarmConfig::default()
            };
            hits += usize::from(run(&cfg, 2, 2, &ev).map_err(e)?.best_score == want);
        }
        c &= hits >= 19;
        parts.push(format!("(c) PSO {fitness:?} {hits}/20"));
    }

    let mut d = true;
    for round in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(round);
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.random_range(0..30) as f64, rng.random_range(0..30) as f64))
            .collect();
        let dominated = |p: (f64, f64), q: (f64, f64)| q.0 <= p.0 && q.1 >= p.1 && (q.0 < p.0 || q.1 > p.1);
        let oracle: BTreeSet<usize> = (0..pts.len())
            .filter(|&i| !pts.iter().any(|&q| dominated(pts[i], q)))
            .collect();
        let front: BTreeSet<usize> = pareto_front(&pts).iter().map(|p| p.index).collect();
        d &= front == oracle;
    }
    parts.push(format!("(d) Pareto front matches: {d}"));

    Ok((a && b && c && d, parts.join(", ")))
}

fn energy_accounting(clusterings: &[Clustering], suite: Option<&SuiteRuns>) -> Check {
    let suite = suite.ok_or("strategy ordering run unavailable")?;
    let params = EnergyParams::default();
    let p = platform(4).map_err(e)?;
    let mut parts = Vec::new();

    let g = SnnGraph {
        neurons: (0..2).map(|id| Neuron { id, kind: NeuronKind::Hidden }).collect(),
        synapses: vec![Synapse {
            pre: 0,
            post: 1,
            weight: 0.0,
            activations: 1000,
        }],
    };
    let tiny = partition_workload(&g, (4, 4), &PartitionOptions::default()).map_err(e)?;
    let dynamic = energy::dynamic_energy(&tiny, &params);
    let spikes = (dynamic - 50e-9).abs() <= 1e-12 * 50e-9;
    parts.push(format!("1000 spikes {:.3} nJ", dynamic * 1e9));

    let mut sums = true;
    let mut single = true;
    let mut sorted_lower = true;
    let mut ratios = Vec::new();
    for (c, mapping) in clusterings.iter().zip(&suite.spinemap_mappings) {
        single &= energy::comm_energy(&vec![0; c.len()], 1, c, &params).map_err(e)? == 0.0;
        let (_, arbitrary) = p.assess(c, mapping, Strategy::Spinemap, 0).map_err(e)?;
        let (_, sorted) = p.assess(c, mapping, Strategy::SpinemapPlusPlus, 0).map_err(e)?;
        for r in [&arbitrary, &sorted] {
            sums &= r.total_j == r.dynamic_j + r.comm_j + r.static_j;
        }
        sorted_lower &= sorted.static_j < arbitrary.static_j;
        ratios.push(sorted.static_j / arbitrary.static_j);
    }
    parts.push(format!("components sum exactly: {sums}"));
    parts.push(format!("single-tile comm zero: {single}"));
    parts.push(format!(
        "sorted/arbitrary static {}",
        ratios.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>().join("/")
    ));
    Ok((spikes && sums && single && sorted_lower, parts.join(", ")))
}

fn main() {
    let mut h = Harness { failed: Vec::new() };
    h.criterion(1, "current asymmetry vs crossbar size", 600.0, asymmetry_vs_size);
    h.criterion(2, "calibrated 128x128 currents", 60.0, calibrated_128);
    h.criterion(3, "endurance map structure", 120.0, endurance_structure);
    h.criterion(4, "thermal traces", 10.0, thermal_traces);

    let clusterings: Result<Vec<Clustering>, String> = SUITE_SEEDS.iter().map(|&s| suite_clustering(s)).collect();
    let clusterings = match clusterings {
        Ok(c) => c,
        Err(err) => {
            println!("FAIL workload suite: {err}");
            std::process::exit(1);
        }
    };
    let mut suite = None;
    h.criterion(5, "strategy ordering", 300.0, || strategy_ordering(&clusterings, &mut suite));
    h.criterion(6, "iteration scaling", 300.0, || iteration_scaling(&clusterings[0]));
    h.criterion(7, "resource scaling", 600.0, || resource_scaling(&clusterings, suite.as_ref()));
    h.criterion(8, "oracle equivalences", 60.0, oracles);
    h.criterion(9, "energy accounting", 60.0, || energy_accounting(&clusterings, suite.as_ref()));

    if h.failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: failed {:?}", h.failed);
        std::process::exit(1);
    }
}
