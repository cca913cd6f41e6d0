//! Grid search over the energy cost table.
//!
//! Runs the default 500-phone, 72 h scenario for both protocols over a few
//! seeds for each candidate cost table and prints the quantities the
//! acceptance suite checks: alive fractions at 24 h, first death times,
//! Gini at 0/10/14/24/72 h and the longevity difference at the two phase
//! diagram corners.
//!
//!     cargo run --release -p sosnet --example calibrate -- [seeds] [--corners]
//!     cargo run --release -p sosnet --example calibrate -- probe c b s r i [seeds] [--corners]

use std::time::Instant;

use sosnet::metrics::longevity;
use sosnet::sweep::map_ordered;
use sosnet::{run, EnergyCostTable, Protocol, RunOptions, RunResult, WorldConfig};

fn gini_at(r: &RunResult, hour: f64) -> f64 {
    r.snapshot_at_hour(hour).map_or(f64::NAN, |s| s.gini_alive)
}

fn alive_at(r: &RunResult, hour: f64) -> f64 {
    r.snapshot_at_hour(hour).map_or(f64::NAN, |s| s.participation_alive)
}

fn first_death_h(r: &RunResult) -> f64 {
    r.first_death_tick.map_or(72.0, |t| t as f64 / 60.0)
}

fn evaluate(costs: EnergyCostTable, seeds: &[u64], corners: bool) {
    let t0 = Instant::now();
    let tasks: Vec<(u64, Protocol)> = seeds
        .iter()
        .flat_map(|&s| [(s, Protocol::Mesh), (s, Protocol::Sos)])
        .collect();
    let results = map_ordered(16, &tasks, |&(seed, protocol)| {
        let cfg = WorldConfig { seed, ..Default::default() };
        run(cfg, costs, protocol, RunOptions::default()).expect("run")
    });
    println!("costs {costs:?}");
    for pair in results.chunks(2) {
        let (mesh, sos) = (&pair[0], &pair[1]);
        let ordered = mesh
            .snapshots
            .iter()
            .zip(&sos.snapshots)
            .filter(|(m, _)| m.hour >= 2.0)
            .all(|(m, s)| s.participation_alive >= m.participation_alive);
        println!(
            "  seed {:>3} | alive24 mesh {:.3} sos {:.3} | death mesh {:5.2}h sos {:5.2}h | \
             gini mesh 0:{:.4} 14:{:.4} 24:{:.4} | sos 0:{:.4} 10:{:.4} 72:{:.4} | sos≥mesh {} | \
             alive72 sos {:.3} | hops sos {:.2} mesh {:.2} | reconf {}",
            mesh.cfg.seed,
            alive_at(mesh, 24.0),
            alive_at(sos, 24.0),
            first_death_h(mesh),
            first_death_h(sos),
            gini_at(mesh, 0.0),
            gini_at(mesh, 14.0),
            gini_at(mesh, 24.0),
            gini_at(sos, 0.0),
            gini_at(sos, 10.0),
            gini_at(sos, 72.0),
            ordered,
            alive_at(sos, 72.0),
            sos.report.mean_hops(),
            mesh.report.mean_hops(),
            sos.report.reconfigurations,
        );
        let spend = |r: &RunResult| {
            sosnet::Action::ALL
                .iter()
                .map(|a| format!("{}={:.0}", a.name(), r.ledger.total(*a)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!("      mesh spend: {}", spend(mesh));
        println!("      sos  spend: {}", spend(sos));
    }
    if corners {
        for (n, m) in [(100, 10), (100, 1), (200, 1), (300, 1), (400, 1), (500, 1), (600, 1), (700, 1), (800, 1)] {
            let tasks: Vec<(u64, Protocol)> = seeds
                .iter()
                .flat_map(|&s| [(s, Protocol::Mesh), (s, Protocol::Sos)])
                .collect();
            let l = map_ordered(16, &tasks, |&(seed, protocol)| {
                let cfg = WorldConfig { seed, n_phones: n, msgs_per_period: m, ..Default::default() };
                let r = run(cfg, costs, protocol, RunOptions::default()).expect("run");
                longevity(&r.alive_series(), 0.5)
            });
            let k = seeds.len() as f64;
            let mesh: f64 = l.iter().step_by(2).sum::<f64>() / k;
            let sos: f64 = l.iter().skip(1).step_by(2).sum::<f64>() / k;
            println!("  corner n={n} m={m}: mesh {mesh:.2}h sos {sos:.2}h diff {:.2}h", sos - mesh);
        }
    }
    println!("  elapsed {:.1}s", t0.elapsed().as_secs_f64());
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) == Some("probe") {
        let v: Vec<f64> = args[1..].iter().filter(|a| !a.starts_with("--")).map(|a| a.parse().expect("number")).collect();
        let costs = EnergyCostTable {
            connect: v[0],
            beacon: v[1],
            send: v[2],
            receive: v[2],
            relay: v[3],
            idle: v[4],
        };
        let seeds: Vec<u64> = (1..=v.get(5).copied().unwrap_or(2.0) as u64).collect();
        evaluate(costs, &seeds, args.iter().any(|a| a == "--corners"));
        return;
    }
    let n_seeds: u64 = args.first().and_then(|a| a.parse().ok()).unwrap_or(3);
    let corners = args.iter().any(|a| a == "--corners");
    let seeds: Vec<u64> = (1..=n_seeds).collect();
    for connect in [0.4, 0.6, 0.8] {
        for relay in [0.05, 0.1, 0.2] {
            for idle in [0.02, 0.05] {
                let costs = EnergyCostTable {
                    connect,
                    relay,
                    idle,
                    ..EnergyCostTable::default()
                };
                evaluate(costs, &seeds, corners);
            }
        }
    }
}
