//! Deterministic tick loop.
//!
//! Phase order within a tick (changing it is a breaking change):
//!
//! 1. mobility for alive phones, ascending id;
//! 2. link maintenance: mesh rebuilds the unit-disk graph, SOS drops
//!    out-of-range links and relabels the pieces;
//! 3. traffic generation;
//! 4. send/retry pass, with SOS reconfiguration on routing failure;
//! 5. idle drain (deaths strip links and relabel immediately);
//! 6. invariant checks (optional) and the snapshot on cadence ticks.
//!
//! SOS builds its initial forest before the tick-0 snapshot. The mesh
//! forms its first links in tick 1.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::energy::{charge, initial_batteries, Action, BatteryDistribution, EnergyCostTable, EnergyLedger};
use crate::error::{Result, SimError};
use crate::metrics::{betweenness, gini, participation};
use crate::mesh::mesh_update;
use crate::mobility::move_all;
use crate::rng::{rng_streams, SimRng};
use crate::sos;
use crate::traffic::{attempt_all, DeliveryReport, MessageStatus, TrafficGenerator};
use crate::world::{PhoneId, Position, Snapshot, World, WorldConfig};

/// Snapshot cadence in simulated minutes.
pub const SNAPSHOT_MINUTES: f64 = 15.0;

/// Relative tolerance of the energy accounting identity.
pub const LEDGER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Mesh,
    Sos,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Mesh => "mesh",
            Protocol::Sos => "sos",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mesh" => Ok(Protocol::Mesh),
            "sos" => Ok(Protocol::Sos),
            other => Err(SimError::InvalidConfig(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Which snapshots carry per-phone betweenness.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BetweennessPlan {
    #[default]
    Off,
    Every,
    AtTicks(Vec<u64>),
}

impl BetweennessPlan {
    fn wants(&self, tick: u64) -> bool {
        match self {
            BetweennessPlan::Off => false,
            BetweennessPlan::Every => true,
            BetweennessPlan::AtTicks(ticks) => ticks.contains(&tick),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    /// Full structural checks after every tick.
    pub check_invariants: bool,
    pub betweenness: BetweennessPlan,
    pub record_messages: bool,
    /// Dump the edge list every this many ticks (and at tick 0).
    pub dump_edges_every: Option<u64>,
    pub battery: BatteryDistribution,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub protocol: Protocol,
    pub cfg: WorldConfig,
    pub costs: EnergyCostTable,
    pub snapshots: Vec<Snapshot>,
    pub report: DeliveryReport,
    pub ledger: EnergyLedger,
    pub initial_positions: Vec<Position>,
    pub initial_batteries: Vec<f64>,
    /// Degrees right after initialization (the SOS bootstrap forest).
    pub initial_degrees: Vec<usize>,
    pub first_death_tick: Option<u64>,
    pub edge_dumps: Vec<(u64, Vec<(PhoneId, PhoneId)>)>,
    /// Number of ticks on which the full invariant suite ran.
    pub invariant_checks: u64,
    pub max_ledger_residual: f64,
}

impl RunResult {
    /// `(hour, alive fraction)` per snapshot.
    pub fn alive_series(&self) -> Vec<(f64, f64)> {
        self.snapshots.iter().map(|s| (s.hour, s.participation_alive)).collect()
    }

    pub fn snapshot_at_hour(&self, hour: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.hour - hour).abs() < 1e-9)
    }
}

pub struct Engine {
    world: World,
    protocol: Protocol,
    opts: RunOptions,
    mobility: Vec<SimRng>,
    traffic: TrafficGenerator,
    report: DeliveryReport,
    tick: u64,
    snapshot_every: u64,
    snapshots: Vec<Snapshot>,
    initial_positions: Vec<Position>,
    initial_batteries: Vec<f64>,
    initial_degrees: Vec<usize>,
    first_death_tick: Option<u64>,
    edge_dumps: Vec<(u64, Vec<(PhoneId, PhoneId)>)>,
    invariant_checks: u64,
    max_ledger_residual: f64,
}

impl Engine {
    /// Places phones, draws batteries, bootstraps SOS and takes the tick-0
    /// snapshot.
    pub fn new(cfg: WorldConfig, costs: EnergyCostTable, protocol: Protocol, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        costs.validate()?;
        opts.battery.validate()?;
        let mut streams = rng_streams(cfg.seed, cfg.n_phones);
        let positions: Vec<Position> = (0..cfg.n_phones)
            .map(|_| {
                let x = streams.placement.random_range(0.0..cfg.width);
                let y = streams.placement.random_range(0.0..cfg.height);
                cfg.wrap(x, y)
            })
            .collect();
        let batteries = initial_batteries(cfg.n_phones, &opts.battery, &mut streams.batteries);
        let traffic = TrafficGenerator::new(&cfg, &mut streams.offsets, streams.traffic);
        let snapshot_every = ((SNAPSHOT_MINUTES / cfg.tick_minutes).round() as u64).max(1);

        let mut world = World::from_parts(cfg, costs, positions.clone(), batteries.clone());
        if protocol == Protocol::Sos {
            sos::bootstrap(&mut world)?;
        }
        let initial_degrees = (0..world.n()).map(|i| world.graph.degree(PhoneId::from(i))).collect();
        let report = if opts.record_messages {
            DeliveryReport::recording()
        } else {
            DeliveryReport::default()
        };

        let mut engine = Engine {
            world,
            protocol,
            opts,
            mobility: streams.mobility,
            traffic,
            report,
            tick: 0,
            snapshot_every,
            snapshots: Vec::new(),
            initial_positions: positions,
            initial_batteries: batteries,
            initial_degrees,
            first_death_tick: None,
            edge_dumps: Vec::new(),
            invariant_checks: 0,
            max_ledger_residual: 0.0,
        };
        engine.note_deaths();
        engine.end_of_tick()?;
        Ok(engine)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.world.cfg.horizon_ticks
    }

    /// Executes the next tick.
    pub fn step(&mut self) -> Result<()> {
        self.tick += 1;
        let tick = self.tick;

        move_all(&mut self.world, &mut self.mobility);

        match self.protocol {
            Protocol::Mesh => {
                mesh_update(&mut self.world)?;
            }
            Protocol::Sos => {
                sos::drop_out_of_range(&mut self.world);
            }
        }

        let fresh = self.traffic.generate(tick, &self.world);
        attempt_all(&mut self.world, tick, self.protocol, fresh, &mut self.report)?;

        for i in 0..self.world.n() {
            let p = PhoneId::from(i);
            if self.world.is_alive(p) {
                charge(&mut self.world, p, Action::Idle)?;
            }
        }
        self.note_deaths();
        self.end_of_tick()
    }

    fn note_deaths(&mut self) {
        if self.first_death_tick.is_none() && self.world.phones.iter().any(|p| !p.alive) {
            self.first_death_tick = Some(self.tick);
        }
    }

    fn end_of_tick(&mut self) -> Result<()> {
        let tick = self.tick;
        if self.opts.check_invariants {
            check_invariants(&self.world, self.protocol, tick)?;
            self.invariant_checks += 1;
        }
        let horizon = self.world.cfg.horizon_ticks;
        if tick.is_multiple_of(self.snapshot_every) || tick == horizon {
            let residual = self.ledger_residual();
            self.max_ledger_residual = self.max_ledger_residual.max(residual);
            if residual > LEDGER_TOLERANCE {
                return Err(SimError::Invariant {
                    tick,
                    what: format!("energy ledger residual {residual:e}"),
                });
            }
            let snap = self.snapshot();
            self.snapshots.push(snap);
        }
        if let Some(every) = self.opts.dump_edges_every {
            if every > 0 && tick.is_multiple_of(every) {
                self.edge_dumps.push((tick, self.world.graph.edges()));
            }
        }
        Ok(())
    }

    fn ledger_residual(&self) -> f64 {
        let remaining: f64 = self.world.phones.iter().map(|p| p.battery).sum();
        self.world.ledger.relative_residual(remaining)
    }

    fn snapshot(&self) -> Snapshot {
        let w = &self.world;
        let (alive, connected) = participation(w);
        let alive_batteries: Vec<f64> = w.phones.iter().filter(|p| p.alive).map(|p| p.battery).collect();
        let n_alive = alive_batteries.len();
        let betweenness = self.opts.betweenness.wants(self.tick).then(|| {
            let bc = betweenness(&w.graph, n_alive);
            w.phones
                .iter()
                .filter(|p| p.alive)
                .map(|p| (p.id, p.battery, bc[p.id.idx()]))
                .collect()
        });
        Snapshot {
            tick: self.tick,
            hour: w.cfg.hours(self.tick),
            participation_alive: alive,
            participation_connected: connected,
            gini_alive: gini(&alive_batteries),
            mean_battery: w.phones.iter().map(|p| p.battery).sum::<f64>() / w.n() as f64,
            n_edges: w.graph.n_edges(),
            n_components: w.n_components_alive(),
            msgs_delivered: self.report.delivered,
            msgs_pending: self.report.pending,
            msgs_dropped: self.report.dropped,
            betweenness,
        }
    }

    pub fn finish(mut self) -> RunResult {
        if let Some(records) = self.report.records.as_mut() {
            for phone in &self.world.phones {
                records.extend(phone.pending.iter().cloned().map(|mut m| {
                    m.status = MessageStatus::Pending;
                    m
                }));
            }
            records.sort_by_key(|m| m.id);
        }
        RunResult {
            protocol: self.protocol,
            cfg: self.world.cfg.clone(),
            costs: self.world.costs,
            snapshots: self.snapshots,
            report: self.report,
            ledger: self.world.ledger.clone(),
            initial_positions: self.initial_positions,
            initial_batteries: self.initial_batteries,
            initial_degrees: self.initial_degrees,
            first_death_tick: self.first_death_tick,
            edge_dumps: self.edge_dumps,
            invariant_checks: self.invariant_checks,
            max_ledger_residual: self.max_ledger_residual,
        }
    }
}

/// Runs a whole scenario to its horizon.
pub fn run(cfg: WorldConfig, costs: EnergyCostTable, protocol: Protocol, opts: RunOptions) -> Result<RunResult> {
    let mut engine = Engine::new(cfg, costs, protocol, opts)?;
    while !engine.is_done() {
        engine.step()?;
    }
    Ok(engine.finish())
}

/// Structural checks that must hold at the end of every tick.
pub fn check_invariants(world: &World, protocol: Protocol, tick: u64) -> Result<()> {
    let fail = |what: String| Err(SimError::Invariant { tick, what });
    let g = &world.graph;
    if !g.is_symmetric() {
        return fail("link graph is not symmetric".into());
    }
    for p in &world.phones {
        if p.alive != (p.battery > 0.0) {
            return fail(format!("phone {} alive flag disagrees with battery", p.id));
        }
        if !p.alive && g.degree(p.id) > 0 {
            return fail(format!("dead phone {} still has links", p.id));
        }
    }
    for (a, b) in g.edges() {
        if !world.in_range(a, b) {
            return fail(format!("link {a}-{b} exceeds transmission range"));
        }
    }
    match protocol {
        Protocol::Sos => {
            let minima = g.component_minima();
            let components = minima.iter().enumerate().filter(|(i, m)| m.idx() == *i).count();
            if g.n_edges() != world.n() - components || !g.is_forest() {
                return fail("SOS link graph contains a cycle".into());
            }
            for p in &world.phones {
                if p.network_id != minima[p.id.idx()] {
                    return fail(format!(
                        "phone {} has network id {} but component minimum {}",
                        p.id,
                        p.network_id,
                        minima[p.id.idx()]
                    ));
                }
            }
        }
        // The mesh forms its first links in tick 1.
        Protocol::Mesh if tick > 0 => {
            for p in world.alive_ids() {
                if world.neighbors_in_range(p) != g.neighbors(p) {
                    return fail(format!("mesh links at phone {p} differ from the unit-disk graph"));
                }
            }
        }
        Protocol::Mesh => {}
    }
    let remaining: f64 = world.phones.iter().map(|p| p.battery).sum();
    let residual = world.ledger.relative_residual(remaining);
    if residual > LEDGER_TOLERANCE {
        return fail(format!("energy ledger residual {residual:e}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, horizon: u64) -> WorldConfig {
        WorldConfig {
            n_phones: 80,
            horizon_ticks: horizon,
            seed,
            ..Default::default()
        }
    }

    fn checked() -> RunOptions {
        RunOptions {
            check_invariants: true,
            ..Default::default()
        }
    }

    #[test]
    fn protocol_parses() {
        assert_eq!("sos".parse::<Protocol>().unwrap(), Protocol::Sos);
        assert_eq!("mesh".parse::<Protocol>().unwrap(), Protocol::Mesh);
        assert!("star".parse::<Protocol>().is_err());
    }

    #[test]
    fn zero_horizon_has_one_snapshot_and_no_mesh_spend() {
        let r = run(small(1, 0), EnergyCostTable::default(), Protocol::Mesh, checked()).unwrap();
        assert_eq!(r.snapshots.len(), 1);
        assert_eq!(r.ledger.total_spent(), 0.0);
        assert_eq!(r.snapshots[0].participation_alive, 1.0);

        let r = run(small(1, 0), EnergyCostTable::default(), Protocol::Sos, checked()).unwrap();
        assert_eq!(r.snapshots.len(), 1);
        let spent = r.ledger.total_spent();
        assert!(spent > 0.0);
        assert_eq!(spent, r.ledger.total(Action::Beacon) + r.ledger.total(Action::Connect));
    }

    #[test]
    fn snapshot_cadence_includes_final_tick() {
        let r = run(small(2, 100), EnergyCostTable::default(), Protocol::Sos, checked()).unwrap();
        let ticks: Vec<u64> = r.snapshots.iter().map(|s| s.tick).collect();
        assert_eq!(ticks, vec![0, 15, 30, 45, 60, 75, 90, 100]);
    }

    #[test]
    fn same_seed_same_run() {
        for protocol in [Protocol::Mesh, Protocol::Sos] {
            let a = run(small(3, 120), EnergyCostTable::default(), protocol, RunOptions::default()).unwrap();
            let b = run(small(3, 120), EnergyCostTable::default(), protocol, RunOptions::default()).unwrap();
            assert_eq!(a.snapshots, b.snapshots);
            assert_eq!(a.report, b.report);
        }
    }

    #[test]
    fn protocols_share_initial_state() {
        let a = run(small(4, 0), EnergyCostTable::default(), Protocol::Mesh, RunOptions::default()).unwrap();
        let b = run(small(4, 0), EnergyCostTable::default(), Protocol::Sos, RunOptions::default()).unwrap();
        assert_eq!(a.initial_positions, b.initial_positions);
        assert_eq!(a.initial_batteries, b.initial_batteries);
    }

    #[test]
    fn invariants_hold_under_heavy_drain() {
        // Expensive costs so phones die during the run.
        let costs = EnergyCostTable {
            connect: 20.0,
            beacon: 5.0,
            send: 5.0,
            receive: 5.0,
            relay: 10.0,
            idle: 1.0,
        };
        for protocol in [Protocol::Mesh, Protocol::Sos] {
            let r = run(small(5, 600), costs, protocol, checked()).unwrap();
            assert_eq!(r.invariant_checks, 601);
            assert!(r.first_death_tick.is_some());
            let alive: Vec<f64> = r.snapshots.iter().map(|s| s.participation_alive).collect();
            assert!(alive.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn check_detects_cycle() {
        let mut engine = Engine::new(small(6, 10), EnergyCostTable::default(), Protocol::Sos, checked()).unwrap();
        let w = &mut engine.world;
        let (a, b) = w.graph.edges()[0];
        let third = w
            .neighbors_in_range(a)
            .into_iter()
            .find(|&c| c != b && w.in_range(b, c))
            .expect("dense world has a common neighbor");
        w.graph.add_edge(a, third);
        w.graph.add_edge(b, third);
        assert!(matches!(check_invariants(w, Protocol::Sos, 0), Err(SimError::Invariant { .. })));
    }
}
