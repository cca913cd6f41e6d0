//! Message generation, hop-count routing, delivery charging and the
//! per-tick send/retry pass.

use std::collections::VecDeque;

use rand::Rng;

use crate::energy::{charge, Action};
use crate::engine::Protocol;
use crate::error::Result;
use crate::rng::SimRng;
use crate::sos;
use crate::world::{LinkGraph, PhoneId, World, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageStatus {
    Pending,
    Delivered,
    Dropped,
}

impl MessageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageStatus::Pending => "pending",
            MessageStatus::Delivered => "delivered",
            MessageStatus::Dropped => "dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    /// Generation sequence number, unique within a run.
    pub id: u64,
    pub src: PhoneId,
    pub dst: PhoneId,
    pub created_tick: u64,
    pub delivered_tick: Option<u64>,
    pub hops: u32,
    pub status: MessageStatus,
}

/// Periodic traffic source with a fixed random phase per phone.
#[derive(Debug, Clone)]
pub struct TrafficGenerator {
    offsets: Vec<u64>,
    period: u64,
    per_period: u32,
    rng: SimRng,
    next_id: u64,
}

impl TrafficGenerator {
    pub fn new(cfg: &WorldConfig, offsets_rng: &mut SimRng, traffic_rng: SimRng) -> Self {
        let offsets = (0..cfg.n_phones)
            .map(|_| offsets_rng.random_range(0..cfg.msg_period_ticks))
            .collect();
        TrafficGenerator {
            offsets,
            period: cfg.msg_period_ticks,
            per_period: cfg.msgs_per_period,
            rng: traffic_rng,
            next_id: 0,
        }
    }

    pub fn offset(&self, p: PhoneId) -> u64 {
        self.offsets[p.idx()]
    }

    /// Messages created at `tick`: every alive phone whose phase matches
    /// emits `msgs_per_period` messages to uniform destinations among all
    /// other initially present phones.
    pub fn generate(&mut self, tick: u64, world: &World) -> Vec<Message> {
        let n = world.n() as u32;
        let mut out = Vec::new();
        if self.per_period == 0 {
            return out;
        }
        for phone in world.phones.iter().filter(|p| p.alive) {
            if !(tick + self.period - self.offsets[phone.id.idx()] % self.period).is_multiple_of(self.period) {
                continue;
            }
            for _ in 0..self.per_period {
                let mut d = self.rng.random_range(0..n - 1);
                if d >= phone.id.0 {
                    d += 1;
                }
                out.push(Message {
                    id: self.next_id,
                    src: phone.id,
                    dst: PhoneId(d),
                    created_tick: tick,
                    delivered_tick: None,
                    hops: 0,
                    status: MessageStatus::Pending,
                });
                self.next_id += 1;
            }
        }
        out
    }
}

/// Hop-count shortest path by breadth-first search. Neighbors are explored
/// in ascending id and the first discovery of a node fixes its parent, so the
/// returned path is deterministic. `None` if `dst` is unreachable.
pub fn shortest_path(graph: &LinkGraph, src: PhoneId, dst: PhoneId) -> Option<Vec<PhoneId>> {
    if src == dst {
        return Some(vec![src]);
    }
    let n = graph.n_nodes();
    let mut parent: Vec<u32> = vec![u32::MAX; n];
    parent[src.idx()] = src.0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if parent[v.idx()] != u32::MAX {
                continue;
            }
            parent[v.idx()] = u.0;
            if v == dst {
                let mut path = vec![dst];
                let mut cur = dst;
                while cur != src {
                    cur = PhoneId(parent[cur.idx()]);
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(v);
        }
    }
    None
}

/// Route from an alive `src`; `None` if `dst` is dead or unreachable.
pub fn route(world: &World, src: PhoneId, dst: PhoneId) -> Option<Vec<PhoneId>> {
    if !world.is_alive(dst) {
        return None;
    }
    // Canonical labels decide reachability without a search.
    if world.maintain_labels && world.phone(src).network_id != world.phone(dst).network_id {
        return None;
    }
    shortest_path(&world.graph, src, dst)
}

/// Charges a delivery along `path`: `send` at the source, `relay` at each
/// intermediate phone, `receive` at the destination. Charging completes even
/// if a phone on the path runs empty partway.
pub fn deliver(world: &mut World, msg: &mut Message, path: &[PhoneId], tick: u64) -> Result<()> {
    debug_assert!(path.len() >= 2);
    charge(world, path[0], Action::Send)?;
    for &hop in &path[1..path.len() - 1] {
        charge(world, hop, Action::Relay)?;
    }
    charge(world, path[path.len() - 1], Action::Receive)?;
    msg.hops = (path.len() - 1) as u32;
    msg.delivered_tick = Some(tick);
    msg.status = MessageStatus::Delivered;
    Ok(())
}

/// Cumulative delivery statistics for a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeliveryReport {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub pending: u64,
    pub total_hops: u64,
    pub total_latency_ticks: u64,
    pub reconfigurations: u64,
    /// Finished messages (and, after the run, those still pending) when
    /// message recording is enabled.
    pub records: Option<Vec<Message>>,
}

impl DeliveryReport {
    pub fn recording() -> Self {
        DeliveryReport {
            records: Some(Vec::new()),
            ..Default::default()
        }
    }

    pub fn mean_hops(&self) -> f64 {
        if self.delivered == 0 {
            0.0
        } else {
            self.total_hops as f64 / self.delivered as f64
        }
    }

    pub fn mean_latency_ticks(&self) -> f64 {
        if self.delivered == 0 {
            0.0
        } else {
            self.total_latency_ticks as f64 / self.delivered as f64
        }
    }

    fn finish(&mut self, msg: Message) {
        match msg.status {
            MessageStatus::Delivered => {
                self.delivered += 1;
                self.total_hops += msg.hops as u64;
                self.total_latency_ticks += msg.delivered_tick.unwrap_or(msg.created_tick) - msg.created_tick;
            }
            MessageStatus::Dropped => self.dropped += 1,
            MessageStatus::Pending => unreachable!("finished message must not be pending"),
        }
        if let Some(r) = self.records.as_mut() {
            r.push(msg);
        }
    }
}

/// Sends `fresh` plus every queued message in ascending
/// `(created_tick, src, id)` order.
///
/// Messages whose source or destination is dead are dropped without cost.
/// Under SOS a routing failure triggers one reconfiguration of the source
/// per tick, followed by a single retry; anything still unroutable goes back
/// to the source's pending queue.
pub fn attempt_all(
    world: &mut World,
    tick: u64,
    protocol: Protocol,
    fresh: Vec<Message>,
    report: &mut DeliveryReport,
) -> Result<()> {
    report.generated += fresh.len() as u64;
    let mut queue: Vec<Message> = Vec::with_capacity(fresh.len());
    for phone in world.phones.iter_mut() {
        queue.extend(phone.pending.drain(..));
    }
    queue.extend(fresh);
    queue.sort_by_key(|m| (m.created_tick, m.src, m.id));

    let mut reconfigured = vec![false; world.n()];
    for mut msg in queue {
        if !(world.is_alive(msg.src) && world.is_alive(msg.dst)) {
            msg.status = MessageStatus::Dropped;
            report.finish(msg);
            continue;
        }
        let mut path = route(world, msg.src, msg.dst);
        if path.is_none() && protocol == Protocol::Sos && !reconfigured[msg.src.idx()] {
            reconfigured[msg.src.idx()] = true;
            report.reconfigurations += 1;
            sos::reconfigure(world, msg.src)?;
            if !(world.is_alive(msg.src) && world.is_alive(msg.dst)) {
                msg.status = MessageStatus::Dropped;
                report.finish(msg);
                continue;
            }
            path = route(world, msg.src, msg.dst);
        }
        match path {
            Some(path) => {
                deliver(world, &mut msg, &path, tick)?;
                report.finish(msg);
            }
            None => world.phones[msg.src.idx()].pending.push_back(msg),
        }
    }
    report.pending = world.phones.iter().map(|p| p.pending.len() as u64).sum();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyCostTable;
    use crate::rng::{stream, Stream};
    use crate::world::Position;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn costs() -> EnergyCostTable {
        EnergyCostTable {
            connect: 2.0,
            beacon: 0.2,
            send: 1.0,
            receive: 1.0,
            relay: 1.5,
            idle: 0.05,
        }
    }

    fn world_on_line(n: usize, spacing: f64) -> World {
        let positions = (0..n).map(|i| Position { x: 1.0 + i as f64 * spacing, y: 1.0 }).collect();
        World::from_parts(WorldConfig::default(), costs(), positions, vec![100.0; n])
    }

    fn msg(id: u64, src: u32, dst: u32, tick: u64) -> Message {
        Message {
            id,
            src: PhoneId(src),
            dst: PhoneId(dst),
            created_tick: tick,
            delivered_tick: None,
            hops: 0,
            status: MessageStatus::Pending,
        }
    }

    fn generator(cfg: &WorldConfig, seed: u64) -> TrafficGenerator {
        TrafficGenerator::new(cfg, &mut stream(seed, Stream::Offsets), stream(seed, Stream::Traffic))
    }

    #[test]
    fn zero_traffic_generates_nothing() {
        let cfg = WorldConfig { msgs_per_period: 0, n_phones: 10, ..Default::default() };
        let w = world_on_line(10, 1.0);
        let mut g = generator(&cfg, 1);
        assert!((0..100).all(|t| g.generate(t, &w).is_empty()));
    }

    #[test]
    fn one_message_per_phone_per_period() {
        let cfg = WorldConfig::default();
        let positions = (0..500).map(|i| Position { x: (i % 25) as f64, y: (i / 25) as f64 }).collect();
        let w = World::from_parts(cfg.clone(), costs(), positions, vec![100.0; 500]);
        let mut g = generator(&cfg, 42);
        let mut per_phone = vec![0; 500];
        let mut total = 0;
        for t in 1..=15 {
            for m in g.generate(t, &w) {
                assert_ne!(m.src, m.dst);
                per_phone[m.src.idx()] += 1;
                total += 1;
            }
        }
        assert_eq!(total, 500);
        assert!(per_phone.iter().all(|&c| c == 1));
        // Next period repeats the count.
        let next: usize = (16..=30).map(|t| g.generate(t, &w).len()).sum();
        assert_eq!(next, 500);
    }

    #[test]
    fn destinations_are_uniform() {
        let n = 50;
        let cfg = WorldConfig { n_phones: n, msg_period_ticks: 1, msgs_per_period: 1, ..Default::default() };
        let w = world_on_line(n, 0.1);
        let mut g = generator(&cfg, 3);
        // Phone 0's destinations over 100 000 draws spread over 49 others.
        let mut counts = vec![0u64; n];
        let mut draws = 0;
        let mut t = 0;
        while draws < 100_000 {
            t += 1;
            for m in g.generate(t, &w).into_iter().filter(|m| m.src == PhoneId(0)) {
                counts[m.dst.idx()] += 1;
                draws += 1;
            }
        }
        assert_eq!(counts[0], 0);
        let expected = draws as f64 / (n - 1) as f64;
        let chi2: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let critical = ChiSquared::new((n - 2) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
    }

    #[test]
    fn adjacent_route_is_one_hop() {
        let g = LinkGraph::from_edges(2, &[(PhoneId(0), PhoneId(1))]);
        assert_eq!(shortest_path(&g, PhoneId(0), PhoneId(1)).unwrap().len(), 2);
    }

    #[test]
    fn path_graph_route() {
        let g = LinkGraph::from_edges(4, &[(PhoneId(0), PhoneId(1)), (PhoneId(1), PhoneId(2)), (PhoneId(2), PhoneId(3))]);
        let p = shortest_path(&g, PhoneId(0), PhoneId(3)).unwrap();
        assert_eq!(p, vec![PhoneId(0), PhoneId(1), PhoneId(2), PhoneId(3)]);
        assert_eq!(shortest_path(&LinkGraph::new(3), PhoneId(0), PhoneId(2)), None);
    }

    #[test]
    fn bfs_ties_break_to_lower_ids() {
        // 0-1-3 and 0-2-3 are both shortest.
        let g = LinkGraph::from_edges(
            4,
            &[(PhoneId(0), PhoneId(2)), (PhoneId(0), PhoneId(1)), (PhoneId(2), PhoneId(3)), (PhoneId(1), PhoneId(3))],
        );
        assert_eq!(shortest_path(&g, PhoneId(0), PhoneId(3)).unwrap(), vec![PhoneId(0), PhoneId(1), PhoneId(3)]);
    }

    /// Length of the shortest simple path found by exhaustive enumeration.
    fn brute_hops(g: &LinkGraph, src: PhoneId, dst: PhoneId) -> Option<usize> {
        fn dfs(g: &LinkGraph, u: PhoneId, dst: PhoneId, seen: &mut Vec<bool>, depth: usize, best: &mut Option<usize>) {
            if u == dst {
                *best = Some(best.map_or(depth, |b| b.min(depth)));
                return;
            }
            for &v in g.neighbors(u) {
                if !seen[v.idx()] {
                    seen[v.idx()] = true;
                    dfs(g, v, dst, seen, depth + 1, best);
                    seen[v.idx()] = false;
                }
            }
        }
        let mut seen = vec![false; g.n_nodes()];
        seen[src.idx()] = true;
        let mut best = None;
        dfs(g, src, dst, &mut seen, 0, &mut best);
        best
    }

    #[test]
    fn bfs_matches_exhaustive_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let n = 8;
            let mut g = LinkGraph::new(n);
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random_bool(0.3) {
                        g.add_edge(PhoneId::from(a), PhoneId::from(b));
                    }
                }
            }
            for s in 0..n {
                for d in 0..n {
                    let (s, d) = (PhoneId::from(s), PhoneId::from(d));
                    let got = shortest_path(&g, s, d).map(|p| {
                        for w in p.windows(2) {
                            assert!(g.has_edge(w[0], w[1]));
                        }
                        p.len() - 1
                    });
                    assert_eq!(got, brute_hops(&g, s, d));
                }
            }
        }
    }

    #[test]
    fn one_hop_delivery_charges_endpoints_only() {
        let mut w = world_on_line(2, 1.0);
        let mut m = msg(0, 0, 1, 3);
        deliver(&mut w, &mut m, &[PhoneId(0), PhoneId(1)], 5).unwrap();
        assert_eq!(w.phones[0].battery, 99.0);
        assert_eq!(w.phones[1].battery, 99.0);
        assert_eq!(w.ledger.total(Action::Relay), 0.0);
        assert_eq!((m.hops, m.delivered_tick, m.status), (1, Some(5), MessageStatus::Delivered));
    }

    #[test]
    fn four_hop_delivery_charges_three_relays() {
        let mut w = world_on_line(5, 1.0);
        let path: Vec<PhoneId> = (0..5).map(PhoneId).collect();
        let mut m = msg(0, 0, 4, 0);
        let before = w.ledger.total_spent();
        deliver(&mut w, &mut m, &path, 0).unwrap();
        let relayed = (1..4).filter(|&i| w.ledger.spent_by(PhoneId(i), Action::Relay) > 0.0).count();
        assert_eq!(relayed, 3);
        let c = costs();
        let drained = w.ledger.total_spent() - before;
        assert!((drained - (c.send + c.receive + 3.0 * c.relay)).abs() < 1e-12);
    }

    #[test]
    fn delivery_completes_when_a_relay_dies() {
        let mut w = world_on_line(3, 1.0);
        w.phones[1].battery = 1.0;
        for (a, b) in [(0, 1), (1, 2)] {
            w.graph.add_edge(PhoneId(a), PhoneId(b));
        }
        let mut m = msg(0, 0, 2, 0);
        deliver(&mut w, &mut m, &[PhoneId(0), PhoneId(1), PhoneId(2)], 0).unwrap();
        assert_eq!(m.status, MessageStatus::Delivered);
        assert!(!w.phones[1].alive);
        assert_eq!(w.phones[2].battery, 99.0);
    }

    #[test]
    fn dead_destination_is_dropped_for_free() {
        let mut w = world_on_line(3, 1.0);
        w.graph.add_edge(PhoneId(0), PhoneId(1));
        w.kill(PhoneId(2));
        let before = w.ledger.total_spent();
        let mut report = DeliveryReport::recording();
        attempt_all(&mut w, 1, Protocol::Mesh, vec![msg(0, 0, 2, 1)], &mut report).unwrap();
        assert_eq!(report.dropped, 1);
        assert_eq!(w.ledger.total_spent(), before);
    }

    #[test]
    fn sos_isolated_source_reconfigures_and_delivers_same_tick() {
        let mut w = world_on_line(2, 2.0);
        w.maintain_labels = true;
        w.relabel_all();
        let mut report = DeliveryReport::default();
        attempt_all(&mut w, 1, Protocol::Sos, vec![msg(0, 0, 1, 1)], &mut report).unwrap();
        assert_eq!(report.delivered, 1);
        assert_eq!(report.reconfigurations, 1);
        assert_eq!(w.graph.n_edges(), 1);
    }

    #[test]
    fn mesh_failure_stays_pending() {
        let mut w = world_on_line(2, 10.0);
        let mut report = DeliveryReport::default();
        attempt_all(&mut w, 1, Protocol::Mesh, vec![msg(0, 0, 1, 1)], &mut report).unwrap();
        assert_eq!(report.pending, 1);
        assert_eq!(w.phones[0].pending.len(), 1);
        assert_eq!(w.ledger.total_spent(), 0.0);
    }

    #[test]
    fn pending_queue_drains_fifo_after_merge() {
        // Two SOS components out of reach; phone 1 later moves into range.
        let mut w = world_on_line(2, 10.0);
        w.maintain_labels = true;
        w.relabel_all();
        let mut report = DeliveryReport::recording();
        let fresh = vec![msg(0, 0, 1, 1), msg(1, 0, 1, 1)];
        attempt_all(&mut w, 1, Protocol::Sos, fresh, &mut report).unwrap();
        attempt_all(&mut w, 2, Protocol::Sos, vec![msg(2, 0, 1, 2)], &mut report).unwrap();
        assert_eq!(report.pending, 3);
        // Only one reconfiguration per source per tick.
        assert_eq!(report.reconfigurations, 2);
        w.phones[1].pos = Position { x: 3.0, y: 1.0 };
        w.refresh_grid();
        attempt_all(&mut w, 3, Protocol::Sos, vec![], &mut report).unwrap();
        let ids: Vec<u64> = report.records.as_ref().unwrap().iter().map(|m| m.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(report.delivered, 3);
        assert_eq!(report.total_latency_ticks, 2 + 2 + 1);
    }
}
