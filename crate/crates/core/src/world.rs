//! World geometry, phone state and the link graph shared by every protocol.
//!
//! The world is a `width × height` torus. Phones carry dense ids `0..n`, and
//! every per-phone loop in the crate walks them in ascending id order so that
//! a run is a pure function of its configuration and seed.

use std::collections::VecDeque;
use std::fmt;

use crate::energy::{EnergyCostTable, EnergyLedger};
use crate::error::{Result, SimError};
use crate::traffic::Message;

/// Dense phone identifier assigned at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhoneId(pub u32);

impl PhoneId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for PhoneId {
    fn from(i: usize) -> Self {
        PhoneId(i as u32)
    }
}

impl fmt::Display for PhoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Scenario geometry, population, timing and traffic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub width: f64,
    pub height: f64,
    pub n_phones: usize,
    pub tx_range: f64,
    /// Length units per tick.
    pub speed: f64,
    pub tick_minutes: f64,
    pub horizon_ticks: u64,
    pub msg_period_ticks: u64,
    pub msgs_per_period: u32,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            width: 25.0,
            height: 25.0,
            n_phones: 500,
            tx_range: 5.0,
            speed: 0.1,
            tick_minutes: 1.0,
            horizon_ticks: 72 * 60,
            msg_period_ticks: 15,
            msgs_per_period: 1,
            seed: 42,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("width and height must be positive");
        }
        if self.tx_range.is_nan() || self.tx_range <= 0.0 {
            return bad("tx_range must be positive");
        }
        if self.tx_range >= self.width.min(self.height) / 2.0 {
            return bad("tx_range must be below half the smaller world side");
        }
        if self.n_phones < 2 {
            return bad("at least two phones are required");
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return bad("speed must be a finite non-negative number");
        }
        if self.tick_minutes.is_nan() || self.tick_minutes <= 0.0 {
            return bad("tick_minutes must be positive");
        }
        if self.msg_period_ticks == 0 {
            return bad("msg_period_ticks must be at least 1");
        }
        Ok(())
    }

    pub fn hours(&self, tick: u64) -> f64 {
        tick as f64 * self.tick_minutes / 60.0
    }

    /// Phones per unit area.
    pub fn density(&self) -> f64 {
        self.n_phones as f64 / (self.width * self.height)
    }

    /// Wraps a coordinate pair onto the torus.
    pub fn wrap(&self, x: f64, y: f64) -> Position {
        Position {
            x: wrap_axis(x, self.width),
            y: wrap_axis(y, self.height),
        }
    }
}

fn wrap_axis(v: f64, len: f64) -> f64 {
    let w = v.rem_euclid(len);
    // rem_euclid can round up to `len` for tiny negative inputs.
    if w >= len {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Euclidean distance under the minimal wrap in each axis.
pub fn torus_distance(a: Position, b: Position, cfg: &WorldConfig) -> f64 {
    let dx = (a.x - b.x).abs();
    let dy = (a.y - b.y).abs();
    let dx = dx.min(cfg.width - dx);
    let dy = dy.min(cfg.height - dy);
    dx.hypot(dy)
}

#[derive(Debug, Clone)]
pub struct Phone {
    pub id: PhoneId,
    pub pos: Position,
    pub battery: f64,
    pub alive: bool,
    /// Component label; kept canonical (component minimum) only when the
    /// world maintains labels.
    pub network_id: PhoneId,
    pub pending: VecDeque<Message>,
}

/// Undirected adjacency with per-phone neighbor lists kept sorted ascending.
#[derive(Debug, Clone, Default)]
pub struct LinkGraph {
    adj: Vec<Vec<PhoneId>>,
    n_edges: usize,
}

impl LinkGraph {
    pub fn new(n: usize) -> Self {
        LinkGraph {
            adj: vec![Vec::new(); n],
            n_edges: 0,
        }
    }

    pub fn from_edges(n: usize, edges: &[(PhoneId, PhoneId)]) -> Self {
        let mut g = LinkGraph::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn neighbors(&self, p: PhoneId) -> &[PhoneId] {
        &self.adj[p.idx()]
    }

    pub fn degree(&self, p: PhoneId) -> usize {
        self.adj[p.idx()].len()
    }

    pub fn has_edge(&self, a: PhoneId, b: PhoneId) -> bool {
        self.adj[a.idx()].binary_search(&b).is_ok()
    }

    /// Returns false if the edge already existed. Self-loops are ignored.
    pub fn add_edge(&mut self, a: PhoneId, b: PhoneId) -> bool {
        if a == b {
            return false;
        }
        match self.adj[a.idx()].binary_search(&b) {
            Ok(_) => false,
            Err(i) => {
                self.adj[a.idx()].insert(i, b);
                let j = self.adj[b.idx()].binary_search(&a).unwrap_err();
                self.adj[b.idx()].insert(j, a);
                self.n_edges += 1;
                true
            }
        }
    }

    pub fn remove_edge(&mut self, a: PhoneId, b: PhoneId) -> bool {
        match self.adj[a.idx()].binary_search(&b) {
            Ok(i) => {
                self.adj[a.idx()].remove(i);
                if let Ok(j) = self.adj[b.idx()].binary_search(&a) {
                    self.adj[b.idx()].remove(j);
                }
                self.n_edges -= 1;
                true
            }
            Err(_) => false,
        }
    }

    /// Drops every edge at `p`, returning the former neighbors.
    pub fn isolate(&mut self, p: PhoneId) -> Vec<PhoneId> {
        let old = std::mem::take(&mut self.adj[p.idx()]);
        for &q in &old {
            if let Ok(j) = self.adj[q.idx()].binary_search(&p) {
                self.adj[q.idx()].remove(j);
            }
        }
        self.n_edges -= old.len();
        old
    }

    /// Replaces the neighbor list of `p` wholesale. Callers must keep the
    /// graph symmetric; used by the mesh rebuild.
    pub(crate) fn set_neighbors_unchecked(&mut self, p: PhoneId, list: Vec<PhoneId>) {
        self.adj[p.idx()] = list;
    }

    pub(crate) fn recount_edges(&mut self) {
        self.n_edges = self.adj.iter().map(Vec::len).sum::<usize>() / 2;
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(PhoneId, PhoneId)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for (i, list) in self.adj.iter().enumerate() {
            let a = PhoneId::from(i);
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.adj.iter().enumerate().all(|(i, list)| {
            let a = PhoneId::from(i);
            list.iter().all(|&b| b != a && self.has_edge(b, a))
        })
    }

    /// Component label (minimum member id) for every node, by traversal.
    pub fn component_minima(&self) -> Vec<PhoneId> {
        let n = self.adj.len();
        let mut label: Vec<Option<PhoneId>> = vec![None; n];
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s].is_some() {
                continue;
            }
            // Ascending scan means `s` is the smallest id in its component.
            let root = PhoneId::from(s);
            label[s] = Some(root);
            stack.push(root);
            while let Some(u) = stack.pop() {
                for &v in &self.adj[u.idx()] {
                    if label[v.idx()].is_none() {
                        label[v.idx()] = Some(root);
                        stack.push(v);
                    }
                }
            }
        }
        label.into_iter().map(|l| l.unwrap()).collect()
    }

    /// Members of the component containing `start`, in discovery order.
    pub fn component_of(&self, start: PhoneId) -> Vec<PhoneId> {
        let mut seen = vec![false; self.adj.len()];
        let mut out = vec![start];
        seen[start.idx()] = true;
        let mut head = 0;
        while head < out.len() {
            let u = out[head];
            head += 1;
            for &v in &self.adj[u.idx()] {
                if !seen[v.idx()] {
                    seen[v.idx()] = true;
                    out.push(v);
                }
            }
        }
        out
    }

    /// True when the graph has no cycle, checked by depth-first traversal.
    pub fn is_forest(&self) -> bool {
        let n = self.adj.len();
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut seen = vec![false; n];
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &v in &self.adj[u] {
                    let v = v.idx();
                    if parent[u] == Some(v) {
                        continue;
                    }
                    if seen[v] {
                        return false;
                    }
                    seen[v] = true;
                    parent[v] = Some(u);
                    stack.push(v);
                }
            }
        }
        true
    }
}

/// Uniform bucket grid over the torus with cells at least `tx_range` wide,
/// so every in-range pair lies in the same or an adjacent cell.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    cells: Vec<Vec<PhoneId>>,
}

impl SpatialGrid {
    pub fn new(cfg: &WorldConfig) -> Self {
        let nx = ((cfg.width / cfg.tx_range).floor() as usize).max(1);
        let ny = ((cfg.height / cfg.tx_range).floor() as usize).max(1);
        SpatialGrid {
            nx,
            ny,
            cell_w: cfg.width / nx as f64,
            cell_h: cfg.height / ny as f64,
            cells: vec![Vec::new(); nx * ny],
        }
    }

    fn cell_of(&self, pos: Position) -> (usize, usize) {
        let cx = ((pos.x / self.cell_w) as usize).min(self.nx - 1);
        let cy = ((pos.y / self.cell_h) as usize).min(self.ny - 1);
        (cx, cy)
    }

    /// Rebuilds the buckets from the alive phones. Buckets stay in ascending id order.
    pub fn rebuild(&mut self, phones: &[Phone]) {
        for c in &mut self.cells {
            c.clear();
        }
        for p in phones.iter().filter(|p| p.alive) {
            let (cx, cy) = self.cell_of(p.pos);
            self.cells[cy * self.nx + cx].push(p.id);
        }
    }

    fn neighbor_cells(&self, pos: Position) -> Vec<usize> {
        let (cx, cy) = self.cell_of(pos);
        let mut out = Vec::with_capacity(9);
        for dy in [self.ny - 1, 0, 1] {
            for dx in [self.nx - 1, 0, 1] {
                let c = ((cy + dy) % self.ny) * self.nx + (cx + dx) % self.nx;
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Candidate phones near `pos` (superset of those in range), unsorted.
    pub fn candidates(&self, pos: Position) -> impl Iterator<Item = PhoneId> + '_ {
        self.neighbor_cells(pos)
            .into_iter()
            .flat_map(move |c| self.cells[c].iter().copied())
    }
}

/// Full simulation state for one run.
#[derive(Debug, Clone)]
pub struct World {
    pub cfg: WorldConfig,
    pub costs: EnergyCostTable,
    pub phones: Vec<Phone>,
    pub graph: LinkGraph,
    pub ledger: EnergyLedger,
    /// When set, `network_id` is kept equal to the component minimum.
    pub maintain_labels: bool,
    grid: SpatialGrid,
}

impl World {
    /// Builds a world from explicit positions and batteries.
    pub fn from_parts(
        cfg: WorldConfig,
        costs: EnergyCostTable,
        positions: Vec<Position>,
        batteries: Vec<f64>,
    ) -> Self {
        assert_eq!(positions.len(), batteries.len());
        let phones: Vec<Phone> = positions
            .into_iter()
            .zip(batteries)
            .enumerate()
            .map(|(i, (pos, battery))| Phone {
                id: PhoneId::from(i),
                pos: cfg.wrap(pos.x, pos.y),
                battery,
                alive: battery > 0.0,
                network_id: PhoneId::from(i),
                pending: VecDeque::new(),
            })
            .collect();
        let n = phones.len();
        let ledger = EnergyLedger::new(phones.iter().map(|p| p.battery));
        let mut grid = SpatialGrid::new(&cfg);
        grid.rebuild(&phones);
        World {
            cfg,
            costs,
            phones,
            graph: LinkGraph::new(n),
            ledger,
            maintain_labels: false,
            grid,
        }
    }

    pub fn n(&self) -> usize {
        self.phones.len()
    }

    pub fn phone(&self, p: PhoneId) -> &Phone {
        &self.phones[p.idx()]
    }

    pub fn is_alive(&self, p: PhoneId) -> bool {
        self.phones[p.idx()].alive
    }

    pub fn distance(&self, a: PhoneId, b: PhoneId) -> f64 {
        torus_distance(self.phones[a.idx()].pos, self.phones[b.idx()].pos, &self.cfg)
    }

    pub fn in_range(&self, a: PhoneId, b: PhoneId) -> bool {
        self.distance(a, b) <= self.cfg.tx_range
    }

    /// Must be called after positions or the alive set change.
    pub fn refresh_grid(&mut self) {
        self.grid.rebuild(&self.phones);
    }

    /// Alive phones `q != p` within transmission range (inclusive), ascending.
    pub fn neighbors_in_range(&self, p: PhoneId) -> Vec<PhoneId> {
        let pos = self.phones[p.idx()].pos;
        let mut out: Vec<PhoneId> = self
            .grid
            .candidates(pos)
            .filter(|&q| {
                q != p
                    && self.phones[q.idx()].alive
                    && torus_distance(pos, self.phones[q.idx()].pos, &self.cfg) <= self.cfg.tx_range
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn alive_ids(&self) -> impl Iterator<Item = PhoneId> + '_ {
        self.phones.iter().filter(|p| p.alive).map(|p| p.id)
    }

    pub fn n_alive(&self) -> usize {
        self.phones.iter().filter(|p| p.alive).count()
    }

    /// Marks `p` dead, drops its links and, when labels are maintained,
    /// relabels the components it leaves behind.
    pub(crate) fn kill(&mut self, p: PhoneId) {
        let phone = &mut self.phones[p.idx()];
        phone.alive = false;
        phone.battery = 0.0;
        phone.network_id = p;
        let former = self.graph.isolate(p);
        if self.maintain_labels {
            self.relabel_components(&former);
        }
    }

    /// Sets `network_id` to the component minimum for every component
    /// containing one of `seeds`.
    pub fn relabel_components(&mut self, seeds: &[PhoneId]) {
        let mut done: Vec<PhoneId> = Vec::new();
        for &s in seeds {
            if done.contains(&s) {
                continue;
            }
            let members = self.graph.component_of(s);
            let min = *members.iter().min().unwrap();
            for &m in &members {
                self.phones[m.idx()].network_id = min;
            }
            done.extend(members.iter().filter(|m| seeds.contains(m)));
        }
    }

    /// Recomputes every label from scratch.
    pub fn relabel_all(&mut self) {
        let minima = self.graph.component_minima();
        for (phone, label) in self.phones.iter_mut().zip(minima) {
            phone.network_id = label;
        }
    }

    pub fn n_components_alive(&self) -> usize {
        let minima = self.graph.component_minima();
        self.phones
            .iter()
            .filter(|p| p.alive && minima[p.id.idx()] == p.id)
            .count()
    }
}

/// Metrics captured at one snapshot tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tick: u64,
    pub hour: f64,
    pub participation_alive: f64,
    pub participation_connected: f64,
    pub gini_alive: f64,
    /// Mean remaining charge over all phones, dead ones counted as zero.
    pub mean_battery: f64,
    pub n_edges: usize,
    pub n_components: usize,
    pub msgs_delivered: u64,
    pub msgs_pending: u64,
    pub msgs_dropped: u64,
    /// `(phone, battery, betweenness)` for alive phones when requested.
    pub betweenness: Option<Vec<(PhoneId, f64, f64)>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    fn pos(x: f64, y: f64) -> Position {
        Position { x, y }
    }

    /// Minimum over the nine wrap images.
    fn brute_distance(a: Position, b: Position, c: &WorldConfig) -> f64 {
        let mut best = f64::INFINITY;
        for ox in [-1.0, 0.0, 1.0] {
            for oy in [-1.0, 0.0, 1.0] {
                let d = (a.x - (b.x + ox * c.width)).hypot(a.y - (b.y + oy * c.height));
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn torus_distance_examples() {
        let c = cfg();
        assert_eq!(torus_distance(pos(3.0, 3.0), pos(3.0, 3.0), &c), 0.0);
        assert!((torus_distance(pos(0.0, 0.0), pos(24.0, 0.0), &c) - 1.0).abs() < 1e-12);
        let d = torus_distance(pos(1.0, 2.0), pos(20.0, 22.0), &c);
        let oracle = brute_distance(pos(1.0, 2.0), pos(20.0, 22.0), &c);
        assert!((oracle - 61f64.sqrt()).abs() < 1e-12);
        assert!((d - 7.810249675906654).abs() < 1e-12);
    }

    #[test]
    fn wrap_handles_negative_and_overflow() {
        let c = cfg();
        let p = c.wrap(-0.5, 25.5);
        assert!((p.x - 24.5).abs() < 1e-12 && (p.y - 0.5).abs() < 1e-12);
        let p = c.wrap(-1e-300, 0.0);
        assert!(p.x >= 0.0 && p.x < 25.0);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.tx_range = 12.5;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.n_phones = 1;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.width = 0.0;
        assert!(c.validate().is_err());
    }

    fn world_with(positions: Vec<Position>) -> World {
        let n = positions.len();
        World::from_parts(cfg(), EnergyCostTable::default(), positions, vec![100.0; n])
    }

    #[test]
    fn single_phone_has_no_neighbors() {
        let w = world_with(vec![pos(1.0, 1.0)]);
        assert!(w.neighbors_in_range(PhoneId(0)).is_empty());
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let w = world_with(vec![pos(1.0, 1.0), pos(6.0, 1.0)]);
        assert_eq!(w.neighbors_in_range(PhoneId(0)), vec![PhoneId(1)]);
        assert_eq!(w.neighbors_in_range(PhoneId(1)), vec![PhoneId(0)]);
    }

    #[test]
    fn neighbors_match_all_pairs_filter() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let positions: Vec<Position> = (0..20)
                .map(|_| pos(rng.random_range(0.0..25.0), rng.random_range(0.0..25.0)))
                .collect();
            let w = world_with(positions.clone());
            for i in 0..20 {
                let expected: Vec<PhoneId> = (0..20)
                    .filter(|&j| j != i && brute_distance(positions[i], positions[j], &c) <= c.tx_range)
                    .map(PhoneId::from)
                    .collect();
                assert_eq!(w.neighbors_in_range(PhoneId::from(i)), expected);
            }
        }
    }

    #[test]
    fn dead_phones_are_not_neighbors() {
        let mut w = world_with(vec![pos(1.0, 1.0), pos(2.0, 1.0), pos(3.0, 1.0)]);
        w.kill(PhoneId(1));
        w.refresh_grid();
        assert_eq!(w.neighbors_in_range(PhoneId(0)), vec![PhoneId(2)]);
    }

    #[test]
    fn link_graph_basics() {
        let mut g = LinkGraph::new(4);
        assert!(g.add_edge(PhoneId(0), PhoneId(2)));
        assert!(!g.add_edge(PhoneId(2), PhoneId(0)));
        assert!(!g.add_edge(PhoneId(1), PhoneId(1)));
        g.add_edge(PhoneId(2), PhoneId(3));
        assert_eq!(g.n_edges(), 2);
        assert!(g.is_symmetric());
        assert!(g.is_forest());
        g.add_edge(PhoneId(0), PhoneId(3));
        assert!(!g.is_forest());
        assert_eq!(g.isolate(PhoneId(3)), vec![PhoneId(0), PhoneId(2)]);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(
            g.component_minima(),
            vec![PhoneId(0), PhoneId(1), PhoneId(0), PhoneId(3)]
        );
    }

    #[test]
    fn small_world_grid_deduplicates_cells() {
        let c = WorldConfig {
            width: 10.0,
            height: 10.0,
            tx_range: 4.0,
            ..cfg()
        };
        let w = World::from_parts(
            c,
            EnergyCostTable::default(),
            vec![pos(0.5, 0.5), pos(9.5, 9.5)],
            vec![1.0, 1.0],
        );
        assert_eq!(w.neighbors_in_range(PhoneId(0)), vec![PhoneId(1)]);
    }
}
