//! Battery-aware preferential attachment topology.
//!
//! Phones exchange local knowledge (id, battery, network id) with everything
//! in range and link to the highest-battery phone that is not already in
//! their own component. Component labels are the minimum member id, so "not
//! in my component" is a label comparison and the link graph stays a forest.
//!
//! Attachments decided from one round of beacons are executed one at a time
//! in ascending initiator id. Before each link is made the two labels are
//! read again, and the attachment is skipped if an earlier merge in the same
//! batch already joined the two components.

use crate::energy::{charge, Action};
use crate::error::{Result, SimError};
use crate::world::{PhoneId, World};

/// One record of a local-knowledge broadcast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalKnowledge {
    pub phone_id: PhoneId,
    pub battery: f64,
    pub network_id: PhoneId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconfigRequest {
    pub origin: PhoneId,
    /// Origin first, then its direct tree neighbors ascending.
    pub scope: Vec<PhoneId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReconfigOutcome {
    pub beacons: usize,
    pub links: Vec<(PhoneId, PhoneId)>,
}

/// Knowledge of every alive phone in range of `p`. Charges `p` one beacon;
/// the records reflect state before that charge.
pub fn beacon(world: &mut World, p: PhoneId) -> Result<Vec<LocalKnowledge>> {
    let records = world
        .neighbors_in_range(p)
        .into_iter()
        .map(|q| {
            let phone = world.phone(q);
            LocalKnowledge {
                phone_id: q,
                battery: phone.battery,
                network_id: phone.network_id,
            }
        })
        .collect();
    charge(world, p, Action::Beacon)?;
    Ok(records)
}

/// Highest-battery record outside `own_network`, ties to the lower id.
pub fn choose_attachment(own_network: PhoneId, knowledge: &[LocalKnowledge]) -> Option<PhoneId> {
    knowledge
        .iter()
        .filter(|k| k.network_id != own_network)
        .fold(None::<&LocalKnowledge>, |best, k| match best {
            Some(b) if b.battery > k.battery || (b.battery == k.battery && b.phone_id < k.phone_id) => Some(b),
            _ => Some(k),
        })
        .map(|k| k.phone_id)
}

/// Links `a` and `b`, charges both `connect` and gives the merged component
/// the smaller label.
pub fn connect_sos(world: &mut World, a: PhoneId, b: PhoneId) -> Result<()> {
    let la = world.phone(a).network_id;
    let lb = world.phone(b).network_id;
    if la == lb {
        return Err(SimError::WouldCreateCycle(a, b));
    }
    world.graph.add_edge(a, b);
    let (keep, relabel_from) = if la < lb { (la, b) } else { (lb, a) };
    for m in world.graph.component_of(relabel_from) {
        world.phones[m.idx()].network_id = keep;
    }
    charge(world, a, Action::Connect)?;
    charge(world, b, Action::Connect)?;
    Ok(())
}

/// Executes decided attachments in the given order, re-reading labels first.
fn execute_attachments(world: &mut World, decisions: &[(PhoneId, PhoneId)]) -> Result<Vec<(PhoneId, PhoneId)>> {
    let mut made = Vec::new();
    for &(from, to) in decisions {
        if !(world.is_alive(from) && world.is_alive(to)) {
            continue;
        }
        if world.phone(from).network_id == world.phone(to).network_id {
            continue;
        }
        connect_sos(world, from, to)?;
        made.push((from, to));
    }
    Ok(made)
}

/// Beacons from every member of `scope` (ascending) and records each
/// member's attachment choice.
fn beacon_and_decide(world: &mut World, scope: &[PhoneId]) -> Result<(usize, Vec<(PhoneId, PhoneId)>)> {
    let mut beacons = 0;
    let mut decisions = Vec::new();
    for &p in scope {
        if !world.is_alive(p) {
            continue;
        }
        let knowledge = beacon(world, p)?;
        beacons += 1;
        if !world.is_alive(p) {
            continue;
        }
        if let Some(target) = choose_attachment(world.phone(p).network_id, &knowledge) {
            decisions.push((p, target));
        }
    }
    Ok((beacons, decisions))
}

/// Initial forest: rounds of beacon/decide/attach over all alive phones
/// until a round creates no link. Returns the number of rounds run.
pub fn bootstrap(world: &mut World) -> Result<usize> {
    world.maintain_labels = true;
    world.relabel_all();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let everyone: Vec<PhoneId> = world.alive_ids().collect();
        let (_, decisions) = beacon_and_decide(world, &everyone)?;
        let made = execute_attachments(world, &decisions)?;
        if made.is_empty() {
            return Ok(rounds);
        }
    }
}

/// Drops links whose endpoints left each other's range and relabels the
/// affected components. Returns the removed links.
pub fn drop_out_of_range(world: &mut World) -> Vec<(PhoneId, PhoneId)> {
    let broken: Vec<(PhoneId, PhoneId)> = world
        .graph
        .edges()
        .into_iter()
        .filter(|&(a, b)| !(world.is_alive(a) && world.is_alive(b) && world.in_range(a, b)))
        .collect();
    for &(a, b) in &broken {
        world.graph.remove_edge(a, b);
    }
    on_link_break(world, &broken);
    broken
}

/// Relabels every component touched by an already-removed link.
pub fn on_link_break(world: &mut World, broken: &[(PhoneId, PhoneId)]) {
    if broken.is_empty() {
        return;
    }
    let mut seeds: Vec<PhoneId> = broken.iter().flat_map(|&(a, b)| [a, b]).collect();
    seeds.sort_unstable();
    seeds.dedup();
    world.relabel_components(&seeds);
}

pub fn reconfig_scope(world: &World, origin: PhoneId) -> ReconfigRequest {
    let mut scope = vec![origin];
    scope.extend(world.graph.neighbors(origin).iter().copied().filter(|&q| world.is_alive(q)));
    ReconfigRequest { origin, scope }
}

/// Event-driven reconfiguration after a failed routing attempt from
/// `origin`. An isolated origin searches alone; otherwise the origin and its
/// direct tree neighbors beacon and attach, processed in ascending id.
pub fn reconfigure(world: &mut World, origin: PhoneId) -> Result<ReconfigOutcome> {
    let mut scope = reconfig_scope(world, origin).scope;
    scope.sort_unstable();
    let (beacons, decisions) = beacon_and_decide(world, &scope)?;
    let links = execute_attachments(world, &decisions)?;
    Ok(ReconfigOutcome { beacons, links })
}
