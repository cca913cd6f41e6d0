//! Generic mesh topology: every alive pair in mutual range is linked.

use crate::energy::{charge, Action};
use crate::error::Result;
use crate::world::{PhoneId, World};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkChanges {
    pub removed: Vec<(PhoneId, PhoneId)>,
    pub created: Vec<(PhoneId, PhoneId)>,
}

/// Rebuilds the link graph as the unit-disk graph of alive phones. Dropping
/// links is free; each new link charges both endpoints `connect`. A phone
/// that dies while connecting keeps no links.
pub fn mesh_update(world: &mut World) -> Result<LinkChanges> {
    let n = world.n();
    let mut changes = LinkChanges::default();
    let mut target: Vec<Vec<PhoneId>> = Vec::with_capacity(n);
    for i in 0..n {
        let p = PhoneId::from(i);
        target.push(if world.is_alive(p) {
            world.neighbors_in_range(p)
        } else {
            Vec::new()
        });
    }

    for (i, new) in target.iter().enumerate() {
        let p = PhoneId::from(i);
        let old = world.graph.neighbors(p);
        changes
            .removed
            .extend(old.iter().filter(|&&q| q > p && new.binary_search(&q).is_err()).map(|&q| (p, q)));
        changes
            .created
            .extend(new.iter().filter(|&&q| q > p && old.binary_search(&q).is_err()).map(|&q| (p, q)));
    }

    for (i, list) in target.into_iter().enumerate() {
        world.graph.set_neighbors_unchecked(PhoneId::from(i), list);
    }
    world.graph.recount_edges();

    // Edges already reflect the new geometry; charging may kill phones, and
    // `kill` strips their links so later pairs see them as dead.
    let mut created = Vec::with_capacity(changes.created.len());
    for &(a, b) in &changes.created {
        if !(world.is_alive(a) && world.is_alive(b)) {
            continue;
        }
        charge(world, a, Action::Connect)?;
        charge(world, b, Action::Connect)?;
        created.push((a, b));
    }
    changes.created = created;
    Ok(changes)
}
