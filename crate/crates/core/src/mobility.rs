//! Memoryless constant-speed random walk on the torus.

use std::f64::consts::TAU;

use rand::Rng;

use crate::world::{Position, World, WorldConfig};

/// Moves `speed` units in a uniformly random direction and wraps.
pub fn step_phone<R: Rng + ?Sized>(pos: Position, speed: f64, cfg: &WorldConfig, rng: &mut R) -> Position {
    let theta = rng.random_range(0.0..TAU);
    step_with_heading(pos, speed, theta, cfg)
}

pub fn step_with_heading(pos: Position, speed: f64, theta: f64, cfg: &WorldConfig) -> Position {
    if speed == 0.0 {
        return pos;
    }
    cfg.wrap(pos.x + speed * theta.cos(), pos.y + speed * theta.sin())
}

/// Moves every alive phone one tick, ascending id, each on its own stream.
/// Dead phones do not move and consume no randomness.
pub fn move_all<R: Rng>(world: &mut World, streams: &mut [R]) {
    let speed = world.cfg.speed;
    for phone in world.phones.iter_mut().filter(|p| p.alive) {
        phone.pos = step_phone(phone.pos, speed, &world.cfg, &mut streams[phone.id.idx()]);
    }
    world.refresh_grid();
}
