//! Battery accounting.
//!
//! Every deduction goes through [`charge`], which floors the battery at zero,
//! records the amount actually removed in the [`EnergyLedger`] and kills the
//! phone when it runs empty. Nothing ever recharges.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SimError};
use crate::world::{PhoneId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Connect,
    Beacon,
    Send,
    Receive,
    Relay,
    Idle,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Connect,
        Action::Beacon,
        Action::Send,
        Action::Receive,
        Action::Relay,
        Action::Idle,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Connect => "connect",
            Action::Beacon => "beacon",
            Action::Send => "send",
            Action::Receive => "receive",
            Action::Relay => "relay",
            Action::Idle => "idle",
        }
    }
}

/// Battery cost of each action, in the same units as the initial charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCostTable {
    /// Paid by each endpoint of a newly created link.
    pub connect: f64,
    /// Paid once per local-knowledge broadcast.
    pub beacon: f64,
    pub send: f64,
    pub receive: f64,
    /// Paid by every intermediate phone on a delivery path.
    pub relay: f64,
    /// Paid every tick while alive.
    pub idle: f64,
}

impl EnergyCostTable {
    /// Calibrated defaults; see the README for the calibration procedure.
    pub const CALIBRATED: EnergyCostTable = EnergyCostTable {
        connect: 0.9,
        beacon: 0.05,
        send: 0.1,
        receive: 0.1,
        relay: 0.08,
        idle: 0.02,
    };

    pub fn cost(&self, action: Action) -> f64 {
        match action {
            Action::Connect => self.connect,
            Action::Beacon => self.beacon,
            Action::Send => self.send,
            Action::Receive => self.receive,
            Action::Relay => self.relay,
            Action::Idle => self.idle,
        }
    }

    pub fn set(&mut self, action: Action, value: f64) {
        let slot = match action {
            Action::Connect => &mut self.connect,
            Action::Beacon => &mut self.beacon,
            Action::Send => &mut self.send,
            Action::Receive => &mut self.receive,
            Action::Relay => &mut self.relay,
            Action::Idle => &mut self.idle,
        };
        *slot = value;
    }

    pub fn validate(&self) -> Result<()> {
        for a in Action::ALL {
            let c = self.cost(a);
            if !c.is_finite() || c < 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "cost `{}` must be finite and non-negative",
                    a.name()
                )));
            }
        }
        Ok(())
    }
}

impl Default for EnergyCostTable {
    fn default() -> Self {
        EnergyCostTable::CALIBRATED
    }
}

/// Cumulative spend per phone and action.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    initial_total: f64,
    per_phone: Vec<[f64; 6]>,
    totals: [f64; 6],
}

impl EnergyLedger {
    pub fn new(initial: impl Iterator<Item = f64>) -> Self {
        let initial: Vec<f64> = initial.collect();
        EnergyLedger {
            initial_total: initial.iter().sum(),
            per_phone: vec![[0.0; 6]; initial.len()],
            totals: [0.0; 6],
        }
    }

    fn record(&mut self, p: PhoneId, action: Action, amount: f64) {
        self.per_phone[p.idx()][action.slot()] += amount;
        self.totals[action.slot()] += amount;
    }

    pub fn initial_total(&self) -> f64 {
        self.initial_total
    }

    pub fn total(&self, action: Action) -> f64 {
        self.totals[action.slot()]
    }

    pub fn total_spent(&self) -> f64 {
        self.totals.iter().sum()
    }

    pub fn spent_by(&self, p: PhoneId, action: Action) -> f64 {
        self.per_phone[p.idx()][action.slot()]
    }

    pub fn phone_total(&self, p: PhoneId) -> f64 {
        self.per_phone[p.idx()].iter().sum()
    }

    /// |initial − (remaining + spent)| / initial.
    pub fn relative_residual(&self, remaining_total: f64) -> f64 {
        let lhs = self.initial_total;
        let rhs = remaining_total + self.total_spent();
        if lhs == 0.0 {
            rhs.abs()
        } else {
            (lhs - rhs).abs() / lhs
        }
    }
}

/// Deducts the cost of `action` from `p`. Returns `true` if the phone died.
pub fn charge(world: &mut World, p: PhoneId, action: Action) -> Result<bool> {
    let cost = world.costs.cost(action);
    let phone = &mut world.phones[p.idx()];
    if !phone.alive {
        return Err(SimError::ChargedDeadPhone(p));
    }
    let amount = cost.min(phone.battery);
    phone.battery -= amount;
    world.ledger.record(p, action, amount);
    if phone.battery <= 0.0 {
        world.kill(p);
        return Ok(true);
    }
    Ok(false)
}

/// Normal(mean, sd) samples clamped to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryDistribution {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for BatteryDistribution {
    fn default() -> Self {
        BatteryDistribution {
            mean: 1000.0,
            sd: 230.0,
            min: 100.0,
            max: 2000.0,
        }
    }
}

impl BatteryDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sd.is_finite()
            && self.sd >= 0.0
            && self.mean.is_finite()
            && self.min > 0.0
            && self.min <= self.max
            && self.max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(format!("invalid battery distribution {self:?}")))
        }
    }
}

pub fn initial_batteries<R: Rng + ?Sized>(n: usize, dist: &BatteryDistribution, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(dist.mean, dist.sd).expect("battery sd must be finite and non-negative");
    (0..n)
        .map(|_| normal.sample(rng).clamp(dist.min, dist.max))
        .collect()
}
