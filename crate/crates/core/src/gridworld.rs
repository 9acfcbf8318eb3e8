//! 3x3 grid-world survival task.
//!
//! The agent moves on a 3x3 grid holding a food object (A) and a poison
//! object (B). Its battery drains by one unit per step and is recharged by
//! eating A; eating B raises a poison flag for the next step. The per-step
//! survival probability is `f(E) * g(C)` and the reward is its logarithm.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

pub const GRID_SIDE: usize = 3;
pub const N_CELLS: usize = GRID_SIDE * GRID_SIDE;
pub const N_ACTIONS: usize = 5;
pub const N_BATTERY_BINS: usize = 20;
pub const N_EAT_KINDS: usize = 3;
/// Size of the encoded observation space, `9 * 9 * 9 * 3 * 20`.
pub const N_OBSERVATIONS: usize = N_CELLS * N_CELLS * N_CELLS * N_EAT_KINDS * N_BATTERY_BINS;

pub const BATTERY_MAX: f64 = 100.0;
pub const BATTERY_OPTIMUM: f64 = 60.0;
pub const BATTERY_DECAY: f64 = 1.0;
pub const FOOD_RECHARGE: f64 = 5.0;
pub const POISON_DRIFT_PROB: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up = 0,
    Down = 1,
    Right = 2,
    Left = 3,
    Eat = 4,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Right,
        Action::Left,
        Action::Eat,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Right => "RIGHT",
            Action::Left => "LEFT",
            Action::Eat => "EAT",
        };
        f.write_str(name)
    }
}

/// What the agent ate on its last step (`c` in the observation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LastEat {
    Nothing = 1,
    Food = 2,
    Poison = 3,
}

impl LastEat {
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(c: usize) -> Option<LastEat> {
        match c {
            1 => Some(LastEat::Nothing),
            2 => Some(LastEat::Food),
            3 => Some(LastEat::Poison),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridState {
    /// Row-major cell index.
    pub agent_pos: usize,
    pub food_pos: usize,
    pub poison_pos: usize,
    pub battery: f64,
    pub poison_flag: bool,
    pub last_eat: LastEat,
}

impl GridState {
    pub fn observe(&self) -> GridObservation {
        GridObservation {
            x: self.agent_pos,
            p_a: self.food_pos,
            p_b: self.poison_pos,
            c: self.last_eat,
            e_bin: battery_bin(self.battery),
        }
    }

    /// Temporal survival probability `f(E) g(C)` of this state.
    pub fn survival_prob(&self) -> f64 {
        battery_factor(self.battery) * g_poison(self.poison_flag)
    }

    pub fn is_valid(&self) -> bool {
        self.agent_pos < N_CELLS
            && self.food_pos < N_CELLS
            && self.poison_pos < N_CELLS
            && self.food_pos != self.poison_pos
            && (0.0..=BATTERY_MAX).contains(&self.battery)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridObservation {
    pub x: usize,
    pub p_a: usize,
    pub p_b: usize,
    pub c: LastEat,
    pub e_bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: GridState,
    pub observation: GridObservation,
    /// `ln p_survive`.
    pub reward: f64,
    pub alive: bool,
    pub p_survive: f64,
    /// Whether the 1% poison relocation fired on this step.
    pub poison_drifted: bool,
}

/// `f(E) = exp(-(E - 60)^2 / 1000)`.
pub fn f_battery(battery: f64) -> Result<f64> {
    if !(0.0..=BATTERY_MAX).contains(&battery) {
        return Err(Error::BatteryOutOfRange(battery));
    }
    Ok(battery_factor(battery))
}

fn battery_factor(battery: f64) -> f64 {
    let d = battery - BATTERY_OPTIMUM;
    (-(d * d) / 1000.0).exp()
}

/// `g(C)`: 0.5 right after eating poison, 1 otherwise.
pub fn g_poison(poisoned: bool) -> f64 {
    if poisoned {
        0.5
    } else {
        1.0
    }
}

/// Index of the 5-unit battery band; 100 falls in the last band.
pub fn discretize_battery(battery: f64) -> Result<usize> {
    if !(0.0..=BATTERY_MAX).contains(&battery) {
        return Err(Error::BatteryOutOfRange(battery));
    }
    Ok(battery_bin(battery))
}

fn battery_bin(battery: f64) -> usize {
    ((battery / 5.0).floor() as usize).min(N_BATTERY_BINS - 1)
}

fn check_field(field: &'static str, value: usize, limit: usize) -> Result<()> {
    if value < limit {
        Ok(())
    } else {
        Err(Error::InvalidObservation {
            field,
            value: value as i64,
        })
    }
}

/// Mixed-radix index `x + 9(p_a + 9(p_b + 9((c-1) + 3 e_bin)))`.
pub fn encode_observation(obs: &GridObservation) -> Result<usize> {
    check_field("x", obs.x, N_CELLS)?;
    check_field("p_a", obs.p_a, N_CELLS)?;
    check_field("p_b", obs.p_b, N_CELLS)?;
    check_field("e_bin", obs.e_bin, N_BATTERY_BINS)?;
    let c = obs.c.code() - 1;
    Ok(obs.x + N_CELLS * (obs.p_a + N_CELLS * (obs.p_b + N_CELLS * (c + N_EAT_KINDS * obs.e_bin))))
}

pub fn decode_observation(index: usize) -> Result<GridObservation> {
    if index >= N_OBSERVATIONS {
        return Err(Error::InvalidObservation {
            field: "index",
            value: index as i64,
        });
    }
    let mut rest = index;
    let mut take = |radix: usize| {
        let digit = rest % radix;
        rest /= radix;
        digit
    };
    let x = take(N_CELLS);
    let p_a = take(N_CELLS);
    let p_b = take(N_CELLS);
    let c = take(N_EAT_KINDS);
    let e_bin = rest;
    Ok(GridObservation {
        x,
        p_a,
        p_b,
        c: LastEat::from_code(c + 1).expect("digit < 3"),
        e_bin,
    })
}

fn uniform_cell_except<R: Rng + ?Sized>(excluded: usize, rng: &mut R) -> usize {
    let r = rng.gen_range(0..N_CELLS - 1);
    if r >= excluded {
        r + 1
    } else {
        r
    }
}

/// Starts an episode at battery 60 with uniformly placed agent and objects.
pub fn reset<R: Rng + ?Sized>(rng: &mut R) -> (GridState, GridObservation) {
    let agent_pos = rng.gen_range(0..N_CELLS);
    let food_pos = rng.gen_range(0..N_CELLS);
    let poison_pos = uniform_cell_except(food_pos, rng);
    let state = GridState {
        agent_pos,
        food_pos,
        poison_pos,
        battery: BATTERY_OPTIMUM,
        poison_flag: false,
        last_eat: LastEat::Nothing,
    };
    (state, state.observe())
}

fn moved(pos: usize, action: Action) -> usize {
    let (row, col) = (pos / GRID_SIDE, pos % GRID_SIDE);
    let (row, col) = match action {
        Action::Up if row > 0 => (row - 1, col),
        Action::Down if row + 1 < GRID_SIDE => (row + 1, col),
        Action::Right if col + 1 < GRID_SIDE => (row, col + 1),
        Action::Left if col > 0 => (row, col - 1),
        _ => (row, col),
    };
    row * GRID_SIDE + col
}

/// Advances one step. The random draws are consumed in a fixed order:
/// survival, object relocation (only when something is eaten), poison
/// drift, drift relocation (only when drift fires).
pub fn step<R: Rng + ?Sized>(state: &GridState, action: Action, rng: &mut R) -> StepOutcome {
    // survival of this transition depends on the pre-action state
    let p_survive = state.survival_prob();
    let reward = p_survive.ln();
    let alive = rng.gen::<f64>() < p_survive;

    let mut next = *state;
    next.agent_pos = moved(state.agent_pos, action);

    next.poison_flag = false;
    next.last_eat = LastEat::Nothing;
    if action == Action::Eat {
        if next.agent_pos == next.food_pos {
            next.battery += FOOD_RECHARGE;
            next.food_pos = uniform_cell_except(next.poison_pos, rng);
            next.last_eat = LastEat::Food;
        } else if next.agent_pos == next.poison_pos {
            next.poison_flag = true;
            next.poison_pos = uniform_cell_except(next.food_pos, rng);
            next.last_eat = LastEat::Poison;
        }
    }

    next.battery = (next.battery - BATTERY_DECAY).clamp(0.0, BATTERY_MAX);

    let poison_drifted = rng.gen::<f64>() < POISON_DRIFT_PROB;
    if poison_drifted {
        next.poison_pos = uniform_cell_except(next.food_pos, rng);
    }

    StepOutcome {
        next_state: next,
        observation: next.observe(),
        reward,
        alive,
        p_survive,
        poison_drifted,
    }
}
