//! Synthetic rating histories with known ground truth.
//!
//! Four generation modes cover the assumptions the estimators probe:
//! a homogeneous continuous-time chain (the null), a regime-switching
//! chain (breaks time-homogeneity), a second-order chain with jump
//! momentum (breaks the Markov property), and an exact discrete-time
//! chain stepped at a fixed day interval (for product identities).
//!
//! Randomness is ChaCha8, keyed by the 64-bit seed in the first eight
//! key bytes, with the ChaCha stream index set to the entity index.
//! Entity paths therefore depend only on (seed, entity index); the
//! order entities are generated in, or a restriction to a subset,
//! never changes a path. Draw order per entity: initial state first,
//! then alternating holding-time and jump-target draws. Uniforms come
//! from the top 53 bits of each 64-bit word; exponential holding times
//! are `-ln(1 - u) / rate`.
//!
//! Continuous event times are quantized to the daily grid by `ceil`,
//! and when several jumps land on one day only the last survives, so
//! very high-rate chains lose intraday excursions (the paths stay
//! valid; the effective rate is slightly biased down).

use chrono::{Days, NaiveDate};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RatingHistory, Segment};
use crate::matrix::{GeneratorMatrix, StochasticMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("simulation needs at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("horizon must cover at least 1 day")]
    EmptyHorizon,
    #[error("year length must be positive, got {0}")]
    BadYearLength(f64),
    #[error("{what} is {n}x{n} but the configured state count is {expected}")]
    DimensionMismatch { what: &'static str, n: usize, expected: usize },
    #[error("switch dates must be strictly increasing and inside the horizon")]
    BadSwitchDates,
    #[error("{got} generators supplied for {switches} switch dates (need switches + 1)")]
    GeneratorCountMismatch { got: usize, switches: usize },
    #[error("memory probability must lie in [0, 1], got {0}")]
    BadMemoryProbability(f64),
    #[error("step length must be positive and at most the horizon")]
    BadStep,
    #[error("initial state {state} outside 1..={n}")]
    BadInitialState { state: usize, n: usize },
    #[error("initial weights must be {n} nonnegative values with a positive sum")]
    BadInitialWeights { n: usize },
}

/// Distribution of entity states on the first day.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStates {
    /// Uniform over `1..=n` (state = 1 + u64 mod n; the modulo bias is
    /// of order n / 2^64).
    #[default]
    Uniform,
    Fixed { state: usize },
    Weights { weights: Vec<f64> },
}

/// Generation mode with its ground-truth parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimMode {
    /// Exponential holding times with rates `-Q_ii`, jump targets drawn
    /// proportionally to the off-diagonal row.
    Homogeneous { generator: GeneratorMatrix<f64> },
    /// Like homogeneous, but the generator is swapped at each switch
    /// date; the exponential clock restarts at a switch (memoryless).
    RegimeSwitching {
        generators: Vec<GeneratorMatrix<f64>>,
        switch_dates: Vec<NaiveDate>,
    },
    /// Markov-violating kernel: holding times follow `generator`; with
    /// probability `p_mem` a jump continues the direction of the
    /// previous jump (one notch, when such a neighbour exists),
    /// otherwise the target is drawn from the generator row. The first
    /// jump of a path always draws from the generator row.
    SecondOrder { generator: GeneratorMatrix<f64>, p_mem: f64 },
    /// Discrete-time chain: one draw from `matrix` every `step_days`,
    /// first at `start + step_days`.
    DiscreteExact { matrix: StochasticMatrix<f64>, step_days: u32 },
}

/// Full description of one synthetic sample; the seed fixes the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub entities: usize,
    pub start: NaiveDate,
    pub horizon_days: u32,
    pub seed: u64,
    #[serde(default = "default_year_days")]
    pub year_days: f64,
    #[serde(default)]
    pub initial: InitialStates,
    pub mode: SimMode,
}

fn default_year_days() -> f64 {
    365.0
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.n < 2 {
            return Err(SimulateError::TooFewStates(self.n));
        }
        if self.horizon_days == 0 {
            return Err(SimulateError::EmptyHorizon);
        }
        if self.year_days <= 0.0 || self.year_days.is_nan() {
            return Err(SimulateError::BadYearLength(self.year_days));
        }
        match &self.initial {
            InitialStates::Uniform => {}
            InitialStates::Fixed { state } => {
                if !(1..=self.n).contains(state) {
                    return Err(SimulateError::BadInitialState { state: *state, n: self.n });
                }
            }
            InitialStates::Weights { weights } => {
                let ok = weights.len() == self.n
                    && weights.iter().all(|&w| w >= 0.0 && w.is_finite())
                    && weights.iter().sum::<f64>() > 0.0;
                if !ok {
                    return Err(SimulateError::BadInitialWeights { n: self.n });
                }
            }
        }
        match &self.mode {
            SimMode::Homogeneous { generator } => self.check_dim("generator", generator.n()),
            SimMode::RegimeSwitching { generators, switch_dates } => {
                if generators.len() != switch_dates.len() + 1 {
                    return Err(SimulateError::GeneratorCountMismatch {
                        got: generators.len(),
                        switches: switch_dates.len(),
                    });
                }
                for g in generators {
                    self.check_dim("generator", g.n())?;
                }
                let end = self.start + Days::new(u64::from(self.horizon_days));
                let inside = switch_dates.iter().all(|&d| d > self.start && d < end);
                let increasing = switch_dates.windows(2).all(|w| w[0] < w[1]);
                if !(inside && increasing) {
                    return Err(SimulateError::BadSwitchDates);
                }
                Ok(())
            }
            SimMode::SecondOrder { generator, p_mem } => {
                self.check_dim("generator", generator.n())?;
                if !(0.0..=1.0).contains(p_mem) {
                    return Err(SimulateError::BadMemoryProbability(*p_mem));
                }
                Ok(())
            }
            SimMode::DiscreteExact { matrix, step_days } => {
                self.check_dim("matrix", matrix.n())?;
                if *step_days == 0 || *step_days > self.horizon_days {
                    return Err(SimulateError::BadStep);
                }
                Ok(())
            }
        }
    }

    fn check_dim(&self, what: &'static str, n: usize) -> Result<(), SimulateError> {
        if n != self.n {
            return Err(SimulateError::DimensionMismatch { what, n, expected: self.n });
        }
        Ok(())
    }

    /// End of the simulated span (inclusive last rated day).
    pub fn end(&self) -> NaiveDate {
        self.start + Days::new(u64::from(self.horizon_days))
    }
}

/// RNG for one entity: seed in the key, entity index as the stream.
fn entity_rng(seed: u64, entity: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(entity);
    rng
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn draw_initial(initial: &InitialStates, n: usize, rng: &mut ChaCha8Rng) -> usize {
    match initial {
        InitialStates::Uniform => 1 + (rng.next_u64() % n as u64) as usize,
        InitialStates::Fixed { state } => *state,
        InitialStates::Weights { weights } => {
            let total: f64 = weights.iter().sum();
            let mut v = uniform01(rng) * total;
            for (idx, &w) in weights.iter().enumerate() {
                if v < w {
                    return idx + 1;
                }
                v -= w;
            }
            weights.iter().rposition(|&w| w > 0.0).map(|i| i + 1).unwrap_or(n)
        }
    }
}

/// Jump target drawn proportionally to the off-diagonal rates of row
/// `state`. Returns `None` when the row has no exit rate.
fn draw_jump_target(q: &GeneratorMatrix<f64>, state: usize, rng: &mut ChaCha8Rng) -> Option<usize> {
    let row = q.row(state - 1);
    let exit: f64 = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != state - 1)
        .map(|(_, &r)| r)
        .sum();
    if exit <= 0.0 {
        return None;
    }
    let mut v = uniform01(rng) * exit;
    let mut last_positive = None;
    for (j, &rate) in row.iter().enumerate() {
        if j == state - 1 || rate <= 0.0 {
            continue;
        }
        last_positive = Some(j + 1);
        if v < rate {
            return Some(j + 1);
        }
        v -= rate;
    }
    last_positive
}

fn draw_matrix_row(m: &StochasticMatrix<f64>, state: usize, rng: &mut ChaCha8Rng) -> usize {
    let row = m.row(state - 1);
    let mut v = uniform01(rng);
    let mut last_positive = state;
    for (j, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = j + 1;
        if v < p {
            return j + 1;
        }
        v -= p;
    }
    last_positive
}

/// Raw (day, state) path events, before quantization collapse.
struct RawPath {
    initial: usize,
    events: Vec<(u32, usize)>,
}

fn simulate_entity(config: &SimulationConfig, rng: &mut ChaCha8Rng) -> RawPath {
    let initial = draw_initial(&config.initial, config.n, rng);
    let horizon = f64::from(config.horizon_days);
    let mut events = Vec::new();

    match &config.mode {
        SimMode::Homogeneous { generator } => {
            walk_ctmc(generator, initial, 0.0, horizon, config.year_days, rng, &mut events, None);
        }
        SimMode::RegimeSwitching { generators, switch_dates } => {
            let mut boundaries: Vec<f64> = switch_dates
                .iter()
                .map(|&d| (d - config.start).num_days() as f64)
                .collect();
            boundaries.push(horizon);
            let mut state = initial;
            let mut clock = 0.0;
            for (regime, generator) in generators.iter().enumerate() {
                let regime_end = boundaries[regime];
                state = walk_ctmc(
                    generator,
                    state,
                    clock,
                    regime_end,
                    config.year_days,
                    rng,
                    &mut events,
                    None,
                );
                clock = regime_end;
            }
        }
        SimMode::SecondOrder { generator, p_mem } => {
            walk_ctmc(
                generator,
                initial,
                0.0,
                horizon,
                config.year_days,
                rng,
                &mut events,
                Some(*p_mem),
            );
        }
        SimMode::DiscreteExact { matrix, step_days } => {
            let mut state = initial;
            let mut day = *step_days;
            while day <= config.horizon_days {
                state = draw_matrix_row(matrix, state, rng);
                events.push((day, state));
                day += step_days;
            }
        }
    }
    RawPath { initial, events }
}

/// Continuous-time walk from `clock` to `until` (days); emits quantized
/// jump events and returns the state held at `until`. `momentum` turns
/// on the second-order kernel.
#[allow(clippy::too_many_arguments)]
fn walk_ctmc(
    q: &GeneratorMatrix<f64>,
    start_state: usize,
    clock: f64,
    until: f64,
    year_days: f64,
    rng: &mut ChaCha8Rng,
    events: &mut Vec<(u32, usize)>,
    momentum: Option<f64>,
) -> usize {
    let n = q.n();
    let mut state = start_state;
    let mut previous: Option<usize> = None;
    let mut clock = clock;
    loop {
        let exit_rate = -q.get(state - 1, state - 1);
        if exit_rate <= 0.0 {
            return state;
        }
        let dwell_years = -(1.0 - uniform01(rng)).ln() / exit_rate;
        clock += dwell_years * year_days;
        if clock > until {
            return state;
        }
        let target = match momentum {
            Some(p_mem) => {
                let continued = previous.and_then(|prev| {
                    let next = if state > prev { state + 1 } else { state.wrapping_sub(1) };
                    ((1..=n).contains(&next) && uniform01(rng) < p_mem).then_some(next)
                });
                match continued {
                    Some(next) => Some(next),
                    None => draw_jump_target(q, state, rng),
                }
            }
            None => draw_jump_target(q, state, rng),
        };
        let Some(target) = target else {
            return state;
        };
        events.push((clock.ceil() as u32, target));
        previous = Some(state);
        state = target;
    }
}

/// Collapses same-day events (last wins) and builds the segment list.
fn path_to_history(
    entity_id: String,
    path: RawPath,
    start: NaiveDate,
    horizon_days: u32,
) -> RatingHistory {
    let mut collapsed: Vec<(u32, usize)> = Vec::with_capacity(path.events.len());
    for (day, state) in path.events {
        match collapsed.last_mut() {
            Some(last) if last.0 == day => last.1 = state,
            _ => collapsed.push((day, state)),
        }
    }

    let mut segments = Vec::new();
    let mut seg_start_day = 0u32;
    let mut state = path.initial;
    for (day, next) in collapsed {
        if day == 0 {
            // Jump quantized onto the first day: it overrides the
            // initial state, no zero-length segment.
            state = next;
            continue;
        }
        if next == state {
            continue;
        }
        segments.push(Segment {
            start: start + Days::new(u64::from(seg_start_day)),
            end: start + Days::new(u64::from(day - 1)),
            state,
        });
        seg_start_day = day;
        state = next;
    }
    segments.push(Segment {
        start: start + Days::new(u64::from(seg_start_day)),
        end: start + Days::new(u64::from(horizon_days)),
        state,
    });
    RatingHistory::from_validated_segments(entity_id, segments)
}

/// Generates the configured sample: one piecewise-constant path per
/// entity, ids `E000000`, `E000001`, ... Identical configs (including
/// the seed) give identical output.
pub fn simulate(config: &SimulationConfig) -> Result<Vec<RatingHistory>, SimulateError> {
    config.validate()?;
    let mut histories = Vec::with_capacity(config.entities);
    for entity in 0..config.entities {
        let mut rng = entity_rng(config.seed, entity as u64);
        let path = simulate_entity(config, &mut rng);
        histories.push(path_to_history(
            format!("E{entity:06}"),
            path,
            config.start,
            config.horizon_days,
        ));
    }
    Ok(histories)
}
