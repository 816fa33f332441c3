//! Ordered state sets, their numeric labels, and coarsening maps.
//!
//! States are 1-based: `1` is the lowest grade (default end), `n` the
//! highest. State `k` of an n-state space carries the numeric label
//! `(2k - 1) / (2n)`, so labels run from `1/(2n)` to `1 - 1/(2n)`.
//! Coarsening merges pairs of adjacent states; chaining the pairwise
//! map takes 15 states to 8, then 4, then 2.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RatingHistory, Segment};
use crate::scalar::{lift, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateSpaceError {
    #[error("state space needs at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("pairwise coarsening needs at least 3 states, got {0}")]
    NothingToMerge(usize),
    #[error("state {state} outside 1..={n}")]
    StateOutOfRange { state: usize, n: usize },
    #[error("cannot compose a map onto {target} states with one from {from} states")]
    IncompatibleMaps { target: usize, from: usize },
    #[error("no pairwise-coarsening chain from {from} to {to} states")]
    UnreachableStateCount { from: usize, to: usize },
}

/// Ordered set of `n` rating states with their numeric labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<F> {
    n: usize,
    labels: Vec<F>,
}

impl<F: Scalar> StateSpace<F> {
    pub fn new(n: usize) -> Result<Self, StateSpaceError> {
        if n < 2 {
            return Err(StateSpaceError::TooFewStates(n));
        }
        let denom = lift::<F>(2.0 * n as f64);
        let labels = (1..=n)
            .map(|k| lift::<F>((2 * k - 1) as f64) / denom)
            .collect();
        Ok(Self { n, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[F] {
        &self.labels
    }

    /// Label of a 1-based state.
    pub fn label(&self, state: usize) -> Result<F, StateSpaceError> {
        self.labels
            .get(state.wrapping_sub(1))
            .copied()
            .ok_or(StateSpaceError::StateOutOfRange { state, n: self.n })
    }
}

/// Which end of the scale keeps its single state when an odd number of
/// states is pair-merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeLeftover {
    /// The highest-rated state stays unmerged (pairs form from the
    /// default end upward).
    #[default]
    Top,
    /// The lowest-rated state stays unmerged.
    Bottom,
}

/// Monotone surjection from `{1..source_n}` onto `{1..target_n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseningMap {
    source_n: usize,
    target_n: usize,
    assignment: Vec<usize>,
}

impl CoarseningMap {
    pub fn identity(n: usize) -> Self {
        Self { source_n: n, target_n: n, assignment: (1..=n).collect() }
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    pub fn target_n(&self) -> usize {
        self.target_n
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Target state of a 1-based source state.
    pub fn apply(&self, state: usize) -> Result<usize, StateSpaceError> {
        self.assignment
            .get(state.wrapping_sub(1))
            .copied()
            .ok_or(StateSpaceError::StateOutOfRange { state, n: self.source_n })
    }

    /// `self` followed by `then`.
    pub fn compose(&self, then: &CoarseningMap) -> Result<CoarseningMap, StateSpaceError> {
        if self.target_n != then.source_n {
            return Err(StateSpaceError::IncompatibleMaps {
                target: self.target_n,
                from: then.source_n,
            });
        }
        let assignment = self
            .assignment
            .iter()
            .map(|&mid| then.assignment[mid - 1])
            .collect();
        Ok(CoarseningMap {
            source_n: self.source_n,
            target_n: then.target_n,
            assignment,
        })
    }

    /// Composes pairwise merges until `to` states are reached.
    ///
    /// Succeeds only when `to` lies on the pairwise chain from `from`
    /// (for 15 states: 15, 8, 4, 2).
    pub fn chain(from: usize, to: usize, leftover: MergeLeftover) -> Result<Self, StateSpaceError> {
        if to >= 2 && to == from {
            return Ok(Self::identity(from));
        }
        let mut map = Self::identity(from);
        while map.target_n > to {
            if map.target_n < 3 {
                return Err(StateSpaceError::UnreachableStateCount { from, to });
            }
            map = map.compose(&pairwise_coarsen_with(map.target_n, leftover)?)?;
        }
        if map.target_n != to {
            return Err(StateSpaceError::UnreachableStateCount { from, to });
        }
        Ok(map)
    }
}

/// Merges adjacent state pairs, keeping the highest-rated state single
/// when `n` is odd.
pub fn pairwise_coarsen(n: usize) -> Result<CoarseningMap, StateSpaceError> {
    pairwise_coarsen_with(n, MergeLeftover::Top)
}

/// Merges adjacent state pairs with an explicit choice of which end
/// keeps its unmerged state for odd `n`.
pub fn pairwise_coarsen_with(
    n: usize,
    leftover: MergeLeftover,
) -> Result<CoarseningMap, StateSpaceError> {
    if n < 3 {
        return Err(StateSpaceError::NothingToMerge(n));
    }
    let target_n = n.div_ceil(2);
    let assignment = match leftover {
        MergeLeftover::Top => (1..=n).map(|i| i.div_ceil(2)).collect(),
        MergeLeftover::Bottom if n % 2 == 1 => {
            (1..=n).map(|i| if i == 1 { 1 } else { 1 + i / 2 }).collect()
        }
        MergeLeftover::Bottom => (1..=n).map(|i| i.div_ceil(2)).collect(),
    };
    Ok(CoarseningMap { source_n: n, target_n, assignment })
}

/// Remaps a history through a coarsening map, merging segments that
/// land in the same target state. Transition counts never increase.
pub fn coarsen_history(
    history: &RatingHistory,
    map: &CoarseningMap,
) -> Result<RatingHistory, StateSpaceError> {
    let mut segments: Vec<Segment> = Vec::with_capacity(history.segments().len());
    for seg in history.segments() {
        let state = map.apply(seg.state)?;
        match segments.last_mut() {
            Some(last) if last.state == state => last.end = seg.end,
            _ => segments.push(Segment { start: seg.start, end: seg.end, state }),
        }
    }
    Ok(RatingHistory::from_validated_segments(
        history.entity_id().to_owned(),
        segments,
    ))
}

/// Applies [`coarsen_history`] to a whole sample.
pub fn coarsen_histories(
    histories: &[RatingHistory],
    map: &CoarseningMap,
) -> Result<Vec<RatingHistory>, StateSpaceError> {
    histories.iter().map(|h| coarsen_history(h, map)).collect()
}
