//! Backward reachable layers over the state grid.
//!
//! Layer 0 holds the cells whose centers lie in the closed target ball
//! `‖x‖ ≤ ε`. Cell `c` joins layer `k` when some input maps its center into
//! the ball or into a cell already in a layer `≤ k − 1`. The stored value per
//! cell is the smallest such `k`, the minimal index `i_x`.
//!
//! Each sweep tests only unassigned cells against a frozen copy of the
//! previous assignment, and merges afterwards, so the result does not depend
//! on the order (or thread) in which cells are visited.

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::grid::{Grid, InputSet};
use crate::par::{self, Execution};

/// Where one transition lands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Successor {
    /// Inside the target ball.
    Goal,
    Cell(usize),
    Outside,
}

const GOAL: u32 = u32::MAX;
const OUTSIDE: u32 = u32::MAX - 1;

impl Successor {
    fn encode(self) -> u32 {
        match self {
            Successor::Goal => GOAL,
            Successor::Outside => OUTSIDE,
            Successor::Cell(c) => c as u32,
        }
    }

    fn decode(v: u32) -> Self {
        match v {
            GOAL => Successor::Goal,
            OUTSIDE => Successor::Outside,
            c => Successor::Cell(c as usize),
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Image of `center` under input `u`, classified against the ball and grid.
pub fn classify(
    model: &SystemModel,
    grid: &Grid,
    epsilon: f64,
    center: &[f64],
    u: &[f64],
    buf: &mut [f64],
) -> Result<Successor, crate::error::EvalError> {
    model.evaluate_into(center, u, buf)?;
    Ok(if norm(buf) <= epsilon {
        Successor::Goal
    } else {
        grid.index_of(buf).map_or(Successor::Outside, Successor::Cell)
    })
}

/// Precomputed `cell × input → successor` map.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    inputs: usize,
    next: Vec<u32>,
}

impl TransitionTable {
    pub fn bytes_needed(grid: &Grid, inputs: &InputSet) -> usize {
        grid.total_cells()
            .saturating_mul(inputs.len())
            .saturating_mul(std::mem::size_of::<u32>())
    }

    pub fn build(
        model: &SystemModel,
        grid: &Grid,
        inputs: &InputSet,
        epsilon: f64,
        exec: Execution,
    ) -> Result<Self> {
        let rows = par::try_map_range(exec, grid.total_cells(), |cell| {
            let mut center = vec![0.0; grid.dim()];
            grid.center_into(cell, &mut center)?;
            let mut buf = vec![0.0; model.n()];
            inputs
                .iter()
                .enumerate()
                .map(|(input, u)| {
                    classify(model, grid, epsilon, &center, u, &mut buf)
                        .map(Successor::encode)
                        .map_err(|source| Error::Transition { cell, input, source })
                })
                .collect::<Result<Vec<u32>>>()
        })?;
        Ok(TransitionTable {
            inputs: inputs.len(),
            next: rows.concat(),
        })
    }

    pub fn get(&self, cell: usize, input: usize) -> Successor {
        Successor::decode(self.next[cell * self.inputs + input])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReachOptions {
    pub max_layers: usize,
    pub execution: Execution,
    /// Largest transition table (bytes) to precompute; above it transitions
    /// are re-evaluated during each sweep.
    pub table_budget: usize,
}

impl ReachOptions {
    /// `max_layers = 10 · max(cells_per_dim)`, 256 MiB table budget.
    pub fn for_grid(grid: &Grid) -> Self {
        ReachOptions {
            max_layers: 10 * grid.cells_per_dim().iter().copied().max().unwrap_or(1),
            execution: Execution::default(),
            table_budget: 256 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachLayers {
    /// Minimal layer index per cell, `None` when unreachable.
    pub membership: Vec<Option<u32>>,
    /// Number of nonempty layers computed, counting layer 0.
    pub layer_count: usize,
    pub target_radius: f64,
    /// Cells added per layer, starting with layer 0. A trailing zero marks
    /// the sweep that found no new cells.
    pub growth_log: Vec<usize>,
    /// True when the sweep stopped because nothing more could be added.
    pub fixed_point: bool,
}

pub fn compute_layers(
    model: &SystemModel,
    grid: &Grid,
    inputs: &InputSet,
    epsilon: f64,
    opts: &ReachOptions,
) -> Result<ReachLayers> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if opts.max_layers == 0 {
        return Err(Error::InvalidArgument("max_layers must be at least 1".into()));
    }
    check_compatible(model, grid, inputs)?;
    let exec = opts.execution;
    let total = grid.total_cells();

    let mut membership: Vec<Option<u32>> = par::try_map_range(exec, total, |c| {
        grid.center_of(c).map(|x| (norm(&x) <= epsilon).then_some(0))
    })?;
    let mut unassigned: Vec<usize> = (0..total).filter(|&c| membership[c].is_none()).collect();
    let mut growth_log = vec![total - unassigned.len()];
    let mut fixed_point = unassigned.is_empty();

    let table = if TransitionTable::bytes_needed(grid, inputs) <= opts.table_budget && !unassigned.is_empty() {
        Some(TransitionTable::build(model, grid, inputs, epsilon, exec)?)
    } else {
        None
    };

    let mut layer = 1u32;
    while !unassigned.is_empty() && (layer as usize) <= opts.max_layers {
        let frozen = &membership;
        let hits: Vec<bool> = par::try_map_range(exec, unassigned.len(), |i| {
            let cell = unassigned[i];
            let lands = |s: Successor| match s {
                Successor::Goal => true,
                Successor::Cell(d) => frozen[d].is_some(),
                Successor::Outside => false,
            };
            match &table {
                Some(t) => Ok((0..inputs.len()).any(|j| lands(t.get(cell, j)))),
                None => {
                    let center = grid.center_of(cell)?;
                    let mut buf = vec![0.0; model.n()];
                    for (input, u) in inputs.iter().enumerate() {
                        let s = classify(model, grid, epsilon, &center, u, &mut buf)
                            .map_err(|source| Error::Transition { cell, input, source })?;
                        if lands(s) {
                            return Ok(true);
                        }
                    }
                    Ok::<_, Error>(false)
                }
            }
        })?;
        let mut added = 0;
        let mut still = Vec::with_capacity(unassigned.len());
        for (cell, hit) in unassigned.iter().zip(hits) {
            if hit {
                membership[*cell] = Some(layer);
                added += 1;
            } else {
                still.push(*cell);
            }
        }
        unassigned = still;
        growth_log.push(added);
        if added == 0 || unassigned.is_empty() {
            fixed_point = true;
            break;
        }
        layer += 1;
    }

    let layer_count = match growth_log.last() {
        Some(0) if growth_log.len() > 1 => growth_log.len() - 1,
        _ => growth_log.len(),
    };
    Ok(ReachLayers {
        membership,
        layer_count,
        target_radius: epsilon,
        growth_log,
        fixed_point,
    })
}

pub(crate) fn check_compatible(model: &SystemModel, grid: &Grid, inputs: &InputSet) -> Result<()> {
    if grid.dim() != model.n() || inputs.dim() != model.m() {
        return Err(Error::InvalidArgument(format!(
            "grid is {}-D and input set {}-D, model has n={}, m={}",
            grid.dim(),
            inputs.dim(),
            model.n(),
            model.m()
        )));
    }
    Ok(())
}

impl ReachLayers {
    pub fn cell_count(&self) -> usize {
        self.membership.len()
    }

    pub fn reachable_count(&self) -> usize {
        self.membership.iter().filter(|m| m.is_some()).count()
    }

    /// Fraction of cells with a finite minimal index.
    pub fn coverage(&self) -> f64 {
        self.reachable_count() as f64 / self.cell_count() as f64
    }

    /// Smallest `N` with every cell in a layer `≤ N`; `None` when some cell
    /// is unreachable.
    pub fn certify_n_step(&self) -> Option<u32> {
        self.membership
            .iter()
            .try_fold(0u32, |acc, m| m.map(|k| acc.max(k)))
    }

    /// Cells with index `≤ k`.
    pub fn layer(&self, k: u32) -> impl Iterator<Item = usize> + '_ {
        self.membership
            .iter()
            .enumerate()
            .filter(move |(_, m)| m.is_some_and(|i| i <= k))
            .map(|(c, _)| c)
    }
}
