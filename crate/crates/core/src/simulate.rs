//! Closed-loop runs `x(t+1) = f(x(t), υ(x(t)))` under a synthesized table.

use std::fmt;

use crate::dynamics::{SystemModel, Trajectory};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par::{self, Execution};
use crate::reach::norm;
use crate::synth::{Control, FeedbackTable};

/// How the state is propagated between lookups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Semantics {
    /// The true closed loop: the image `f(x, υ(x))` is the next state.
    #[default]
    Continuous,
    /// The loop the table was synthesized for: an image outside the target
    /// ball is replaced by the center of the cell it falls in. Here
    /// `states[t+1]` is that center, and `f(states[t], inputs[t])` lies in
    /// the same cell. Starting from a cell center, every step lowers the
    /// layer index by at least one.
    Quantized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Converged(usize),
    LeftBox(usize),
    HitUnreachable(usize),
    Stalled(usize),
}

impl Outcome {
    pub fn step(self) -> usize {
        match self {
            Outcome::Converged(s) | Outcome::LeftBox(s) | Outcome::HitUnreachable(s) | Outcome::Stalled(s) => s,
        }
    }

    pub fn is_converged(self) -> bool {
        matches!(self, Outcome::Converged(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Converged(_) => "Converged",
            Outcome::LeftBox(_) => "LeftBox",
            Outcome::HitUnreachable(_) => "HitUnreachable",
            Outcome::Stalled(_) => "Stalled",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.label(), self.step())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    /// Layer index of the cell holding each visited state; `None` outside
    /// the grid or in an unreachable cell.
    pub index_trace: Vec<Option<u32>>,
    pub outcome: Outcome,
}

pub fn run_closed_loop(
    model: &SystemModel,
    table: &FeedbackTable,
    grid: &Grid,
    x0: &[f64],
    epsilon: f64,
    max_steps: usize,
    semantics: Semantics,
) -> Result<ClosedLoopRun> {
    if x0.len() != model.n() {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} components, model has n={}",
            x0.len(),
            model.n()
        )));
    }
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    let mut states = vec![x0.to_vec()];
    let mut inputs = Vec::new();
    let mut index_trace = Vec::new();
    let mut next = vec![0.0; model.n()];
    let outcome = loop {
        let t = inputs.len();
        let x = states.last().unwrap();
        index_trace.push(grid.index_of(x).and_then(|c| table.layer_of(c)));
        if norm(x) <= epsilon {
            break Outcome::Converged(t);
        }
        let u = match table.lookup(grid, x) {
            Control::Outside => break Outcome::LeftBox(t),
            Control::Unreachable => break Outcome::HitUnreachable(t),
            Control::Input(u) => u,
        };
        if t == max_steps {
            break Outcome::Stalled(t);
        }
        model
            .evaluate_into(x, u, &mut next)
            .map_err(|source| Error::FlowStep { step: t, source })?;
        if semantics == Semantics::Quantized && norm(&next) > epsilon {
            if let Some(c) = grid.index_of(&next) {
                grid.center_into(c, &mut next)?;
            }
        }
        inputs.push(u.to_vec());
        states.push(next.clone());
    };
    Ok(ClosedLoopRun {
        trajectory: Trajectory { states, inputs },
        index_trace,
        outcome,
    })
}

/// `layer_count + 5`.
pub fn default_max_steps(layer_count: usize) -> usize {
    layer_count + 5
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasinEntry {
    pub cell: usize,
    pub layer: Option<u32>,
    pub outcome: Outcome,
}

impl BasinEntry {
    /// A reachable cell whose run did not converge within its layer index.
    pub fn is_violation(&self) -> bool {
        match (self.layer, self.outcome) {
            (Some(k), Outcome::Converged(s)) => s > k as usize,
            (Some(_), _) => true,
            (None, _) => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasinReport {
    pub entries: Vec<BasinEntry>,
}

impl BasinReport {
    pub fn violations(&self) -> impl Iterator<Item = &BasinEntry> {
        self.entries.iter().filter(|e| e.is_violation())
    }

    pub fn certified(&self) -> bool {
        self.violations().next().is_none()
    }

    /// Longest converged run: the empirical horizon.
    pub fn max_steps(&self) -> Option<usize> {
        self.entries
            .iter()
            .filter_map(|e| match e.outcome {
                Outcome::Converged(s) => Some(s),
                _ => None,
            })
            .max()
    }

    pub fn converged_fraction(&self) -> f64 {
        let n = self.entries.iter().filter(|e| e.outcome.is_converged()).count();
        n as f64 / self.entries.len() as f64
    }

    pub fn unreachable_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().filter(|e| e.layer.is_none()).map(|e| e.cell)
    }
}

/// Runs the quantized closed loop from every cell center. Reachable cells
/// must converge within their layer index; unreachable ones are recorded.
pub fn certify_basin(
    model: &SystemModel,
    table: &FeedbackTable,
    grid: &Grid,
    epsilon: f64,
    max_steps: usize,
    exec: Execution,
) -> Result<BasinReport> {
    let entries = par::try_map_range(exec, grid.total_cells(), |cell| {
        let x0 = grid.center_of(cell)?;
        let run = run_closed_loop(model, table, grid, &x0, epsilon, max_steps, Semantics::Quantized)?;
        Ok::<_, Error>(BasinEntry {
            cell,
            layer: table.layer_of(cell),
            outcome: run.outcome,
        })
    })?;
    Ok(BasinReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::registry;
    use crate::grid::InputSet;
    use crate::reach::{compute_layers, ReachOptions};
    use crate::synth::synthesize;

    fn setup(name: &str, cells: usize, inputs: usize, eps: f64) -> (SystemModel, Grid, FeedbackTable, usize) {
        let m = registry::builtin(name).unwrap();
        let g = Grid::new(m.state_box().to_vec(), vec![cells; m.n()]).unwrap();
        let u = InputSet::uniform(m.input_box().to_vec(), vec![inputs; m.m()]).unwrap();
        let l = compute_layers(&m, &g, &u, eps, &ReachOptions::for_grid(&g)).unwrap();
        let t = synthesize(&l, &m, &g, &u, Execution::Sequential).unwrap();
        (m, g, t, l.layer_count)
    }

    #[test]
    fn scalar_integrator_converges_in_one_step() {
        let (m, g, t, lc) = setup("scalar-integrator", 41, 21, 0.05);
        let x0 = g.center_of(35).unwrap();
        for sem in [Semantics::Continuous, Semantics::Quantized] {
            let run = run_closed_loop(&m, &t, &g, &x0, 0.05, default_max_steps(lc), sem).unwrap();
            assert_eq!(run.outcome, Outcome::Converged(1));
            assert_eq!(run.index_trace, vec![Some(1), Some(0)]);
            assert_eq!(run.trajectory.inputs, vec![vec![-0.7]]);
        }
    }

    #[test]
    fn start_inside_ball() {
        let (m, g, t, _) = setup("scalar-integrator", 41, 21, 0.05);
        let run = run_closed_loop(&m, &t, &g, &[0.01], 0.05, 3, Semantics::Continuous).unwrap();
        assert_eq!(run.outcome, Outcome::Converged(0));
        assert!(run.trajectory.is_empty());
    }

    #[test]
    fn terminal_outcomes() {
        let (m, g, t, _) = setup("square-sum", 41, 21, 0.05);
        let run = run_closed_loop(&m, &t, &g, &[1.5], 0.05, 10, Semantics::Continuous).unwrap();
        assert_eq!(run.outcome, Outcome::HitUnreachable(0));
        let run = run_closed_loop(&m, &t, &g, &[2.5], 0.05, 10, Semantics::Continuous).unwrap();
        assert_eq!(run.outcome, Outcome::LeftBox(0));
        assert_eq!(run.index_trace, vec![None]);
    }

    #[test]
    fn stalls_at_step_cap() {
        let (m, g, t, _) = setup("double-integrator", 21, 21, 0.1);
        let far = g.center_of(0).unwrap();
        let run = run_closed_loop(&m, &t, &g, &far, 0.1, 1, Semantics::Quantized).unwrap();
        if t.layer_of(0).is_some_and(|k| k > 1) {
            assert_eq!(run.outcome, Outcome::Stalled(1));
        }
        assert!(run_closed_loop(&m, &t, &g, &far, 0.1, 0, Semantics::Quantized).is_err());
    }

    #[test]
    fn continuous_trajectory_replays() {
        let (m, g, t, lc) = setup("double-integrator", 21, 21, 0.1);
        let run = run_closed_loop(&m, &t, &g, &[0.37, -0.52], 0.1, default_max_steps(lc), Semantics::Continuous).unwrap();
        let replay = m.flow(&[0.37, -0.52], &run.trajectory.inputs).unwrap();
        assert_eq!(replay, run.trajectory);
    }

    #[test]
    fn basin_scalar_integrator() {
        let (m, g, t, lc) = setup("scalar-integrator", 41, 21, 0.05);
        let r = certify_basin(&m, &t, &g, 0.05, default_max_steps(lc), Execution::Parallel).unwrap();
        assert!(r.certified());
        assert_eq!(r.max_steps(), Some(1));
        assert_eq!(r.converged_fraction(), 1.0);
    }

    #[test]
    fn basin_square_sum_lists_unreachable() {
        let (m, g, t, lc) = setup("square-sum", 41, 21, 0.05);
        let r = certify_basin(&m, &t, &g, 0.05, default_max_steps(lc), Execution::Sequential).unwrap();
        assert!(r.certified());
        let unreachable: Vec<usize> = r.unreachable_cells().collect();
        assert!(!unreachable.is_empty());
        for e in &r.entries {
            if e.layer.is_none() {
                assert_eq!(e.outcome, Outcome::HitUnreachable(0));
            }
        }
        let reachable = t.cells.iter().filter(|c| c.layer().is_some()).count();
        assert_eq!(r.converged_fraction(), reachable as f64 / g.total_cells() as f64);
    }
}
