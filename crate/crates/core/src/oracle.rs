//! Brute-force ground truth: the quantized transition graph and reverse
//! breadth-first search over it.
//!
//! Deliberately simple. Every edge is evaluated up front and distances come
//! from a textbook BFS, so the layered sweep in [`crate::reach`] can be
//! checked against it cell by cell.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::grid::{Grid, InputSet};
use crate::par::{self, Execution};

/// Edge endpoint. `Goal` receives every image that lands inside the target
/// ball, whatever cell it would otherwise fall into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Cell(usize),
    Goal,
    Outside,
}

#[derive(Clone, Debug)]
pub struct TransitionGraph {
    cells: usize,
    inputs: usize,
    edges: Vec<Node>,
    targets: Vec<bool>,
}

pub fn build_graph(
    model: &SystemModel,
    grid: &Grid,
    inputs: &InputSet,
    epsilon: f64,
    exec: Execution,
) -> Result<TransitionGraph> {
    let k = inputs.len();
    let rows = par::try_map_range(exec, grid.total_cells(), |cell| {
        let center = grid.center_of(cell)?;
        let mut row = Vec::with_capacity(k);
        for (j, u) in inputs.iter().enumerate() {
            let y = model
                .evaluate(&center, u)
                .map_err(|source| Error::Transition { cell, input: j, source })?;
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.push(if norm <= epsilon {
                Node::Goal
            } else {
                grid.index_of(&y).map_or(Node::Outside, Node::Cell)
            });
        }
        let target = center.iter().map(|v| v * v).sum::<f64>().sqrt() <= epsilon;
        Ok::<_, Error>((row, target))
    })?;
    let mut edges = Vec::with_capacity(grid.total_cells() * k);
    let mut targets = Vec::with_capacity(grid.total_cells());
    for (row, t) in rows {
        edges.extend(row);
        targets.push(t);
    }
    Ok(TransitionGraph {
        cells: grid.total_cells(),
        inputs: k,
        edges,
        targets,
    })
}

impl TransitionGraph {
    pub fn cell_count(&self) -> usize {
        self.cells
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Successors of `cell`, one per input in input-set order.
    pub fn successors(&self, cell: usize) -> &[Node] {
        &self.edges[cell * self.inputs..(cell + 1) * self.inputs]
    }

    pub fn is_target(&self, cell: usize) -> bool {
        self.targets[cell]
    }

    pub fn target_count(&self) -> usize {
        self.targets.iter().filter(|&&t| t).count()
    }

    /// Minimal number of steps from each cell to a target cell or the goal
    /// ball; `None` when no path exists.
    pub fn min_horizons(&self) -> Vec<Option<u32>> {
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); self.cells];
        let mut into_goal = Vec::new();
        for c in 0..self.cells {
            for s in self.successors(c) {
                match *s {
                    Node::Cell(d) => preds[d].push(c),
                    Node::Goal => into_goal.push(c),
                    Node::Outside => {}
                }
            }
        }
        let mut dist: Vec<Option<u32>> = vec![None; self.cells];
        let mut queue = VecDeque::new();
        for c in 0..self.cells {
            if self.targets[c] {
                dist[c] = Some(0);
                queue.push_back(c);
            }
        }
        // the goal node sits at distance 0; its predecessors at 1
        for &c in &into_goal {
            if dist[c].is_none() {
                dist[c] = Some(1);
                queue.push_back(c);
            }
        }
        // seed order matters: distance-0 cells were queued before distance-1
        // ones, so the queue stays sorted by distance
        while let Some(c) = queue.pop_front() {
            let d = dist[c].unwrap();
            for &p in &preds[c] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    /// Graphviz rendering, for small graphs only.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph transitions {\n  goal [shape=doublecircle];\n  outside [shape=box];\n");
        for c in 0..self.cells {
            if self.targets[c] {
                let _ = writeln!(s, "  c{c} [style=filled];");
            }
        }
        for c in 0..self.cells {
            let mut seen = Vec::new();
            for s2 in self.successors(c) {
                if !seen.contains(s2) {
                    seen.push(*s2);
                }
            }
            for n in seen {
                let to = match n {
                    Node::Cell(d) => format!("c{d}"),
                    Node::Goal => "goal".into(),
                    Node::Outside => "outside".into(),
                };
                let _ = writeln!(s, "  c{c} -> {to};");
            }
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{registry, Interval};

    fn setup(name: &str, cells: usize, inputs: usize) -> (SystemModel, Grid, InputSet) {
        let m = registry::builtin(name).unwrap();
        let g = Grid::new(m.state_box().to_vec(), vec![cells; m.n()]).unwrap();
        let u = InputSet::uniform(m.input_box().to_vec(), vec![inputs; m.m()]).unwrap();
        (m, g, u)
    }

    #[test]
    fn edge_count_is_cells_times_inputs() {
        let (m, g, u) = setup("scalar-integrator", 5, 3);
        let graph = build_graph(&m, &g, &u, 0.05, Execution::Sequential).unwrap();
        assert_eq!(graph.edge_count(), 15);
        for c in 0..5 {
            assert_eq!(graph.successors(c).len(), 3);
        }
    }

    #[test]
    fn square_sum_has_no_edges_into_target_from_far_cells() {
        let eps = 0.05;
        let (m, g, u) = setup("square-sum", 41, 21);
        let graph = build_graph(&m, &g, &u, eps, Execution::Sequential).unwrap();
        for c in 0..g.total_cells() {
            let x = g.center_of(c).unwrap()[0];
            if x.abs() > eps.sqrt() {
                for s in graph.successors(c) {
                    match *s {
                        Node::Goal => panic!("cell {c} reaches the goal"),
                        Node::Cell(d) => assert!(!graph.is_target(d)),
                        Node::Outside => {}
                    }
                }
            }
        }
        let h = graph.min_horizons();
        assert!(h.iter().any(Option::is_none));
    }

    #[test]
    fn single_cell_covering_ball() {
        let m = registry::builtin("scalar-integrator").unwrap();
        let g = Grid::new(vec![Interval::new(-1.0, 1.0)], vec![1]).unwrap();
        let u = InputSet::uniform(m.input_box().to_vec(), vec![3]).unwrap();
        let graph = build_graph(&m, &g, &u, 2.0, Execution::Sequential).unwrap();
        assert_eq!(graph.target_count(), 1);
        assert_eq!(graph.min_horizons(), vec![Some(0)]);
    }

    #[test]
    fn scalar_integrator_horizons() {
        let (m, g, u) = setup("scalar-integrator", 41, 21);
        let graph = build_graph(&m, &g, &u, 0.05, Execution::Sequential).unwrap();
        let h = graph.min_horizons();
        assert!(h.iter().all(|d| d.is_some_and(|d| d <= 1)));
        assert_eq!(h.iter().filter(|d| **d == Some(0)).count(), 3);
    }

    #[test]
    fn hand_built_chain() {
        // 0 -> 1 -> 2(target), 3 -> outside
        let graph = TransitionGraph {
            cells: 4,
            inputs: 1,
            edges: vec![Node::Cell(1), Node::Cell(2), Node::Cell(2), Node::Outside],
            targets: vec![false, false, true, false],
        };
        assert_eq!(graph.min_horizons(), vec![Some(2), Some(1), Some(0), None]);
        assert!(graph.to_dot().contains("c0 -> c1;"));
    }
}
