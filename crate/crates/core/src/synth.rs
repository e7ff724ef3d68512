//! Feedback synthesis: one input per reachable cell that steps the center
//! one layer closer to the target.
//!
//! Among admissible inputs the smallest Euclidean norm wins, ties going to
//! the lexicographically smallest input. The input set is stored in
//! lexicographic order, so a strict `<` scan implements the tie-break.

use crate::dynamics::{Interval, SystemModel};
use crate::error::{Error, Result};
use crate::grid::{Grid, InputSet};
use crate::par::{self, Execution};
use crate::reach::{check_compatible, classify, ReachLayers, Successor};

/// What a feedback table was computed for. Consumers compare this against
/// their own configuration before using a table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableMeta {
    pub model: String,
    pub n: usize,
    pub m: usize,
    pub state_box: Vec<Interval>,
    pub input_box: Vec<Interval>,
    pub cells_per_dim: Vec<usize>,
    pub input_points: Vec<usize>,
    pub epsilon: f64,
}

impl TableMeta {
    pub fn new(model: &SystemModel, grid: &Grid, inputs: &InputSet, epsilon: f64) -> Self {
        TableMeta {
            model: model.name().to_string(),
            n: model.n(),
            m: model.m(),
            state_box: grid.bounds().to_vec(),
            input_box: inputs.bounds().to_vec(),
            cells_per_dim: grid.cells_per_dim().to_vec(),
            input_points: inputs.points_per_dim().to_vec(),
            epsilon,
        }
    }

    /// First differing field, reported as `MetadataMismatch`.
    pub fn ensure_matches(&self, expected: &TableMeta) -> Result<()> {
        fn cmp<T: PartialEq + std::fmt::Debug>(field: &str, a: &T, b: &T) -> Result<()> {
            if a == b {
                Ok(())
            } else {
                Err(Error::MetadataMismatch {
                    field: field.into(),
                    table: format!("{a:?}"),
                    expected: format!("{b:?}"),
                })
            }
        }
        cmp("model", &self.model, &expected.model)?;
        cmp("n", &self.n, &expected.n)?;
        cmp("m", &self.m, &expected.m)?;
        cmp("state_box", &self.state_box, &expected.state_box)?;
        cmp("input_box", &self.input_box, &expected.input_box)?;
        cmp("cells", &self.cells_per_dim, &expected.cells_per_dim)?;
        cmp("inputs", &self.input_points, &expected.input_points)?;
        cmp("epsilon", &self.epsilon.to_bits(), &expected.epsilon.to_bits())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellControl {
    Unreachable,
    /// `input` is all zeros at layer 0.
    Assigned { layer: u32, input: Vec<f64> },
}

impl CellControl {
    pub fn layer(&self) -> Option<u32> {
        match self {
            CellControl::Unreachable => None,
            CellControl::Assigned { layer, .. } => Some(*layer),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackTable {
    pub meta: TableMeta,
    pub cells: Vec<CellControl>,
}

/// Result of evaluating the feedback law at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Control<'a> {
    Input(&'a [f64]),
    Unreachable,
    Outside,
}

pub fn synthesize(
    layers: &ReachLayers,
    model: &SystemModel,
    grid: &Grid,
    inputs: &InputSet,
    exec: Execution,
) -> Result<FeedbackTable> {
    check_compatible(model, grid, inputs)?;
    if layers.cell_count() != grid.total_cells() {
        return Err(Error::InvalidArgument(format!(
            "layers cover {} cells, grid has {}",
            layers.cell_count(),
            grid.total_cells()
        )));
    }
    let eps = layers.target_radius;
    let membership = &layers.membership;
    let cells = par::try_map_range(exec, grid.total_cells(), |cell| {
        let k = match membership[cell] {
            None => return Ok(CellControl::Unreachable),
            Some(0) => {
                return Ok(CellControl::Assigned {
                    layer: 0,
                    input: vec![0.0; model.m()],
                })
            }
            Some(k) => k,
        };
        let center = grid.center_of(cell)?;
        let mut buf = vec![0.0; model.n()];
        let mut best: Option<(f64, usize)> = None;
        for (j, u) in inputs.iter().enumerate() {
            let s = classify(model, grid, eps, &center, u, &mut buf)
                .map_err(|source| Error::Transition { cell, input: j, source })?;
            let admissible = match s {
                Successor::Goal => true,
                Successor::Cell(d) => membership[d].is_some_and(|i| i < k),
                Successor::Outside => false,
            };
            if admissible {
                let effort: f64 = u.iter().map(|v| v * v).sum();
                if best.is_none_or(|(b, _)| effort < b) {
                    best = Some((effort, j));
                }
            }
        }
        match best {
            Some((_, j)) => Ok(CellControl::Assigned {
                layer: k,
                input: inputs.get(j).to_vec(),
            }),
            None => Err(Error::InternalInconsistency(format!(
                "cell {cell} is in layer {k} but no input descends"
            ))),
        }
    })?;
    Ok(FeedbackTable {
        meta: TableMeta::new(model, grid, inputs, eps),
        cells,
    })
}

impl FeedbackTable {
    pub fn layer_of(&self, cell: usize) -> Option<u32> {
        self.cells.get(cell).and_then(CellControl::layer)
    }

    /// Max finite layer index, i.e. the longest certified horizon.
    pub fn max_layer(&self) -> Option<u32> {
        self.cells.iter().filter_map(CellControl::layer).max()
    }

    /// The feedback law: piecewise constant over cells.
    pub fn lookup(&self, grid: &Grid, x: &[f64]) -> Control<'_> {
        match grid.index_of(x) {
            None => Control::Outside,
            Some(c) => match &self.cells[c] {
                CellControl::Unreachable => Control::Unreachable,
                CellControl::Assigned { input, .. } => Control::Input(input),
            },
        }
    }

    /// Cells whose stored input fails to move the center into the ball or a
    /// strictly lower layer. Empty for every table `synthesize` produces.
    pub fn descent_violations(&self, model: &SystemModel, grid: &Grid) -> Result<Vec<usize>> {
        let eps = self.meta.epsilon;
        let mut bad = Vec::new();
        let mut buf = vec![0.0; model.n()];
        for (cell, c) in self.cells.iter().enumerate() {
            let CellControl::Assigned { layer, input } = c else { continue };
            if *layer == 0 {
                continue;
            }
            let center = grid.center_of(cell)?;
            let s = classify(model, grid, eps, &center, input, &mut buf)
                .map_err(|source| Error::Transition { cell, input: 0, source })?;
            let ok = match s {
                Successor::Goal => true,
                Successor::Cell(d) => self.layer_of(d).is_some_and(|i| i < *layer),
                Successor::Outside => false,
            };
            if !ok {
                bad.push(cell);
            }
        }
        Ok(bad)
    }
}
