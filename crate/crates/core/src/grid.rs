//! Uniform quantization of the state box and the input box.
//!
//! Cells are half-open `[lo, hi)` per dimension except the last one, which
//! is closed, so every point of the box has exactly one cell. Cell indices
//! are row-major: the last coordinate varies fastest.

use crate::dynamics::Interval;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    bounds: Vec<Interval>,
    cells_per_dim: Vec<usize>,
    widths: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
}

impl Grid {
    pub fn new(bounds: Vec<Interval>, cells_per_dim: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != cells_per_dim.len() {
            return Err(Error::InvalidGrid(format!(
                "{} intervals but {} resolutions",
                bounds.len(),
                cells_per_dim.len()
            )));
        }
        if let Some(d) = cells_per_dim.iter().position(|&c| c == 0) {
            return Err(Error::InvalidGrid(format!("dimension {d} has zero cells")));
        }
        let widths: Vec<f64> = bounds
            .iter()
            .zip(&cells_per_dim)
            .map(|(b, &c)| b.width() / c as f64)
            .collect();
        if let Some(d) = widths.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidGrid(format!("dimension {d} has non-positive cell width")));
        }
        let mut strides = vec![1usize; cells_per_dim.len()];
        for d in (0..cells_per_dim.len() - 1).rev() {
            strides[d] = strides[d + 1]
                .checked_mul(cells_per_dim[d + 1])
                .ok_or_else(|| Error::InvalidGrid("too many cells".into()))?;
        }
        let total = strides[0]
            .checked_mul(cells_per_dim[0])
            .filter(|&t| t < u32::MAX as usize - 2)
            .ok_or_else(|| Error::InvalidGrid("too many cells".into()))?;
        Ok(Grid {
            bounds,
            cells_per_dim,
            widths,
            strides,
            total,
        })
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn total_cells(&self) -> usize {
        self.total
    }

    pub fn cell_widths(&self) -> &[f64] {
        &self.widths
    }

    /// The cell containing `x`, or `None` when `x` lies outside the box
    /// (or has the wrong dimension, or a NaN coordinate).
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut index = 0;
        for d in 0..self.dim() {
            let b = self.bounds[d];
            let v = x[d];
            if !b.contains(v) {
                return None;
            }
            let k = (((v - b.lo) / self.widths[d]).floor() as usize).min(self.cells_per_dim[d] - 1);
            index += k * self.strides[d];
        }
        Some(index)
    }

    /// Per-dimension coordinates of cell `i`.
    pub fn coords(&self, i: usize) -> Result<Vec<usize>> {
        self.check(i)?;
        Ok(self
            .strides
            .iter()
            .zip(&self.cells_per_dim)
            .map(|(s, c)| (i / s) % c)
            .collect())
    }

    pub fn center_of(&self, i: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.center_into(i, &mut out)?;
        Ok(out)
    }

    pub fn center_into(&self, i: usize, out: &mut [f64]) -> Result<()> {
        self.check(i)?;
        for d in 0..self.dim() {
            let k = (i / self.strides[d]) % self.cells_per_dim[d];
            out[d] = self.bounds[d].lo + (k as f64 + 0.5) * self.widths[d];
        }
        Ok(())
    }

    fn check(&self, i: usize) -> Result<()> {
        if i < self.total {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                total: self.total,
            })
        }
    }
}

/// Finite set of candidate inputs: a uniform grid over the input box with an
/// odd number of points per dimension, stored in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSet {
    bounds: Vec<Interval>,
    points_per_dim: Vec<usize>,
    points: Vec<f64>,
}

impl InputSet {
    /// Per dimension the points are `lo + j·(hi − lo)/(p − 1)`, with the
    /// point nearest zero pinned to exactly `0.0`.
    pub fn uniform(bounds: Vec<Interval>, points_per_dim: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != points_per_dim.len() {
            return Err(Error::InvalidGrid(format!(
                "{} input intervals but {} resolutions",
                bounds.len(),
                points_per_dim.len()
            )));
        }
        if let Some(d) = points_per_dim.iter().position(|p| p % 2 == 0) {
            return Err(Error::InvalidGrid(format!(
                "input dimension {d} needs an odd number of points so 0 is representable, got {}",
                points_per_dim[d]
            )));
        }
        let mut axes = Vec::with_capacity(bounds.len());
        for (d, (b, &p)) in bounds.iter().zip(&points_per_dim).enumerate() {
            if !b.contains(0.0) {
                return Err(Error::InvalidGrid(format!("input interval {d} does not contain 0")));
            }
            let mut axis: Vec<f64> = if p == 1 {
                vec![0.0]
            } else {
                let step = b.width() / (p - 1) as f64;
                (0..p)
                    .map(|j| if j == p - 1 { b.hi } else { b.lo + j as f64 * step })
                    .collect()
            };
            let nearest = (0..p)
                .min_by(|&a, &c| axis[a].abs().total_cmp(&axis[c].abs()))
                .unwrap();
            axis[nearest] = 0.0;
            axes.push(axis);
        }
        let count: usize = points_per_dim.iter().product();
        let m = bounds.len();
        let mut points = Vec::with_capacity(count * m);
        for j in 0..count {
            let mut rem = j;
            let start = points.len();
            points.resize(start + m, 0.0);
            for d in (0..m).rev() {
                points[start + d] = axes[d][rem % points_per_dim[d]];
                rem /= points_per_dim[d];
            }
        }
        Ok(InputSet {
            bounds,
            points_per_dim,
            points,
        })
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn points_per_dim(&self) -> &[usize] {
        &self.points_per_dim
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, j: usize) -> &[f64] {
        let m = self.dim();
        &self.points[j * m..(j + 1) * m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim())
    }

    /// Index of the all-zero input.
    pub fn zero_index(&self) -> usize {
        self.iter()
            .position(|u| u.iter().all(|&v| v == 0.0))
            .expect("input set contains the origin")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(cells: usize) -> Grid {
        Grid::new(vec![Interval::new(-1.0, 1.0)], vec![cells]).unwrap()
    }

    #[test]
    fn index_examples() {
        let g = line(4);
        assert_eq!(g.index_of(&[-1.0]), Some(0));
        assert_eq!(g.index_of(&[0.99]), Some(3));
        assert_eq!(g.index_of(&[1.0]), Some(3));
        assert_eq!(g.index_of(&[-0.5]), Some(1));
        assert_eq!(g.index_of(&[2.0]), None);
        assert_eq!(g.index_of(&[f64::NAN]), None);
    }

    #[test]
    fn center_examples() {
        let g = line(4);
        assert_eq!(g.center_of(0).unwrap(), vec![-0.75]);
        assert_eq!(g.center_of(3).unwrap(), vec![0.75]);
        assert!(matches!(g.center_of(4), Err(Error::IndexOutOfRange { index: 4, total: 4 })));
        let sq = Grid::new(vec![Interval::new(-1.0, 1.0); 2], vec![2, 2]).unwrap();
        assert_eq!(sq.center_of(0).unwrap(), vec![-0.5, -0.5]);
        assert_eq!(sq.center_of(1).unwrap(), vec![-0.5, 0.5]);
        assert_eq!(sq.coords(2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(Grid::new(vec![Interval::new(1.0, 1.0)], vec![3]).is_err());
        assert!(Grid::new(vec![Interval::new(-1.0, 1.0)], vec![0]).is_err());
        assert!(Grid::new(vec![], vec![]).is_err());
    }

    #[test]
    fn input_set_layout() {
        let s = InputSet::uniform(vec![Interval::new(-1.0, 1.0)], vec![21]).unwrap();
        assert_eq!(s.len(), 21);
        assert_eq!(s.get(0), &[-1.0]);
        assert_eq!(s.get(20), &[1.0]);
        assert_eq!(s.get(10), &[0.0]);
        assert_eq!(s.zero_index(), 10);

        let s = InputSet::uniform(vec![Interval::new(-1.0, 1.0), Interval::new(-2.0, 0.5)], vec![3, 5]).unwrap();
        assert_eq!(s.len(), 15);
        let pts: Vec<&[f64]> = s.iter().collect();
        assert!(pts.windows(2).all(|w| w[0].partial_cmp(w[1]) == Some(std::cmp::Ordering::Less)));
        assert!(pts.iter().any(|u| u == &[0.0, 0.0]));

        assert!(InputSet::uniform(vec![Interval::new(-1.0, 1.0)], vec![4]).is_err());
        assert_eq!(InputSet::uniform(vec![Interval::new(-1.0, 1.0)], vec![1]).unwrap().get(0), &[0.0]);
    }

    proptest! {
        #[test]
        fn center_round_trip(c0 in 1usize..40, c1 in 1usize..40, lo in -5.0f64..-0.1, hi in 0.1f64..5.0) {
            let g = Grid::new(vec![Interval::new(lo, hi), Interval::new(-1.0, 1.0)], vec![c0, c1]).unwrap();
            for i in 0..g.total_cells() {
                prop_assert_eq!(g.index_of(&g.center_of(i).unwrap()), Some(i));
            }
        }

        #[test]
        fn points_in_box_have_a_cell(x in -1.0f64..=1.0, y in -3.0f64..=2.0, c0 in 1usize..30, c1 in 1usize..30) {
            let g = Grid::new(vec![Interval::new(-1.0, 1.0), Interval::new(-3.0, 2.0)], vec![c0, c1]).unwrap();
            let i = g.index_of(&[x, y]).unwrap();
            // the claimed cell really contains the point
            let c = g.center_of(i).unwrap();
            for (d, w) in g.cell_widths().iter().enumerate() {
                prop_assert!((c[d] - [x, y][d]).abs() <= w / 2.0 * (1.0 + 1e-12));
            }
        }
    }
}
