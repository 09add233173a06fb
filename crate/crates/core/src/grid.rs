//! Tensor-product parameter grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::MAX_PARAMS;

/// Minimum node count per axis.
pub const MIN_NODES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Self {
        Axis { lo, hi, nodes }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    /// Parameter value of node `k`. Endpoints are hit exactly.
    pub fn coord(&self, k: usize) -> f64 {
        if k + 1 == self.nodes {
            self.hi
        } else {
            self.lo + k as f64 * self.spacing()
        }
    }
}

/// A box `∏[a_i, b_i]` sampled with `m_i` equispaced nodes per axis.
///
/// Nodes closer than `margin` layers to any face are boundary nodes: the
/// finite-difference backend cannot form centered stencils there, so every
/// field, integral and check lives on the interior nodes only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    axes: Vec<Axis>,
    margin: usize,
}

impl ParameterGrid {
    /// Axes with `hi == lo` are accepted and describe a zero-measure window;
    /// the finite-difference backend rejects them.
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_PARAMS {
            return Err(Error::InvalidGrid(format!("dimension {} outside 1..={MAX_PARAMS}", axes.len())));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.nodes < MIN_NODES {
                return Err(Error::GridTooSmall { axis: i, nodes: a.nodes, required: MIN_NODES });
            }
            if !(a.lo.is_finite() && a.hi.is_finite()) || a.hi < a.lo {
                return Err(Error::InvalidGrid(format!("axis {i}: interval [{}, {}]", a.lo, a.hi)));
            }
        }
        Ok(ParameterGrid { axes, margin: 0 })
    }

    /// The same box and resolution on every axis.
    pub fn uniform(window: &[(f64, f64)], nodes: usize) -> Result<Self> {
        Self::new(window.iter().map(|&(lo, hi)| Axis::new(lo, hi, nodes)).collect())
    }

    /// Set the stencil margin. Every axis must keep at least one interior node.
    pub fn with_margin(mut self, margin: usize) -> Result<Self> {
        for (i, a) in self.axes.iter().enumerate() {
            let required = MIN_NODES.max(2 * margin + 1);
            if a.nodes < required {
                return Err(Error::GridTooSmall { axis: i, nodes: a.nodes, required });
            }
        }
        self.margin = margin;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn spacing(&self, i: usize) -> f64 {
        self.axes[i].spacing()
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    pub fn is_degenerate(&self) -> bool {
        self.axes.iter().any(|a| a.hi == a.lo)
    }

    pub fn coords(&self, index: &[usize]) -> Vec<f64> {
        index.iter().zip(&self.axes).map(|(&k, a)| a.coord(k)).collect()
    }

    /// Number of interior nodes along axis `i`.
    pub fn interior_len(&self, i: usize) -> usize {
        self.axes[i].nodes - 2 * self.margin
    }

    pub fn interior_count(&self) -> usize {
        (0..self.dim()).map(|i| self.interior_len(i)).product()
    }

    /// Interior node multi-indices in lexicographic order (last axis fastest).
    pub fn interior_nodes(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(self.interior_count());
        let mut idx = vec![self.margin; n];
        loop {
            out.push(idx.clone());
            let mut axis = n;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.axes[axis].nodes - self.margin {
                    break;
                }
                idx[axis] = self.margin;
            }
        }
    }

    /// Position of a full-grid multi-index within the interior ordering.
    pub fn interior_position(&self, index: &[usize]) -> Option<usize> {
        let mut pos = 0;
        for (i, &k) in index.iter().enumerate() {
            if k < self.margin || k >= self.axes[i].nodes - self.margin {
                return None;
            }
            pos = pos * self.interior_len(i) + (k - self.margin);
        }
        Some(pos)
    }

    /// Composite trapezoid cell volume at an interior node: `∏ h_i`, halved
    /// once per axis on which the node lies on a face of the interior box.
    pub fn trapezoid_weight(&self, index: &[usize]) -> f64 {
        index
            .iter()
            .zip(&self.axes)
            .map(|(&k, a)| {
                let h = a.spacing();
                if k == self.margin || k + 1 + self.margin == a.nodes {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    /// Number of node layers between `index` and the nearest face of the full grid.
    pub fn layers_from_face(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.axes).map(|(&k, a)| k.min(a.nodes - 1 - k)).min().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_endpoints() {
        let g = ParameterGrid::uniform(&[(-1.0, 1.0), (0.0, 1.0)], 5).unwrap();
        assert_eq!(g.spacing(0), 0.5);
        assert_eq!(g.axis(1).coord(4), 1.0);
        assert_eq!(g.interior_count(), 25);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(ParameterGrid::uniform(&[(0.0, 1.0)], 4), Err(Error::GridTooSmall { .. })));
        let g = ParameterGrid::uniform(&[(0.0, 1.0)], 6).unwrap();
        assert!(g.clone().with_margin(3).is_err());
        assert!(g.with_margin(2).is_ok());
        assert!(ParameterGrid::uniform(&[(1.0, 0.0)], 9).is_err());
    }

    #[test]
    fn interior_ordering_is_lexicographic() {
        let g = ParameterGrid::uniform(&[(0.0, 1.0), (0.0, 1.0)], 9).unwrap().with_margin(2).unwrap();
        let nodes = g.interior_nodes();
        assert_eq!(nodes.len(), 25);
        assert_eq!(nodes[0], vec![2, 2]);
        assert_eq!(nodes[1], vec![2, 3]);
        assert_eq!(nodes[24], vec![6, 6]);
        for (p, idx) in nodes.iter().enumerate() {
            assert_eq!(g.interior_position(idx), Some(p));
        }
        assert_eq!(g.interior_position(&[1, 4]), None);
    }

    #[test]
    fn trapezoid_weights_sum_to_volume() {
        let g = ParameterGrid::uniform(&[(-1.0, 1.0), (0.0, 3.0)], 7).unwrap();
        let total: f64 = g.interior_nodes().iter().map(|i| g.trapezoid_weight(i)).sum();
        assert!((total - 6.0).abs() < 1e-14);
    }
}
