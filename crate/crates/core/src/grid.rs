//! Node-centred 1-D meshes on the unit torus or unit interval and their tensor product.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("a grid needs at least {MIN_NODES} nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("at least one of the y and z domains must be a torus")]
    NoTorus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Torus,
    Interval,
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainKind::Torus => "torus",
            DomainKind::Interval => "interval",
        })
    }
}

/// A 1-D domain of unit length: `R/Z` or `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Domain1D {
    pub kind: DomainKind,
}

impl Domain1D {
    pub const TORUS: Domain1D = Domain1D {
        kind: DomainKind::Torus,
    };
    pub const INTERVAL: Domain1D = Domain1D {
        kind: DomainKind::Interval,
    };

    pub fn length(&self) -> f64 {
        1.0
    }

    pub fn is_torus(&self) -> bool {
        self.kind == DomainKind::Torus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D<T> {
    pub domain: Domain1D,
    pub n: usize,
    pub h: T,
    pub nodes: Vec<T>,
}

impl<T: Real> Grid1D<T> {
    /// Torus: `h = 1/n`, nodes `0, h, .., (n-1)h`. Interval: `h = 1/(n-1)`, nodes `0, h, .., 1`.
    pub fn new(domain: Domain1D, n: usize) -> Result<Self, GridError> {
        if n < MIN_NODES {
            return Err(GridError::TooFewNodes(n));
        }
        let cells = match domain.kind {
            DomainKind::Torus => n,
            DomainKind::Interval => n - 1,
        };
        let h = T::one() / T::of(cells as f64);
        let nodes = (0..n)
            .map(|i| {
                if domain.kind == DomainKind::Interval && i == n - 1 {
                    T::one()
                } else {
                    T::of(i as f64) / T::of(cells as f64)
                }
            })
            .collect();
        Ok(Self { domain, n, h, nodes })
    }

    pub fn is_torus(&self) -> bool {
        self.domain.is_torus()
    }

    /// Trapezoid weight of node `i`; the weights sum to one.
    pub fn cell_measure(&self, i: usize) -> Result<T, GridError> {
        if i >= self.n {
            return Err(GridError::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(self.weight(i))
    }

    #[inline]
    pub(crate) fn weight(&self, i: usize) -> T {
        match self.domain.kind {
            DomainKind::Interval if i == 0 || i == self.n - 1 => self.h / T::of(2.0),
            _ => self.h,
        }
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.n).map(|i| self.weight(i)).collect()
    }

    /// Neighbour of `i` on the side `+1`/`-1`; `None` past an interval end.
    pub fn neighbor(&self, i: usize, forward: bool) -> Option<usize> {
        match (self.domain.kind, forward) {
            (DomainKind::Torus, true) => Some((i + 1) % self.n),
            (DomainKind::Torus, false) => Some((i + self.n - 1) % self.n),
            (DomainKind::Interval, true) => (i + 1 < self.n).then_some(i + 1),
            (DomainKind::Interval, false) => i.checked_sub(1),
        }
    }

    /// Coordinate of the interface between node `i` and its forward neighbour.
    pub fn midpoint_after(&self, i: usize) -> T {
        self.nodes[i] + self.h / T::of(2.0)
    }

    /// Index of the node whose cell contains `x` (wrapped or clamped into the domain).
    pub fn cell_of(&self, x: f64) -> usize {
        let h = self.h.as_f64();
        match self.domain.kind {
            DomainKind::Torus => {
                let k = (x.rem_euclid(1.0) / h + 0.5).floor() as usize;
                k % self.n
            }
            DomainKind::Interval => ((x.clamp(0.0, 1.0) / h + 0.5).floor() as usize).min(self.n - 1),
        }
    }
}

/// Tensor-product grid: `gy` carries the slow variable, `gz` the fast one.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<T> {
    pub gy: Grid1D<T>,
    pub gz: Grid1D<T>,
}

impl<T: Real> Grid2D<T> {
    pub fn new(gy: Grid1D<T>, gz: Grid1D<T>) -> Result<Self, GridError> {
        if !gy.is_torus() && !gz.is_torus() {
            return Err(GridError::NoTorus);
        }
        Ok(Self { gy, gz })
    }

    pub fn build(y: Domain1D, ny: usize, z: Domain1D, nz: usize) -> Result<Self, GridError> {
        Self::new(Grid1D::new(y, ny)?, Grid1D::new(z, nz)?)
    }

    pub fn len(&self) -> usize {
        self.gy.n * self.gz.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.gz.n + j
    }

    #[inline]
    pub fn unflatten(&self, k: usize) -> (usize, usize) {
        (k / self.gz.n, k % self.gz.n)
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        self.gy.weight(i) * self.gz.weight(j)
    }

    /// Flattened tensor-product weights.
    pub fn weights(&self) -> Vec<T> {
        let wy = self.gy.weights();
        let wz = self.gz.weights();
        wy.iter().flat_map(|&a| wz.iter().map(move |&b| a * b)).collect()
    }
}
