//! Uniform hash grid for fixed-radius neighbor queries.
//!
//! Cell edge equals the query radius (inflated by a relative 1e-9 so that
//! rounding in `x / cell` can never push a point at exactly `radius` two
//! cells away). A query scans the 27-cell block around the query cell.

use std::collections::HashMap;
use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::geometry::{dist2, VoxelKey};

pub struct GridIndex {
    radius: f64,
    cell: f64,
    /// Positions reordered so each cell is a contiguous run.
    sorted_pos: Vec<[f64; 3]>,
    /// Original index of `sorted_pos[i]`.
    sorted_idx: Vec<u32>,
    cells: HashMap<VoxelKey, (u32, u32)>,
}

impl GridIndex {
    pub fn build(positions: &[[f64; 3]], radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParam(format!(
                "radius must be > 0, got {radius}"
            )));
        }
        let cell = radius * (1.0 + 1e-9);
        let mut keyed: Vec<(VoxelKey, u32)> = positions
            .iter()
            .enumerate()
            .map(|(i, p)| (VoxelKey::of(*p, cell), i as u32))
            .collect();
        keyed.sort_unstable();

        let mut cells = HashMap::new();
        let mut start = 0usize;
        for i in 1..=keyed.len() {
            if i == keyed.len() || keyed[i].0 != keyed[start].0 {
                cells.insert(keyed[start].0, (start as u32, i as u32));
                start = i;
            }
        }
        let sorted_idx: Vec<u32> = keyed.iter().map(|(_, i)| *i).collect();
        let sorted_pos = sorted_idx.iter().map(|&i| positions[i as usize]).collect();
        Ok(Self {
            radius,
            cell,
            sorted_pos,
            sorted_idx,
            cells,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.sorted_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_idx.is_empty()
    }

    /// Calls `f` with the original index of every point within `radius` of
    /// `q` (inclusive), the query point itself included if indexed. Visit
    /// order is unspecified. `f` may break early.
    pub fn visit_within<F>(&self, q: [f64; 3], mut f: F)
    where
        F: FnMut(usize) -> ControlFlow<()>,
    {
        let r2 = self.radius * self.radius;
        let VoxelKey([cx, cy, cz]) = VoxelKey::of(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(&(s, e)) = self.cells.get(&VoxelKey([cx + dx, cy + dy, cz + dz]))
                    else {
                        continue;
                    };
                    for k in s as usize..e as usize {
                        if dist2(q, self.sorted_pos[k]) <= r2 {
                            if let ControlFlow::Break(()) = f(self.sorted_idx[k] as usize) {
                                return;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Number of indexed points within `radius` of `q`, stopping once
    /// `limit` is reached.
    pub fn count_within(&self, q: [f64; 3], limit: usize) -> usize {
        let mut n = 0;
        self.visit_within(q, |_| {
            n += 1;
            if n >= limit {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        n
    }

    /// Sorted original indices within `radius` of `q`.
    pub fn within(&self, q: [f64; 3]) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_within(q, |i| {
            out.push(i);
            ControlFlow::Continue(())
        });
        out.sort_unstable();
        out
    }
}
