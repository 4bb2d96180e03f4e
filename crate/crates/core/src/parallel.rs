//! Halo-based domain decomposition of gridded states.
//!
//! A global state of shape `(nx, ny, nz)` (flattened x fastest, then y,
//! then z) is split into rectangular groups of `nx_loc x ny_loc` horizontal
//! cells spanning all vertical levels. Each group reads an input region
//! widened by `n_overlap` halo cells on every horizontal side, with
//! periodic wraparound in both horizontal directions, and writes only its
//! interior cells.

use crate::error::{Error, Result};
use crate::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};

/// Flat index of grid cell `(x, y, z)`.
#[inline]
pub fn flat_index(nx: usize, ny: usize, x: usize, y: usize, z: usize) -> usize {
    x + nx * (y + ny * z)
}

/// Index tables for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupView {
    pub group_id: usize,
    pub group_x: usize,
    pub group_y: usize,
    /// Global flat indices of the interior cells, local x-fastest order.
    pub interior: Vec<usize>,
    /// Global flat indices of the interior-plus-halo input region, local
    /// x-fastest order (halo cells wrap periodically).
    pub input: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDecomposition {
    nx: usize,
    ny: usize,
    nz: usize,
    nx_loc: usize,
    ny_loc: usize,
    n_overlap: usize,
    groups: Vec<GroupView>,
}

impl DomainDecomposition {
    pub fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        nx_loc: usize,
        ny_loc: usize,
        n_overlap: usize,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 || nx_loc == 0 || ny_loc == 0 {
            return Err(Error::config("grid and group dimensions must be positive"));
        }
        if nx % nx_loc != 0 || ny % ny_loc != 0 {
            return Err(Error::config(format!(
                "group dims ({nx_loc}, {ny_loc}) must divide grid dims ({nx}, {ny})"
            )));
        }
        if 2 * n_overlap >= nx_loc.min(ny_loc) && n_overlap > 0 {
            return Err(Error::config(format!(
                "overlap {n_overlap} too large for {nx_loc}x{ny_loc} groups"
            )));
        }
        let n_gx = nx / nx_loc;
        let n_gy = ny / ny_loc;
        let mut groups = Vec::with_capacity(n_gx * n_gy);
        // Lexicographic (group_x, group_y) ordering keeps ids stable.
        for gx in 0..n_gx {
            for gy in 0..n_gy {
                let group_id = gx * n_gy + gy;
                let x0 = gx * nx_loc;
                let y0 = gy * ny_loc;
                let mut interior = Vec::with_capacity(nx_loc * ny_loc * nz);
                let mut input =
                    Vec::with_capacity((nx_loc + 2 * n_overlap) * (ny_loc + 2 * n_overlap) * nz);
                for z in 0..nz {
                    for dy in 0..ny_loc {
                        for dx in 0..nx_loc {
                            interior.push(flat_index(nx, ny, x0 + dx, y0 + dy, z));
                        }
                    }
                }
                let o = n_overlap as isize;
                for z in 0..nz {
                    for dy in -o..(ny_loc as isize + o) {
                        let y = (y0 as isize + dy).rem_euclid(ny as isize) as usize;
                        for dx in -o..(nx_loc as isize + o) {
                            let x = (x0 as isize + dx).rem_euclid(nx as isize) as usize;
                            input.push(flat_index(nx, ny, x, y, z));
                        }
                    }
                }
                groups.push(GroupView {
                    group_id,
                    group_x: gx,
                    group_y: gy,
                    interior,
                    input,
                });
            }
        }
        Ok(DomainDecomposition {
            nx,
            ny,
            nz,
            nx_loc,
            ny_loc,
            n_overlap,
            groups,
        })
    }

    /// Decomposition that treats a length-`n` state vector as a periodic
    /// 1-D ring owned by a single group with no halo.
    pub fn single_group(n_state: usize) -> Result<Self> {
        Self::new(n_state, 1, 1, n_state, 1, 0)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn global_len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// `N_u^loc`: input length including halo.
    pub fn input_len(&self) -> usize {
        (self.nx_loc + 2 * self.n_overlap) * (self.ny_loc + 2 * self.n_overlap) * self.nz
    }

    /// `N_v^loc`: output (interior) length.
    pub fn output_len(&self) -> usize {
        self.nx_loc * self.ny_loc * self.nz
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn local_dims(&self) -> (usize, usize, usize) {
        (
            self.nx_loc + 2 * self.n_overlap,
            self.ny_loc + 2 * self.n_overlap,
            self.nz,
        )
    }

    pub fn n_overlap(&self) -> usize {
        self.n_overlap
    }

    pub fn group_dims(&self) -> (usize, usize) {
        (self.nx_loc, self.ny_loc)
    }

    pub fn groups(&self) -> &[GroupView] {
        &self.groups
    }

    pub fn group(&self, k: usize) -> &GroupView {
        &self.groups[k]
    }

    /// Global `(x, y, z)` coordinates of input-region cell `a` of group `k`.
    pub fn input_cell_coords(&self, k: usize, a: usize) -> (usize, usize, usize) {
        let idx = self.groups[k].input[a];
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        let z = idx / (self.nx * self.ny);
        (x, y, z)
    }

    /// Periodic horizontal Chebyshev distance between two input-region
    /// cells of the same group.
    pub fn input_cell_distance(&self, k: usize, a: usize, b: usize) -> usize {
        let (xa, ya, _) = self.input_cell_coords(k, a);
        let (xb, yb, _) = self.input_cell_coords(k, b);
        let dx = periodic_distance(xa, xb, self.nx);
        let dy = periodic_distance(ya, yb, self.ny);
        dx.max(dy)
    }

    fn check_global_len<T>(&self, global: &ArrayView1<T>) -> Result<()> {
        if global.len() != self.global_len() {
            return Err(Error::shape(
                format!("global state of length {}", self.global_len()),
                format!("{}", global.len()),
            ));
        }
        Ok(())
    }

    /// Local input vector (interior plus halo) for group `k`.
    pub fn gather_local_input<T: Scalar>(
        &self,
        global: ArrayView1<T>,
        k: usize,
    ) -> Result<Array1<T>> {
        self.check_global_len(&global)?;
        let view = &self.groups[k];
        Ok(Array1::from_iter(view.input.iter().map(|&i| global[i])))
    }

    /// Gather without allocating; `out` must have length `input_len()`.
    pub fn gather_into<T: Scalar>(&self, global: &[T], k: usize, out: &mut [T]) {
        let view = &self.groups[k];
        debug_assert_eq!(out.len(), view.input.len());
        for (dst, &i) in out.iter_mut().zip(&view.input) {
            *dst = global[i];
        }
    }

    /// Assemble a global state from per-group interior outputs. Every global
    /// cell is written exactly once.
    pub fn scatter_local_outputs<T: Scalar>(&self, locals: &[Array1<T>]) -> Result<Array1<T>> {
        if locals.len() != self.n_groups() {
            return Err(Error::Incomplete(format!(
                "got {} group outputs, decomposition has {}",
                locals.len(),
                self.n_groups()
            )));
        }
        let mut global = Array1::zeros(self.global_len());
        for (view, local) in self.groups.iter().zip(locals) {
            if local.len() != self.output_len() {
                return Err(Error::shape(
                    format!("local output of length {}", self.output_len()),
                    format!("{} (group {})", local.len(), view.group_id),
                ));
            }
            for (&dst, &v) in view.interior.iter().zip(local.iter()) {
                global[dst] = v;
            }
        }
        Ok(global)
    }

    /// Scatter from a row-per-group matrix into a flat global slice.
    pub fn scatter_rows_into<T: Scalar>(&self, rows: &Array2<T>, global: &mut [T]) {
        debug_assert_eq!(rows.nrows(), self.n_groups());
        debug_assert_eq!(rows.ncols(), self.output_len());
        for (view, row) in self.groups.iter().zip(rows.rows()) {
            for (&dst, &v) in view.interior.iter().zip(row.iter()) {
                global[dst] = v;
            }
        }
    }

    /// Per-group input vectors for the next autonomous step, built from the
    /// complete global prediction of the previous step. Definitionally equal
    /// to gathering after a scatter, implemented as direct reads.
    pub fn halo_exchange<T: Scalar>(&self, predicted_global: ArrayView1<T>) -> Result<Vec<Array1<T>>> {
        self.check_global_len(&predicted_global)?;
        Ok((0..self.n_groups())
            .map(|k| {
                Array1::from_iter(self.groups[k].input.iter().map(|&i| predicted_global[i]))
            })
            .collect())
    }

    /// Gather interior (not input) cells of group `k`; used to build
    /// training targets.
    pub fn gather_interior_into<T: Scalar>(&self, global: &[T], k: usize, out: &mut [T]) {
        let view = &self.groups[k];
        debug_assert_eq!(out.len(), view.interior.len());
        for (dst, &i) in out.iter_mut().zip(&view.interior) {
            *dst = global[i];
        }
    }

    pub fn gather_interior_view<T: Scalar>(
        &self,
        global: ArrayView1<T>,
        k: usize,
        mut out: ArrayViewMut1<T>,
    ) {
        let view = &self.groups[k];
        for (dst, &i) in out.iter_mut().zip(&view.interior) {
            *dst = global[i];
        }
    }
}

#[inline]
fn periodic_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Convenience matching the operation-level API.
pub fn decompose(
    nx: usize,
    ny: usize,
    nz: usize,
    nx_loc: usize,
    ny_loc: usize,
    n_overlap: usize,
) -> Result<DomainDecomposition> {
    DomainDecomposition::new(nx, ny, nz, nx_loc, ny_loc, n_overlap)
}
