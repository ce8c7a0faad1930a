//! Variable-coefficient pressure Poisson discretization on a 2-D cell grid.
//!
//! Cells are indexed `(i, j)` with `i` along the first (decomposed) dimension
//! and `j` along the second; storage is row-major, `idx = i * ny + j`. The
//! operator is
//!
//! ```text
//! L(p)_ij = cx[i+1/2] (p[i+1,j] - p[i,j]) - cx[i-1/2] (p[i,j] - p[i-1,j])
//!         + cy[j+1/2] (p[i,j+1] - p[i,j]) - cy[j-1/2] (p[i,j] - p[i,j-1])
//! ```
//!
//! with face coefficients `cx = 1 / (dx^2 (rho_a + rho_b))` and likewise for
//! `cy`. For fixed-zero boundaries the pressure outside the domain is zero and
//! the boundary face uses the mirrored density `2 rho`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::Provenance;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("density must be strictly positive, found {value} at cell ({i}, {j})")]
    NonPositiveDensity { i: usize, j: usize, value: f64 },
    #[error("field `{field}` has {actual} entries, expected {expected}")]
    ShapeMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("grid spacing must be positive and finite (dx = {dx}, dy = {dy})")]
    BadSpacing { dx: f64, dy: f64 },
    #[error("grid must have at least one cell in each direction ({nx}x{ny})")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("periodic right-hand side violates compatibility: sum = {sum:e}, max |b| = {max_abs:e}")]
    Incompatible { sum: f64, max_abs: f64 },
    #[error("zero diagonal at owned cell ({i}, {j}) of PE {owner}")]
    ZeroDiagonal { owner: usize, i: usize, j: usize },
    #[error("{nx} rows cannot be split evenly across {n_pes} PEs")]
    IndivisibleDecomposition { nx: usize, n_pes: usize },
    #[error("row range [{r0}, {r1}) is invalid for a grid with {nx} rows")]
    BadRowRange { r0: usize, r1: usize, nx: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    Periodic,
    FixedZero,
}

/// A single pressure solve: geometry, frozen density and right-hand side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub bc: BoundaryCondition,
    pub density: Vec<f64>,
    pub rhs: Vec<f64>,
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
    pub provenance: Provenance,
}

/// Relative slack on the periodic compatibility check.
pub const COMPATIBILITY_TOL: f64 = 1e-12;

impl ProblemInstance {
    /// Checks positivity, field shapes and (for periodic grids) that the
    /// right-hand side sums to zero.
    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx == 0 || self.ny == 0 {
            return Err(GridError::EmptyGrid {
                nx: self.nx,
                ny: self.ny,
            });
        }
        let dx_ok = self.dx.is_finite() && self.dx > 0.0;
        let dy_ok = self.dy.is_finite() && self.dy > 0.0;
        if !dx_ok || !dy_ok {
            return Err(GridError::BadSpacing {
                dx: self.dx,
                dy: self.dy,
            });
        }
        let n = self.nx * self.ny;
        check_len("density", &self.density, n)?;
        check_len("rhs", &self.rhs, n)?;
        if let Some(r) = &self.reference {
            check_len("reference", r, n)?;
        }
        check_positive(&self.density, self.ny)?;
        if self.bc == BoundaryCondition::Periodic {
            let sum = compensated_sum(&self.rhs);
            let max_abs = max_abs(&self.rhs);
            if sum.abs() > COMPATIBILITY_TOL * max_abs {
                return Err(GridError::Incompatible { sum, max_abs });
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn coefficients(&self) -> Result<FaceCoefficients, GridError> {
        build_coefficients(
            &self.density,
            self.nx,
            self.ny,
            self.dx,
            self.dy,
            self.bc,
        )
    }

    /// `max |L(p) - b|` over the whole grid.
    pub fn residual_max(&self, coeffs: &FaceCoefficients, p: &[f64]) -> f64 {
        let lp = coeffs.apply(p);
        lp.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, max_nan)
    }

    pub fn rhs_scale(&self) -> f64 {
        max_abs(&self.rhs)
    }
}

fn check_len(field: &'static str, v: &[f64], expected: usize) -> Result<(), GridError> {
    if v.len() != expected {
        return Err(GridError::ShapeMismatch {
            field,
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

fn check_positive(density: &[f64], ny: usize) -> Result<(), GridError> {
    match density.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
        Some(k) => Err(GridError::NonPositiveDensity {
            i: k / ny,
            j: k % ny,
            value: density[k],
        }),
        None => Ok(()),
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(v: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Like `f64::max`, but NaN wins, so a diverged field never reads as small.
#[inline]
pub fn max_nan(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Per-face coefficients of the pressure operator.
///
/// `x[k * ny + j]` is the face between cells `(k - 1, j)` and `(k, j)` for
/// `k in 0..=nx`; `y[i * (ny + 1) + k]` is the face between `(i, k - 1)` and
/// `(i, k)` for `k in 0..=ny`. Under periodic wrap the two outermost faces in
/// each direction are the same face and hold the same value.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceCoefficients {
    pub nx: usize,
    pub ny: usize,
    pub bc: BoundaryCondition,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn face(rho_a: f64, rho_b: f64, h2: f64) -> f64 {
    1.0 / (h2 * (rho_a + rho_b))
}

pub fn build_coefficients(
    density: &[f64],
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    bc: BoundaryCondition,
) -> Result<FaceCoefficients, GridError> {
    if nx == 0 || ny == 0 {
        return Err(GridError::EmptyGrid { nx, ny });
    }
    check_len("density", density, nx * ny)?;
    check_positive(density, ny)?;
    let rho = |i: usize, j: usize| density[i * ny + j];
    let (dx2, dy2) = (dx * dx, dy * dy);

    let mut x = vec![0.0; (nx + 1) * ny];
    for k in 0..=nx {
        for j in 0..ny {
            x[k * ny + j] = if k > 0 && k < nx {
                face(rho(k - 1, j), rho(k, j), dx2)
            } else {
                match bc {
                    BoundaryCondition::Periodic => face(rho(nx - 1, j), rho(0, j), dx2),
                    BoundaryCondition::FixedZero => {
                        let i = if k == 0 { 0 } else { nx - 1 };
                        face(rho(i, j), rho(i, j), dx2)
                    }
                }
            };
        }
    }

    let mut y = vec![0.0; nx * (ny + 1)];
    for i in 0..nx {
        for k in 0..=ny {
            y[i * (ny + 1) + k] = if k > 0 && k < ny {
                face(rho(i, k - 1), rho(i, k), dy2)
            } else {
                match bc {
                    BoundaryCondition::Periodic => face(rho(i, ny - 1), rho(i, 0), dy2),
                    BoundaryCondition::FixedZero => {
                        let j = if k == 0 { 0 } else { ny - 1 };
                        face(rho(i, j), rho(i, j), dy2)
                    }
                }
            };
        }
    }

    Ok(FaceCoefficients { nx, ny, bc, x, y })
}

impl FaceCoefficients {
    /// Coefficient toward lower `i` (south), higher `i` (north), lower `j`
    /// (west) and higher `j` (east) for cell `(i, j)`.
    #[inline]
    pub fn south(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.ny + j]
    }
    #[inline]
    pub fn north(&self, i: usize, j: usize) -> f64 {
        self.x[(i + 1) * self.ny + j]
    }
    #[inline]
    pub fn west(&self, i: usize, j: usize) -> f64 {
        self.y[i * (self.ny + 1) + j]
    }
    #[inline]
    pub fn east(&self, i: usize, j: usize) -> f64 {
        self.y[i * (self.ny + 1) + j + 1]
    }

    /// Applies the operator to a full-grid field.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(p.len(), nx * ny, "field length does not match grid");
        let periodic = self.bc == BoundaryCondition::Periodic;
        let at = |i: Option<usize>, j: Option<usize>| match (i, j) {
            (Some(i), Some(j)) => p[i * ny + j],
            _ => 0.0,
        };
        let wrap = |k: usize, d: isize, n: usize| -> Option<usize> {
            let m = k as isize + d;
            if m >= 0 && (m as usize) < n {
                Some(m as usize)
            } else if periodic {
                Some(m.rem_euclid(n as isize) as usize)
            } else {
                None
            }
        };
        let mut out = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let c = p[i * ny + j];
                let s = at(wrap(i, -1, nx), Some(j));
                let n = at(wrap(i, 1, nx), Some(j));
                let w = at(Some(i), wrap(j, -1, ny));
                let e = at(Some(i), wrap(j, 1, ny));
                out[i * ny + j] = self.north(i, j) * (n - c) - self.south(i, j) * (c - s)
                    + self.east(i, j) * (e - c)
                    - self.west(i, j) * (c - w);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// First owned row, `r0`.
    Bottom,
    /// Last owned row, `r1 - 1`.
    Top,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Bottom, Side::Top];

    pub fn index(self) -> usize {
        match self {
            Side::Bottom => 0,
            Side::Top => 1,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }
}

/// Pressure values along one edge of a subdomain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVector {
    pub side: Side,
    pub values: Vec<f64>,
}

impl BoundaryVector {
    pub fn zeros(side: Side, ny: usize) -> Self {
        BoundaryVector {
            side,
            values: vec![0.0; ny],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        l1_norm(&self.values)
    }
}

/// Sum of absolute values.
pub fn l1_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).sum()
}

/// Row ranges of an even 1-D decomposition along the first dimension.
pub fn partition_rows(nx: usize, n_pes: usize) -> Result<Vec<(usize, usize)>, GridError> {
    if n_pes == 0 || !nx.is_multiple_of(n_pes) {
        return Err(GridError::IndivisibleDecomposition { nx, n_pes });
    }
    let rows = nx / n_pes;
    Ok((0..n_pes).map(|k| (k * rows, (k + 1) * rows)).collect())
}

/// One PE's strip of rows `[r0, r1)` plus one ghost row on each side.
///
/// Local row 0 is the bottom ghost (global row `r0 - 1`), local row
/// `rows + 1` the top ghost (global row `r1`). The sweep only writes owned
/// rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Subdomain {
    pub owner: usize,
    pub r0: usize,
    pub r1: usize,
    pub ny: usize,
    periodic_y: bool,
    /// Owns every row of a periodic grid, so the ghost rows mirror its own
    /// first and last rows.
    wraps_self: bool,
    p: Vec<f64>,
    coeff_n: Vec<f64>,
    coeff_s: Vec<f64>,
    coeff_e: Vec<f64>,
    coeff_w: Vec<f64>,
    inv_diag: Vec<f64>,
    rhs: Vec<f64>,
}

impl Subdomain {
    pub fn new(
        instance: &ProblemInstance,
        coeffs: &FaceCoefficients,
        owner: usize,
        r0: usize,
        r1: usize,
    ) -> Result<Self, GridError> {
        let (nx, ny) = (instance.nx, instance.ny);
        if r0 >= r1 || r1 > nx {
            return Err(GridError::BadRowRange { r0, r1, nx });
        }
        let rows = r1 - r0;
        let mut sub = Subdomain {
            owner,
            r0,
            r1,
            ny,
            periodic_y: instance.bc == BoundaryCondition::Periodic,
            wraps_self: instance.bc == BoundaryCondition::Periodic && r0 == 0 && r1 == nx,
            p: vec![0.0; (rows + 2) * ny],
            coeff_n: Vec::with_capacity(rows * ny),
            coeff_s: Vec::with_capacity(rows * ny),
            coeff_e: Vec::with_capacity(rows * ny),
            coeff_w: Vec::with_capacity(rows * ny),
            inv_diag: Vec::with_capacity(rows * ny),
            rhs: instance.rhs[r0 * ny..r1 * ny].to_vec(),
        };
        for i in r0..r1 {
            for j in 0..ny {
                let (n, s) = (coeffs.north(i, j), coeffs.south(i, j));
                let (e, w) = (coeffs.east(i, j), coeffs.west(i, j));
                let d = n + s + e + w;
                if !(d > 0.0) {
                    return Err(GridError::ZeroDiagonal { owner, i, j });
                }
                sub.coeff_n.push(n);
                sub.coeff_s.push(s);
                sub.coeff_e.push(e);
                sub.coeff_w.push(w);
                sub.inv_diag.push(1.0 / d);
            }
        }
        Ok(sub)
    }

    pub fn rows(&self) -> usize {
        self.r1 - self.r0
    }

    /// Owned values, row-major.
    pub fn owned(&self) -> &[f64] {
        &self.p[self.ny..(self.rows() + 1) * self.ny]
    }

    pub fn owned_mut(&mut self) -> &mut [f64] {
        let (ny, rows) = (self.ny, self.rows());
        &mut self.p[ny..(rows + 1) * ny]
    }

    /// Whole local field including both ghost rows.
    pub fn with_ghosts(&self) -> &[f64] {
        &self.p
    }

    pub fn with_ghosts_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    pub fn local_rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn ghost_row(&self, side: Side) -> usize {
        match side {
            Side::Bottom => 0,
            Side::Top => self.rows() + 1,
        }
    }

    fn edge_row(&self, side: Side) -> usize {
        match side {
            Side::Bottom => 1,
            Side::Top => self.rows(),
        }
    }

    pub fn ghost(&self, side: Side) -> &[f64] {
        let r = self.ghost_row(side);
        &self.p[r * self.ny..(r + 1) * self.ny]
    }

    /// Overwrites the ghost row on `side`.
    ///
    /// Panics if `values.len() != ny`.
    pub fn set_ghost(&mut self, side: Side, values: &[f64]) {
        assert_eq!(values.len(), self.ny, "ghost row length must equal ny");
        let r = self.ghost_row(side);
        self.p[r * self.ny..(r + 1) * self.ny].copy_from_slice(values);
    }

    /// The owned edge row on `side`.
    pub fn boundary(&self, side: Side) -> BoundaryVector {
        let r = self.edge_row(side);
        BoundaryVector {
            side,
            values: self.p[r * self.ny..(r + 1) * self.ny].to_vec(),
        }
    }

    #[inline]
    fn neighbors_y(&self, j: usize) -> (Option<usize>, Option<usize>) {
        let ny = self.ny;
        let west = if j > 0 {
            Some(j - 1)
        } else if self.periodic_y {
            Some(ny - 1)
        } else {
            None
        };
        let east = if j + 1 < ny {
            Some(j + 1)
        } else if self.periodic_y {
            Some(0)
        } else {
            None
        };
        (west, east)
    }

    /// Sum of coefficient-weighted neighbor values at local cell `(r, j)`,
    /// `r` counted including the bottom ghost.
    #[inline]
    fn neighbor_sum(&self, r: usize, j: usize, k: usize) -> f64 {
        let ny = self.ny;
        let (west, east) = self.neighbors_y(j);
        let pw = west.map_or(0.0, |w| self.p[r * ny + w]);
        let pe = east.map_or(0.0, |e| self.p[r * ny + e]);
        self.coeff_n[k] * self.p[(r + 1) * ny + j]
            + self.coeff_s[k] * self.p[(r - 1) * ny + j]
            + self.coeff_e[k] * pe
            + self.coeff_w[k] * pw
    }

    /// Operator value at local cell `(r, j)` in flux-difference form.
    #[inline]
    fn apply_at(&self, r: usize, j: usize, k: usize) -> f64 {
        let ny = self.ny;
        let c = self.p[r * ny + j];
        let (west, east) = self.neighbors_y(j);
        let pw = west.map_or(0.0, |w| self.p[r * ny + w]);
        let pe = east.map_or(0.0, |e| self.p[r * ny + e]);
        self.coeff_n[k] * (self.p[(r + 1) * ny + j] - c) - self.coeff_s[k] * (c - self.p[(r - 1) * ny + j])
            + self.coeff_e[k] * (pe - c)
            - self.coeff_w[k] * (c - pw)
    }

    /// One lexicographic SOR pass over the owned cells. Returns the bottom and
    /// top boundary vectors after the pass.
    pub fn sor_sweep(&mut self, omega: f64) -> [BoundaryVector; 2] {
        debug_assert!(omega > 0.0 && omega < 2.0, "omega must lie in (0, 2)");
        let (ny, rows) = (self.ny, self.rows());
        if self.wraps_self {
            self.p.copy_within(rows * ny..(rows + 1) * ny, 0);
        }
        for r in 1..=rows {
            if self.wraps_self && r == rows {
                // the last row sees this sweep's first row
                self.p.copy_within(ny..2 * ny, (rows + 1) * ny);
            }
            self.relax_row(r, omega);
        }
        if self.wraps_self {
            self.sync_wrap();
        }
        [self.boundary(Side::Bottom), self.boundary(Side::Top)]
    }

    pub fn wraps_self(&self) -> bool {
        self.wraps_self
    }

    fn sync_wrap(&mut self) {
        let (ny, rows) = (self.ny, self.rows());
        self.p.copy_within(rows * ny..(rows + 1) * ny, 0);
        self.p.copy_within(ny..2 * ny, (rows + 1) * ny);
    }

    /// `max |L(p) - b|` over owned cells, using the current ghost rows (or
    /// the wrapped own rows when the subdomain covers a periodic grid).
    pub fn local_residual(&self) -> f64 {
        if self.wraps_self {
            let mut synced = self.clone();
            synced.sync_wrap();
            return synced.residual_with_ghosts();
        }
        self.residual_with_ghosts()
    }

    fn residual_with_ghosts(&self) -> f64 {
        let ny = self.ny;
        let mut worst: f64 = 0.0;
        for r in 1..=self.rows() {
            let base = (r - 1) * ny;
            let rhs = &self.rhs[base..base + ny];
            for j in [0, ny - 1] {
                worst = max_nan(worst, (self.apply_at(r, j, base + j) - rhs[j]).abs());
            }
            if ny < 3 {
                continue;
            }
            let south = &self.p[(r - 1) * ny..r * ny];
            let center = &self.p[r * ny..(r + 1) * ny];
            let north = &self.p[(r + 1) * ny..(r + 2) * ny];
            let cn = &self.coeff_n[base..base + ny];
            let cs = &self.coeff_s[base..base + ny];
            let ce = &self.coeff_e[base..base + ny];
            let cw = &self.coeff_w[base..base + ny];
            let mut row_worst: f64 = 0.0;
            let mut nan = false;
            for (j, win) in center.windows(3).enumerate() {
                let (w, c, e) = (win[0], win[1], win[2]);
                let k = j + 1;
                let lp = cn[k] * (north[k] - c) - cs[k] * (c - south[k]) + ce[k] * (e - c) - cw[k] * (c - w);
                let d = (lp - rhs[k]).abs();
                nan |= d.is_nan();
                row_worst = if d > row_worst { d } else { row_worst };
            }
            worst = max_nan(worst, if nan { f64::NAN } else { row_worst });
        }
        worst
    }

    /// Relaxes one owned row in place, left to right. The two end cells take
    /// the general path that knows about the `y` boundary.
    fn relax_row(&mut self, r: usize, omega: f64) {
        let ny = self.ny;
        let base = (r - 1) * ny;
        self.relax_cell(r, 0, base, omega);
        if ny >= 3 {
            let (below, above) = self.p.split_at_mut(r * ny);
            let south = &below[(r - 1) * ny..];
            let (center, rest) = above.split_at_mut(ny);
            let north = &rest[..ny];
            let cn = &self.coeff_n[base..base + ny];
            let cs = &self.coeff_s[base..base + ny];
            let ce = &self.coeff_e[base..base + ny];
            let cw = &self.coeff_w[base..base + ny];
            let inv = &self.inv_diag[base..base + ny];
            let rhs = &self.rhs[base..base + ny];
            // Everything but the west neighbor is known up front, so the
            // left-to-right dependency is a single multiply-add per cell.
            let mut west = center[0];
            for j in 1..ny - 1 {
                let rest = cn[j] * north[j] + cs[j] * south[j] + ce[j] * center[j + 1] - rhs[j];
                let w = omega * inv[j];
                let fresh = (1.0 - omega) * center[j] + w * rest + w * cw[j] * west;
                center[j] = fresh;
                west = fresh;
            }
        }
        if ny >= 2 {
            self.relax_cell(r, ny - 1, base + ny - 1, omega);
        }
    }

    #[inline]
    fn relax_cell(&mut self, r: usize, j: usize, k: usize, omega: f64) {
        let gs = (self.neighbor_sum(r, j, k) - self.rhs[k]) * self.inv_diag[k];
        let cell = &mut self.p[r * self.ny + j];
        *cell = (1.0 - omega) * *cell + omega * gs;
    }
}
