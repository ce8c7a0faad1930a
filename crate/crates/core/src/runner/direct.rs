//! Dense direct solve of the pressure system, used as a reference.

use thiserror::Error;

use crate::grid::{compensated_sum, max_abs, BoundaryCondition, ProblemInstance};

/// Largest grid the dense solver accepts.
pub const MAX_DIRECT_CELLS: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum DirectError {
    #[error("dense solve limited to {MAX_DIRECT_CELLS} cells, got {0}")]
    TooLarge(usize),
    #[error("matrix is singular at column {0}")]
    Singular(usize),
    #[error("solution residual {residual:e} exceeds {bound:e}")]
    Inaccurate { residual: f64, bound: f64 },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Dense operator assembled cell by cell from densities; row `k` is cell
/// `k = i * ny + j`.
pub fn assemble(inst: &ProblemInstance) -> Vec<Vec<f64>> {
    let (nx, ny) = (inst.nx, inst.ny);
    let n = nx * ny;
    let periodic = inst.bc == BoundaryCondition::Periodic;
    let rho = |i: usize, j: usize| inst.density[i * ny + j];
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..nx {
        for j in 0..ny {
            let k = i * ny + j;
            let here = rho(i, j);
            let neighbors = [
                (i.checked_sub(1).or(periodic.then(|| nx - 1)).map(|ii| (ii, j)), inst.dx),
                ((i + 1 < nx).then_some(i + 1).or(periodic.then_some(0)).map(|ii| (ii, j)), inst.dx),
                (j.checked_sub(1).or(periodic.then(|| ny - 1)).map(|jj| (i, jj)), inst.dy),
                ((j + 1 < ny).then_some(j + 1).or(periodic.then_some(0)).map(|jj| (i, jj)), inst.dy),
            ];
            for (nb, h) in neighbors {
                match nb {
                    Some((ii, jj)) => {
                        let c = 1.0 / (h * h * (here + rho(ii, jj)));
                        a[k][ii * ny + jj] += c;
                        a[k][k] -= c;
                    }
                    // mirrored density across a fixed-zero wall
                    None => a[k][k] -= 1.0 / (h * h * 2.0 * here),
                }
            }
        }
    }
    a
}

/// Gaussian elimination with partial pivoting; rows whose multiplier is zero
/// are skipped, which keeps the banded systems here cheap.
fn eliminate(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, DirectError> {
    let n = b.len();
    let scale = a.iter().map(|r| max_abs(r)).fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap_or(col);
        if !(a[piv][col].abs() > 1e-14 * scale) {
            return Err(DirectError::Singular(col));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        let nz: Vec<usize> = (col + 1..n).filter(|&c| pivot_row[c] != 0.0).collect();
        for (off, row) in lower.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            if f == 0.0 {
                continue;
            }
            row[col] = 0.0;
            for &c in &nz {
                row[c] -= f * pivot_row[c];
            }
            b[col + 1 + off] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// Solves `L p = b` directly. Under periodic wrap the rhs mean is removed and
/// cell 0 is pinned to zero.
pub fn direct_solve(inst: &ProblemInstance) -> Result<Vec<f64>, DirectError> {
    let n = inst.cells();
    if n > MAX_DIRECT_CELLS {
        return Err(DirectError::TooLarge(n));
    }
    inst.validate()?;
    let mut a = assemble(inst);
    let mut b = inst.rhs.clone();
    if inst.bc == BoundaryCondition::Periodic {
        let mean = compensated_sum(&b) / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        a[0].iter_mut().for_each(|v| *v = 0.0);
        a[0][0] = 1.0;
        b[0] = 0.0;
    }
    let p = eliminate(a, b)?;
    let coeffs = inst.coefficients()?;
    let residual = inst.residual_max(&coeffs, &p);
    let bound = 1e-10 * inst.rhs_scale().max(f64::MIN_POSITIVE);
    if residual > bound {
        return Err(DirectError::Inaccurate { residual, bound });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{manufactured_instance, Provenance};
    use crate::runner::mean_subtracted;

    fn chain(rhs: Vec<f64>) -> ProblemInstance {
        ProblemInstance {
            nx: 3,
            ny: 1,
            dx: 1.0,
            dy: 1.0,
            dt: 1.0,
            bc: BoundaryCondition::FixedZero,
            density: vec![1.0; 3],
            rhs,
            reference: None,
            provenance: Provenance::Custom,
        }
    }

    #[test]
    fn three_cell_chain_by_hand() {
        // Every face, interior or mirrored wall, has coefficient 1/2, and each
        // cell has four faces, so the system is tridiag(1/2, -2, 1/2) p = 1.
        // Symmetry gives p0 = p2 = a, p1 = c with
        //   -2a + c/2 = 1  and  a - 2c = 1,  so  a = -5/7, c = -6/7.
        let p = direct_solve(&chain(vec![1.0, 1.0, 1.0])).unwrap();
        let (a, c) = (-5.0 / 7.0, -6.0 / 7.0);
        for (got, want) in p.iter().zip([a, c, a]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn manufactured_matches_reference() {
        let inst = manufactured_instance(16, 8).unwrap();
        let p = mean_subtracted(&direct_solve(&inst).unwrap());
        let r = mean_subtracted(inst.reference.as_ref().unwrap());
        let err = p.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn constant_shift_keeps_residual() {
        let inst = manufactured_instance(8, 8).unwrap();
        let coeffs = inst.coefficients().unwrap();
        let p = direct_solve(&inst).unwrap();
        let base = inst.residual_max(&coeffs, &p);
        for c in [-3.0, 0.5, 10.0] {
            let shifted: Vec<f64> = p.iter().map(|v| v + c).collect();
            assert!((inst.residual_max(&coeffs, &shifted) - base).abs() < 1e-11);
        }
    }

    #[test]
    fn dense_matrix_matches_operator() {
        let inst = crate::problems::bubble_instance(
            8,
            8,
            &crate::problems::BubbleSpec::default_for(1.0, 1.0),
            0.1,
            4,
        )
        .unwrap();
        let a = assemble(&inst);
        let coeffs = inst.coefficients().unwrap();
        let p: Vec<f64> = (0..64).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let lp = coeffs.apply(&p);
        for k in 0..64 {
            let dense: f64 = a[k].iter().zip(&p).map(|(x, y)| x * y).sum();
            let magnitude: f64 = a[k].iter().zip(&p).map(|(x, y)| (x * y).abs()).sum();
            assert!((dense - lp[k]).abs() <= 1e-14 * magnitude);
        }
    }

    #[test]
    fn too_large_is_rejected() {
        let inst = manufactured_instance(128, 64).unwrap();
        assert_eq!(direct_solve(&inst), Err(DirectError::TooLarge(8192)));
    }
}
