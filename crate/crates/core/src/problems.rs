//! Desk-scale problem generators: a manufactured periodic case with a known
//! discrete solution and a synthetic multiphase "bubble" case.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{compensated_sum, BoundaryCondition, GridError, ProblemInstance};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("grid {nx}x{ny} is too small, need at least 4x4")]
    TooSmall { nx: usize, ny: usize },
    #[error("{field} has {actual} entries, expected {expected}")]
    Shape {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid bubble spec: {0}")]
    BadBubble(String),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("instance file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where an instance came from, stored alongside it for reproducibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Manufactured,
    Bubble { spec: BubbleSpec, seed: u64 },
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    /// Bubble centers in domain units.
    pub centers: Vec<(f64, f64)>,
    pub radius: f64,
    pub rho_inside: f64,
    pub rho_outside: f64,
}

pub const DEFAULT_DENSITY_RATIO: f64 = 1000.0;

impl BubbleSpec {
    /// Three gas bubbles in liquid at a 1000:1 density ratio, placed at fixed
    /// fractions of an `lx` by `ly` domain.
    pub fn default_for(lx: f64, ly: f64) -> Self {
        let radius = 0.2 * lx.min(ly);
        BubbleSpec {
            centers: vec![
                (0.25 * lx, 0.5 * ly),
                (0.55 * lx, 0.35 * ly),
                (0.8 * lx, 0.6 * ly),
            ],
            radius,
            rho_inside: 1.0 / DEFAULT_DENSITY_RATIO,
            rho_outside: 1.0,
        }
    }

    pub fn validate(&self, lx: f64, ly: f64) -> Result<(), ProblemError> {
        if !(self.radius > 0.0) {
            return Err(ProblemError::BadBubble(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.rho_inside > 0.0 && self.rho_outside > 0.0) {
            return Err(ProblemError::BadBubble(format!(
                "densities must be positive, got {} and {}",
                self.rho_inside, self.rho_outside
            )));
        }
        for &(cx, cy) in &self.centers {
            let r = self.radius;
            if cx - r < 0.0 || cx + r > lx || cy - r < 0.0 || cy + r > ly {
                return Err(ProblemError::BadBubble(format!(
                    "bubble at ({cx}, {cy}) with radius {r} does not fit in {lx}x{ly}"
                )));
            }
        }
        Ok(())
    }

    /// Whether the point lies inside any bubble (boundary included).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let r2 = self.radius * self.radius;
        self.centers
            .iter()
            .any(|&(cx, cy)| (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2)
    }
}

/// Predicted velocity on the staggered grid.
///
/// `u[k * ny + j]` sits on the x-face between cells `(k - 1, j)` and `(k, j)`
/// for `k in 0..=nx`; `v[i * (ny + 1) + k]` on the y-face between `(i, k - 1)`
/// and `(i, k)` for `k in 0..=ny`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedVelocity {
    pub nx: usize,
    pub ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PredictedVelocity {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        PredictedVelocity {
            nx,
            ny,
            u: vec![0.0; (nx + 1) * ny],
            v: vec![0.0; nx * (ny + 1)],
        }
    }

    fn check(&self) -> Result<(), ProblemError> {
        let (nx, ny) = (self.nx, self.ny);
        if self.u.len() != (nx + 1) * ny {
            return Err(ProblemError::Shape {
                field: "u_star",
                expected: (nx + 1) * ny,
                actual: self.u.len(),
            });
        }
        if self.v.len() != nx * (ny + 1) {
            return Err(ProblemError::Shape {
                field: "v_star",
                expected: nx * (ny + 1),
                actual: self.v.len(),
            });
        }
        Ok(())
    }

    /// Smooth periodic field built from a handful of seeded Fourier modes.
    /// The outermost faces in each direction carry identical values.
    pub fn smooth_random(nx: usize, ny: usize, dx: f64, dy: f64, seed: u64) -> Self {
        const MODES: usize = 6;
        let (lx, ly) = (nx as f64 * dx, ny as f64 * dy);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64, f64, f64)> {
            (0..MODES)
                .map(|_| {
                    let kx = rng.random_range(1..=3) as f64;
                    let ky = rng.random_range(1..=3) as f64;
                    let amp = rng.random_range(-1.0..1.0);
                    let phase = rng.random_range(0.0..2.0 * PI);
                    (kx, ky, amp, phase)
                })
                .collect()
        };
        let u_modes = modes(&mut rng);
        let v_modes = modes(&mut rng);
        let eval = |modes: &[(f64, f64, f64, f64)], x: f64, y: f64| {
            modes
                .iter()
                .map(|&(kx, ky, a, ph)| a * (2.0 * PI * (kx * x / lx + ky * y / ly) + ph).sin())
                .sum::<f64>()
        };

        let mut vel = PredictedVelocity::zeros(nx, ny);
        for k in 0..nx {
            for j in 0..ny {
                vel.u[k * ny + j] = eval(&u_modes, k as f64 * dx, (j as f64 + 0.5) * dy);
            }
        }
        for j in 0..ny {
            vel.u[nx * ny + j] = vel.u[j];
        }
        for i in 0..nx {
            for k in 0..ny {
                vel.v[i * (ny + 1) + k] = eval(&v_modes, (i as f64 + 0.5) * dx, k as f64 * dy);
            }
            vel.v[i * (ny + 1) + ny] = vel.v[i * (ny + 1)];
        }
        vel
    }
}

/// Discrete divergence of the predicted velocity scaled by `1 / (2 dt)`.
pub fn rhs_from_velocity(
    vel: &PredictedVelocity,
    dx: f64,
    dy: f64,
    dt: f64,
) -> Result<Vec<f64>, ProblemError> {
    vel.check()?;
    if !(dt > 0.0) {
        return Err(ProblemError::BadTimeStep(dt));
    }
    let (nx, ny) = (vel.nx, vel.ny);
    let scale = 1.0 / (2.0 * dt);
    let mut rhs = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let du = (vel.u[(i + 1) * ny + j] - vel.u[i * ny + j]) / dx;
            let dv = (vel.v[i * (ny + 1) + j + 1] - vel.v[i * (ny + 1) + j]) / dy;
            rhs[i * ny + j] = scale * (du + dv);
        }
    }
    Ok(rhs)
}

fn subtract_mean(v: &mut [f64]) {
    let mean = compensated_sum(v) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Unit-density periodic instance whose right-hand side is the discrete
/// operator applied to `sin(2 pi x / Lx) cos(2 pi y / Ly)`, so that field is
/// the exact discrete solution up to a constant.
pub fn manufactured_instance(nx: usize, ny: usize) -> Result<ProblemInstance, ProblemError> {
    if nx < 4 || ny < 4 {
        return Err(ProblemError::TooSmall { nx, ny });
    }
    let dx = 1.0 / nx as f64;
    let dy = dx;
    let (lx, ly) = (nx as f64 * dx, ny as f64 * dy);
    let mut reference = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let x = (i as f64 + 0.5) * dx;
            let y = (j as f64 + 0.5) * dy;
            reference[i * ny + j] = (2.0 * PI * x / lx).sin() * (2.0 * PI * y / ly).cos();
        }
    }
    let mut inst = ProblemInstance {
        nx,
        ny,
        dx,
        dy,
        dt: 1.0,
        bc: BoundaryCondition::Periodic,
        density: vec![1.0; nx * ny],
        rhs: Vec::new(),
        reference: None,
        provenance: Provenance::Manufactured,
    };
    let mut rhs = inst.coefficients()?.apply(&reference);
    // Telescoping makes the sum vanish up to rounding; remove that rounding.
    subtract_mean(&mut rhs);
    inst.rhs = rhs;
    inst.reference = Some(reference);
    inst.validate()?;
    Ok(inst)
}

/// Periodic two-phase instance: density `rho_inside` within any bubble,
/// `rho_outside` elsewhere, right-hand side from a seeded smooth velocity.
pub fn bubble_instance(
    nx: usize,
    ny: usize,
    spec: &BubbleSpec,
    dt: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if nx < 4 || ny < 4 {
        return Err(ProblemError::TooSmall { nx, ny });
    }
    let dx = 1.0 / nx as f64;
    let dy = dx;
    spec.validate(nx as f64 * dx, ny as f64 * dy)?;
    let mut density = vec![spec.rho_outside; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            if spec.contains((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy) {
                density[i * ny + j] = spec.rho_inside;
            }
        }
    }
    let vel = PredictedVelocity::smooth_random(nx, ny, dx, dy, seed);
    let mut rhs = rhs_from_velocity(&vel, dx, dy, dt)?;
    subtract_mean(&mut rhs);
    let inst = ProblemInstance {
        nx,
        ny,
        dx,
        dy,
        dt,
        bc: BoundaryCondition::Periodic,
        density,
        rhs,
        reference: None,
        provenance: Provenance::Bubble {
            spec: spec.clone(),
            seed,
        },
    };
    inst.validate()?;
    Ok(inst)
}

pub fn write_instance<W: Write>(inst: &ProblemInstance, w: W) -> Result<(), ProblemError> {
    serde_json::to_writer(w, inst)?;
    Ok(())
}

/// Reads and validates an instance.
pub fn read_instance<R: Read>(r: R) -> Result<ProblemInstance, ProblemError> {
    let inst: ProblemInstance = serde_json::from_reader(r)?;
    inst.validate()?;
    Ok(inst)
}
