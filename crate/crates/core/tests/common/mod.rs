#![allow(dead_code)]

use etpoisson::grid::{max_nan, BoundaryCondition, ProblemInstance};
use etpoisson::problems::{bubble_instance, BubbleSpec, Provenance};
use etpoisson::runner::direct::direct_solve;
use etpoisson::runner::{mean_subtracted, RunReport};

pub fn bubble_64x32() -> ProblemInstance {
    bubble_instance(64, 32, &BubbleSpec::default_for(1.0, 0.5), 0.1, 1).unwrap()
}

/// Max-norm distance between the mean-subtracted run solution and the
/// mean-subtracted dense solve.
pub fn oracle_error(inst: &ProblemInstance, report: &RunReport) -> f64 {
    let reference = mean_subtracted(&direct_solve(inst).unwrap());
    reference
        .iter()
        .zip(report.mean_subtracted_solution())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, max_nan)
}

/// Fixed-zero 16x8 grid whose only source sits in the top two rows, so with
/// two PEs the lower one starts out with nothing to do.
pub fn delayed_source() -> ProblemInstance {
    let (nx, ny) = (16, 8);
    let mut rhs = vec![0.0; nx * ny];
    for v in &mut rhs[(nx - 2) * ny..] {
        *v = 1.0;
    }
    let inst = ProblemInstance {
        nx,
        ny,
        dx: 1.0 / nx as f64,
        dy: 1.0 / nx as f64,
        dt: 1.0,
        bc: BoundaryCondition::FixedZero,
        density: vec![1.0; nx * ny],
        rhs,
        reference: None,
        provenance: Provenance::Custom,
    };
    inst.validate().unwrap();
    inst
}
