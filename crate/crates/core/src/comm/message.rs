use serde::{Deserialize, Serialize};

use crate::grid::BoundaryVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaloKind {
    /// New boundary values.
    Boundary,
    /// Repeats the last boundary values to carry a convergence flag change.
    FlagOnly,
}

/// Payload of one halo put.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaloMessage {
    pub values: BoundaryVector,
    pub sender_iter: u64,
    pub sender_converged: bool,
    pub kind: HaloKind,
}

impl HaloMessage {
    /// What a receiver sees before any put: zeros.
    pub fn initial(side: crate::grid::Side, ny: usize) -> Self {
        HaloMessage {
            values: BoundaryVector::zeros(side, ny),
            sender_iter: 0,
            sender_converged: false,
            kind: HaloKind::Boundary,
        }
    }
}
