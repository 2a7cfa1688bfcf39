//! Full verification of a decomposition document against its martingale.

use serde::{Deserialize, Serialize};

use crate::atomic::{certify_bounds, reconstruct, verify_decomposition, AtomReport, BoundsCertificate, Decomposition};
use crate::error::{Error, Result};
use crate::martingale::{same_space, Martingale};

/// Reconstruction threshold: relative to `max_{n,ω} |f_n|`.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// `max_ω |Σ_k λ_k E_n a^k − f_n|` for each level `n`.
    pub residual_by_level: Vec<f64>,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub atoms: Vec<AtomReport>,
    pub atoms_passed: bool,
    pub reconstruction: ReconstructionReport,
    pub bounds: BoundsCertificate,
    pub trace_consistent: bool,
    pub passed: bool,
}

pub fn reconstruction_report(d: &Decomposition, f: &Martingale) -> Result<ReconstructionReport> {
    if !same_space(d.space(), f.space()) {
        return Err(Error::SpaceMismatch);
    }
    let residual_by_level = (0..=f.horizon())
        .map(|n| Ok((&reconstruct(d, n)? - &f.levels()[n]).max_abs()))
        .collect::<Result<Vec<f64>>>()?;
    let scale = f.levels().iter().map(|l| l.max_abs()).fold(0.0, f64::max);
    let worst = residual_by_level.iter().copied().fold(0.0, f64::max);
    let max_relative_error = if scale > 0.0 { worst / scale } else { worst };
    Ok(ReconstructionReport {
        residual_by_level,
        max_relative_error,
        passed: max_relative_error <= RECONSTRUCTION_TOLERANCE,
    })
}

/// Atom conditions at every admissible `r` in `rs`, exact reconstruction, and
/// the two-sided bounds over `eta_grid`. The trace check is informational.
pub fn verify(f: &Martingale, d: &Decomposition, rs: &[f64], eta_grid: &[f64]) -> Result<VerifyReport> {
    let atoms = verify_decomposition(d, rs)?;
    let atoms_passed = atoms.iter().all(AtomReport::passed);
    let reconstruction = reconstruction_report(d, f)?;
    let bounds = certify_bounds(f, d, eta_grid)?;
    let passed = atoms_passed && reconstruction.passed && bounds.passed();
    Ok(VerifyReport {
        atoms,
        atoms_passed,
        reconstruction,
        bounds,
        trace_consistent: d.trace_is_consistent(),
        passed,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::atomic::{decompose, AtomDefinition, AtomFlavor, DEFAULT_ETA_GRID};
    use crate::space::{FilteredSpace, RandomVariable};

    #[test]
    fn halved_lambda_leaves_half_atom_residual() {
        let space = Arc::new(FilteredSpace::dyadic(2).unwrap());
        let f = Martingale::from_terminal(&space, &RandomVariable::new(vec![2.0, 0.0, -1.0, -1.0])).unwrap();
        let d = decompose(&f, 1.0, 1.0, AtomFlavor::Conditional, AtomDefinition::Simple).unwrap();
        assert!(verify(&f, &d, &[2.0, f64::INFINITY], &DEFAULT_ETA_GRID).unwrap().passed);

        let mut triples = d.triples().to_vec();
        triples[1].lambda /= 2.0;
        let tampered = Decomposition::from_parts(&f, d.flavor(), d.defn(), 1.0, 1.0, triples).unwrap();
        let report = verify(&f, &tampered, &[2.0], &DEFAULT_ETA_GRID).unwrap();
        assert!(!report.passed);
        assert!(!report.reconstruction.passed);
        // λ_0 a^0 / 2 = (1, −1, 0, 0) / 2 is missing at level 2
        assert_eq!(report.reconstruction.residual_by_level, vec![0.0, 0.0, 0.5]);
    }
}
