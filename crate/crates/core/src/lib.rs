//! Martingale Hardy spaces with amalgam-type norms on finite filtered
//! probability spaces: process functionals, `L_{p,q}` amalgam norms,
//! constructive atomic decompositions with norm certificates, and a
//! Campanato-type dual pairing.

pub mod atomic;
pub mod duality;
pub mod error;
pub mod harness;
pub mod martingale;
pub mod norms;
pub mod space;

pub use atomic::{
    aggregate_eta_norm, certify_bounds, decompose, reconstruct, reconstruction_error, upper_constant,
    verify_atom, AtomDefinition, AtomFlavor, AtomReport, AtomTriple, BoundsCertificate, Decomposition,
};
pub use duality::{
    campanato_norm, certify_duality, pairing, phi, representer, reverse_minkowski_check, CampanatoResult,
    DualityCertificate, SearchMode,
};
pub use error::{Error, Result};
pub use martingale::{EnvelopeFlavor, LadderKind, Martingale, PredictorEnvelope};
pub use norms::{hardy_norm, lp_norm, lpq_norm, HardyNorms, NormKind};
pub use space::{FilteredSpace, Partition, RandomVariable, StoppingTime, StoppingTimeCount};
