//! Corpus generation, JSON documents, the embedding explorer and the
//! self-test suite.

pub mod explore;
pub mod generate;
pub mod io;
pub mod selftest;
pub mod verify;

pub use explore::{explore_embeddings, EmbeddingRow, EmbeddingTable};
pub use generate::{generate, standard_corpus, BlockPolicy, CorpusSpec, ExponentPair, Generator};
pub use selftest::{run_selftest, SelftestReport};
pub use verify::{verify, VerifyReport};

use crate::error::{Error, Result};

/// Environment variable overriding the equality tolerance.
pub const TOLERANCE_VAR: &str = "AMALGAM_TOL";

/// The tolerance set through `AMALGAM_TOL`, if any.
pub fn tolerance_from_env() -> Result<Option<f64>> {
    match std::env::var(TOLERANCE_VAR) {
        Ok(text) => match text.trim().parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(Some(t)),
            _ => Err(Error::Document(format!("{TOLERANCE_VAR} must be a positive number, got {text:?}"))),
        },
        Err(_) => Ok(None),
    }
}
