//! JSON documents. Every top-level document carries `"schema": "amalgam/1"`;
//! the canonical text form has sorted keys and shortest round-trip floats.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::atomic::{AtomDefinition, AtomFlavor, AtomTriple, Decomposition};
use crate::error::{Error, Result};
use crate::martingale::Martingale;
use crate::space::{FilteredSpace, RandomVariable, StoppingTime};

use super::tolerance_from_env;
use std::sync::Arc;

pub const SCHEMA: &str = "amalgam/1";

/// Reals that may be infinite, written as a JSON number or one of the
/// strings `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *x {
            v if v.is_finite() => s.serialize_f64(v),
            v if v.is_nan() => s.serialize_str("nan"),
            v if v > 0.0 => s.serialize_str("inf"),
            _ => s.serialize_str("-inf"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

fn schema() -> String {
    SCHEMA.to_string()
}

/// A finite filtered space. Cells and blocks list outcome indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDoc {
    #[serde(default = "schema")]
    pub schema: String,
    pub outcomes: Vec<String>,
    pub prob: Vec<f64>,
    pub filtration: Vec<Vec<Vec<usize>>>,
    pub blocks: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl SpaceDoc {
    pub fn from_space(space: &FilteredSpace) -> Self {
        Self {
            schema: schema(),
            outcomes: space.outcomes().to_vec(),
            prob: space.prob().to_vec(),
            filtration: space.filtration().iter().map(|p| p.cells().to_vec()).collect(),
            blocks: space.blocks().cells().to_vec(),
            tolerance: None,
        }
    }

    /// Builds the space. The tolerance is taken from the document, then from
    /// `AMALGAM_TOL`, then the default.
    pub fn to_space(&self) -> Result<FilteredSpace> {
        check_schema(&self.schema)?;
        let space = FilteredSpace::new(
            self.outcomes.clone(),
            self.prob.clone(),
            self.filtration.clone(),
            self.blocks.clone(),
        )?;
        Ok(match self.tolerance.map(Ok).or_else(|| tolerance_from_env().transpose()).transpose()? {
            Some(tol) => space.with_tolerance(tol),
            None => space,
        })
    }
}

/// A martingale given either by its full level table or by its terminal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleDoc {
    #[serde(default = "schema")]
    pub schema: String,
    pub space: SpaceDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<f64>>,
}

impl MartingaleDoc {
    pub fn from_martingale(f: &Martingale) -> Self {
        Self {
            schema: schema(),
            space: SpaceDoc::from_space(f.space()),
            levels: Some(f.levels().iter().map(|l| l.values().to_vec()).collect()),
            terminal: None,
        }
    }

    pub fn to_martingale(&self) -> Result<Martingale> {
        check_schema(&self.schema)?;
        let space = Arc::new(self.space.to_space()?);
        match (&self.levels, &self.terminal) {
            (Some(levels), None) => {
                Martingale::new(space, levels.iter().map(|l| RandomVariable::new(l.clone())).collect())
            }
            (None, Some(terminal)) => Martingale::from_terminal(&space, &RandomVariable::new(terminal.clone())),
            _ => Err(Error::Document("martingale needs exactly one of \"levels\" or \"terminal\"".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomVariableDoc {
    #[serde(default = "schema")]
    pub schema: String,
    pub values: Vec<f64>,
}

impl RandomVariableDoc {
    pub fn new(x: &RandomVariable) -> Self {
        Self {
            schema: schema(),
            values: x.values().to_vec(),
        }
    }

    pub fn to_random_variable(&self) -> Result<RandomVariable> {
        check_schema(&self.schema)?;
        Ok(RandomVariable::new(self.values.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleDoc {
    pub k: i32,
    pub lambda: f64,
    /// `null` encodes `ν = ∞`.
    pub nu: StoppingTime,
    pub atom_terminal: RandomVariable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionDoc {
    #[serde(default = "schema")]
    pub schema: String,
    pub flavor: AtomFlavor,
    pub defn: AtomDefinition,
    #[serde(with = "extended_real")]
    pub p: f64,
    #[serde(with = "extended_real")]
    pub q: f64,
    pub triples: Vec<TripleDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_grid: Option<Vec<f64>>,
}

impl DecompositionDoc {
    pub fn from_decomposition(d: &Decomposition, eta_grid: Option<Vec<f64>>) -> Self {
        Self {
            schema: schema(),
            flavor: d.flavor(),
            defn: d.defn(),
            p: d.p(),
            q: d.q(),
            triples: d
                .triples()
                .iter()
                .map(|t| TripleDoc {
                    k: t.k,
                    lambda: t.lambda,
                    nu: t.nu.clone(),
                    atom_terminal: t.atom.clone(),
                })
                .collect(),
            source_norm: Some(d.source_norm()),
            eta_grid,
        }
    }

    /// Attaches the triples to `f`; the source norm is recomputed from `f`.
    pub fn to_decomposition(&self, f: &Martingale) -> Result<Decomposition> {
        check_schema(&self.schema)?;
        let triples = self
            .triples
            .iter()
            .map(|t| AtomTriple {
                k: t.k,
                lambda: t.lambda,
                nu: t.nu.clone(),
                atom: t.atom_terminal.clone(),
                flavor: self.flavor,
                defn: self.defn,
            })
            .collect();
        Decomposition::from_parts(f, self.flavor, self.defn, self.p, self.q, triples)
    }
}

/// A list of martingales, optionally with the generator settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusDoc {
    #[serde(default = "schema")]
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<super::CorpusSpec>,
    pub martingales: Vec<MartingaleDoc>,
}

impl CorpusDoc {
    pub fn new(spec: Option<super::CorpusSpec>, corpus: &[Martingale]) -> Self {
        Self {
            schema: schema(),
            spec,
            martingales: corpus.iter().map(MartingaleDoc::from_martingale).collect(),
        }
    }

    pub fn to_corpus(&self) -> Result<Vec<Martingale>> {
        check_schema(&self.schema)?;
        self.martingales.iter().map(MartingaleDoc::to_martingale).collect()
    }
}

fn check_schema(found: &str) -> Result<()> {
    if found == SCHEMA {
        Ok(())
    } else {
        Err(Error::Document(format!("unsupported schema {found:?}, expected {SCHEMA:?}")))
    }
}

/// Serializes to a JSON value and stamps a `"schema"` field on objects.
pub fn to_document<T: Serialize>(value: &T) -> Result<Value> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Document(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.insert("schema".into(), Value::String(SCHEMA.into()));
    }
    Ok(v)
}

/// Canonical text: sorted keys, shortest round-trip floats, two-space indent.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let v = to_document(value)?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Document(e.to_string()))
}

/// Parses a document, reporting the line and column of syntax and field errors.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Document(format!("line {}, column {}: {e}", e.line(), e.column())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::decompose;

    fn example() -> Martingale {
        let space = Arc::new(FilteredSpace::dyadic(2).unwrap().with_level_blocks(1).unwrap());
        Martingale::from_terminal(&space, &RandomVariable::new(vec![2.0, 0.0, -1.0, -1.0])).unwrap()
    }

    #[test]
    fn martingale_round_trip() {
        let f = example();
        let text = to_canonical_string(&MartingaleDoc::from_martingale(&f)).unwrap();
        let doc: MartingaleDoc = from_json_str(&text).unwrap();
        assert_eq!(doc.to_martingale().unwrap(), f);
        assert_eq!(to_canonical_string(&doc).unwrap(), text);
    }

    #[test]
    fn decomposition_round_trip_with_infinite_q() {
        let f = example();
        let d = decompose(&f, 1.0, f64::INFINITY, AtomFlavor::Conditional, AtomDefinition::Weighted).unwrap();
        let doc = DecompositionDoc::from_decomposition(&d, None);
        let text = to_canonical_string(&doc).unwrap();
        assert!(text.contains("\"inf\""));
        let back: DecompositionDoc = from_json_str(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(to_canonical_string(&back).unwrap(), text);
        let rebuilt = back.to_decomposition(&f).unwrap();
        assert_eq!(rebuilt.triples(), d.triples());
    }

    #[test]
    fn never_is_null() {
        let f = example();
        let d = decompose(&f, 2.0, 2.0, AtomFlavor::Conditional, AtomDefinition::Simple).unwrap();
        let v = to_document(&DecompositionDoc::from_decomposition(&d, None)).unwrap();
        assert_eq!(v["triples"][1]["nu"], serde_json::json!([1, 1, null, null]));
        assert_eq!(v["schema"], SCHEMA);
    }

    #[test]
    fn malformed_input_reports_position() {
        let err = from_json_str::<MartingaleDoc>("{\n  \"space\": 3\n}").unwrap_err();
        match err {
            Error::Document(msg) => assert!(msg.starts_with("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_rejected() {
        let mut doc = MartingaleDoc::from_martingale(&example());
        doc.schema = "amalgam/0".into();
        assert!(doc.to_martingale().is_err());
    }
}
