//! JSON-lines query files, one [`QueryRecord`] per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ComputationGraph, QueryInstance, Structure};
use crate::kg::{EntityId, EntitySet, RelationId};

/// On-disk form of a [`QueryInstance`]. Field order is the file's field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub structure: Structure,
    pub anchors: Vec<EntityId>,
    pub relations: Vec<RelationId>,
    pub negation_flags: Vec<bool>,
    pub answers_train: Vec<EntityId>,
    pub answers_valid: Vec<EntityId>,
    pub answers_test: Vec<EntityId>,
}

#[derive(Debug, Error)]
pub enum QueryIoError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("query has no structure tag and cannot be written")]
    Untagged,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl QueryIoError {
    fn at_line(self, line: usize) -> Self {
        match self {
            QueryIoError::Parse { column, message, .. } => QueryIoError::Parse { line, column, message },
            other => other,
        }
    }
}

impl QueryRecord {
    pub fn from_instance(q: &QueryInstance) -> Result<Self, QueryIoError> {
        let structure = q.structure().ok_or(QueryIoError::Untagged)?;
        Ok(Self {
            structure,
            anchors: q.graph.anchors(),
            relations: q.graph.relations(),
            negation_flags: structure.negation_flags(),
            answers_train: q.answers_train.iter().copied().collect(),
            answers_valid: q.answers_valid.iter().copied().collect(),
            answers_test: q.answers_test.iter().copied().collect(),
        })
    }

    pub fn into_instance(self) -> Result<QueryInstance, String> {
        let graph = ComputationGraph::from_template(self.structure, &self.anchors, &self.relations)
            .map_err(|e| e.to_string())?;
        if self.negation_flags != self.structure.negation_flags() {
            return Err(format!("negation_flags do not match the {} template", self.structure));
        }
        let set = |name: &str, v: Vec<EntityId>| -> Result<EntitySet, String> {
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("{name} must be strictly increasing"));
            }
            Ok(v.into_iter().collect())
        };
        Ok(QueryInstance {
            graph,
            answers_train: set("answers_train", self.answers_train)?,
            answers_valid: set("answers_valid", self.answers_valid)?,
            answers_test: set("answers_test", self.answers_test)?,
        })
    }
}

/// One JSON object, no trailing newline.
pub fn serialize_query(q: &QueryInstance) -> Result<String, QueryIoError> {
    let record = QueryRecord::from_instance(q)?;
    Ok(serde_json::to_string(&record).expect("record serialisation is infallible"))
}

/// Parses one line. Errors report line 1; file readers rewrite the line.
pub fn parse_query(line: &str) -> Result<QueryInstance, QueryIoError> {
    let record: QueryRecord = serde_json::from_str(line).map_err(|e| QueryIoError::Parse {
        line: 1,
        column: e.column(),
        message: e.to_string(),
    })?;
    record
        .into_instance()
        .map_err(|message| QueryIoError::Parse { line: 1, column: 1, message })
}

pub fn write_queries(path: &Path, queries: &[QueryInstance]) -> Result<(), QueryIoError> {
    let io_err = |source| QueryIoError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for q in queries {
        writeln!(out, "{}", serialize_query(q)?).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads a query file; blank lines are skipped.
pub fn read_queries(path: &Path) -> Result<Vec<QueryInstance>, QueryIoError> {
    let io_err = |source| QueryIoError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_query(&line).map_err(|e| e.at_line(i + 1))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{KnowledgeGraph, Triple};
    use crate::query::{sample_query, SampleOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kg() -> KnowledgeGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t: Vec<Triple> = (0..600)
            .map(|_| Triple::new(rng.gen_range(0..80), rng.gen_range(0..4), rng.gen_range(0..80)))
            .collect();
        KnowledgeGraph::new(80, 4, t).unwrap()
    }

    #[test]
    fn field_order_is_fixed() {
        let g = ComputationGraph::from_template(Structure::In2, &[7, 2], &[1, 0]).unwrap();
        let q = QueryInstance {
            graph: g,
            answers_train: [3].into(),
            answers_valid: [3, 5].into(),
            answers_test: [1, 3, 5].into(),
        };
        assert_eq!(
            serialize_query(&q).unwrap(),
            r#"{"structure":"2in","anchors":[7,2],"relations":[1,0],"negation_flags":[false,true],"answers_train":[3],"answers_valid":[3,5],"answers_test":[1,3,5]}"#
        );
        assert_eq!(parse_query(&serialize_query(&q).unwrap()).unwrap(), q);
    }

    #[test]
    fn every_structure_round_trips() {
        let kg = kg();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for s in Structure::ALL {
            let q = sample_query(&kg, s, &mut rng, &SampleOptions::default()).unwrap();
            let back = parse_query(&serialize_query(&q).unwrap()).unwrap();
            assert_eq!(back, q, "{s}");
        }
    }

    #[test]
    fn malformed_records_are_errors() {
        let cases = [
            "{",
            "[]",
            r#"{"structure":"9p","anchors":[0],"relations":[0],"negation_flags":[false],"answers_train":[],"answers_valid":[],"answers_test":[]}"#,
            r#"{"structure":"1p","anchors":[0,1],"relations":[0],"negation_flags":[false],"answers_train":[],"answers_valid":[],"answers_test":[]}"#,
            r#"{"structure":"1p","anchors":[0],"relations":[0],"negation_flags":[true],"answers_train":[],"answers_valid":[],"answers_test":[]}"#,
            r#"{"structure":"1p","anchors":[0],"relations":[0],"negation_flags":[false],"answers_train":[2,1],"answers_valid":[],"answers_test":[]}"#,
            r#"{"structure":"1p","anchors":[-1],"relations":[0],"negation_flags":[false],"answers_train":[],"answers_valid":[],"answers_test":[]}"#,
        ];
        for c in cases {
            assert!(matches!(parse_query(c), Err(QueryIoError::Parse { .. })), "{c}");
        }
    }

    #[test]
    fn file_of_a_thousand() {
        let kg = kg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let queries: Vec<QueryInstance> = (0..1000)
            .map(|i| sample_query(&kg, Structure::ALL[i % 14], &mut rng, &SampleOptions::default()).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        write_queries(&path, &queries).unwrap();
        assert_eq!(read_queries(&path).unwrap(), queries);

        std::fs::write(&path, format!("{}\n\n  {{\"structure\": 3}}\n", serialize_query(&queries[0]).unwrap())).unwrap();
        match read_queries(&path) {
            Err(QueryIoError::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
