use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Model, ModelConfig};

pub const CHECKPOINT_FORMAT: &str = "gammae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("not a checkpoint (format `{0}`)")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint holds {found} parameters but its config needs {expected}")]
    Shape { expected: usize, found: usize },
    #[error("checkpoint is for {found_entities} entities and {found_relations} relations, graph has {entities} and {relations}")]
    Vocabulary { entities: usize, relations: usize, found_entities: usize, found_relations: usize },
    #[error("{0}")]
    Config(String),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    config: ModelConfig,
    entity_count: usize,
    relation_count: usize,
    params: Vec<f64>,
}

impl Model {
    /// JSON checkpoint. Floats are written in shortest round-trip form, so a
    /// reload is bit-exact.
    pub fn to_json(&self) -> String {
        let env = Envelope {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            entity_count: self.entity_count,
            relation_count: self.relation_count,
            params: self.params.clone(),
        };
        serde_json::to_string(&env).expect("checkpoint serialisation is infallible")
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io_err = |source| CheckpointError::Io { path: path.to_path_buf(), source };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        out.write_all(self.to_json().as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = File::open(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        let env: Envelope = serde_json::from_reader(BufReader::new(file))
            .map_err(|source| CheckpointError::Json { path: path.to_path_buf(), source })?;
        Self::from_envelope(env)
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let env: Envelope = serde_json::from_str(text)
            .map_err(|source| CheckpointError::Json { path: PathBuf::from("<string>"), source })?;
        Self::from_envelope(env)
    }

    fn from_envelope(env: Envelope) -> Result<Self, CheckpointError> {
        if env.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(env.format));
        }
        if env.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: env.version });
        }
        env.config.validate().map_err(|e| CheckpointError::Config(e.to_string()))?;
        let expected = Model::param_count(&env.config, env.entity_count, env.relation_count);
        if env.params.len() != expected {
            return Err(CheckpointError::Shape { expected, found: env.params.len() });
        }
        Model::from_params(env.config, env.entity_count, env.relation_count, env.params)
            .map_err(|e| CheckpointError::Config(e.to_string()))
    }

    /// Fails unless the model was built for a graph of this size.
    pub fn check_vocabulary(&self, entities: usize, relations: usize) -> Result<(), CheckpointError> {
        if self.entity_count == entities && self.relation_count == relations {
            Ok(())
        } else {
            Err(CheckpointError::Vocabulary {
                entities,
                relations,
                found_entities: self.entity_count,
                found_relations: self.relation_count,
            })
        }
    }
}
