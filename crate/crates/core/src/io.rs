//! JSON task-set files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Architecture, TaskSpec};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetFile {
    pub architecture: Architecture,
    pub tasks: Vec<TaskSpec>,
    /// Free-form provenance such as the generator seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl TaskSetFile {
    pub fn new(architecture: Architecture, tasks: Vec<TaskSpec>) -> Self {
        TaskSetFile { architecture, tasks, meta: None }
    }

    /// Nodes and edges sorted by id, tasks by id.
    pub fn canonicalize(&mut self) {
        for t in &mut self.tasks {
            t.canonicalize();
        }
        self.tasks.sort_by_key(|t| t.id);
        self.architecture.engines.sort_by_key(|e| e.id);
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Pretty-printed canonical form.
    pub fn to_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.canonicalize();
        let mut text = serde_json::to_string_pretty(&copy)?;
        text.push('\n');
        Ok(text)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
