//! Repository of analytical and learned wireless models available to the
//! coordinator.
//!
//! A registry is persisted as a flat JSON document:
//! `{"version": 1, "models": [ModelDescriptor, ...]}`. Unknown fields are
//! rejected and duplicate ids are a parse error.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const REGISTRY_FORMAT_VERSION: u32 = 1;

/// The registry shipped with the crate: the six built-in solver descriptors.
pub const DEFAULT_REGISTRY_JSON: &str = include_str!("../data/default_registry.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    BandwidthAllocation,
    PowerAllocation,
    ChannelEstimation,
    BeamPrediction,
    Baseline,
}

impl TaskType {
    pub const ALL: [TaskType; 5] = [
        TaskType::BandwidthAllocation,
        TaskType::PowerAllocation,
        TaskType::ChannelEstimation,
        TaskType::BeamPrediction,
        TaskType::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::BandwidthAllocation => "bandwidth_allocation",
            TaskType::PowerAllocation => "power_allocation",
            TaskType::ChannelEstimation => "channel_estimation",
            TaskType::BeamPrediction => "beam_prediction",
            TaskType::Baseline => "baseline",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    ProportionalFairness,
    MaxMinSinr,
    MaxProdSinr,
    EqualSplit,
    UniformPower,
    WaterFilling,
    None,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::ProportionalFairness,
        Objective::MaxMinSinr,
        Objective::MaxProdSinr,
        Objective::EqualSplit,
        Objective::UniformPower,
        Objective::WaterFilling,
        Objective::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::ProportionalFairness => "proportional_fairness",
            Objective::MaxMinSinr => "max_min_sinr",
            Objective::MaxProdSinr => "max_prod_sinr",
            Objective::EqualSplit => "equal_split",
            Objective::UniformPower => "uniform_power",
            Objective::WaterFilling => "water_filling",
            Objective::None => "none",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Semantic type of an input slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Number,
    NumberList,
    Matrix,
    String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSchema {
    pub name: String,
    pub kind: SlotKind,
    pub required: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Analytical,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub task_type: TaskType,
    pub objective: Objective,
    /// Free-text description; this is what the selector ranks against.
    pub description: String,
    pub input_schema: Vec<SlotSchema>,
    pub output_schema: Vec<String>,
    pub download_count: u64,
    pub source: ModelSource,
}

impl ModelDescriptor {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: &str| RegistryError::InvalidDescriptor {
            model_id: self.model_id.clone(),
            reason: reason.to_string(),
        };
        if self.model_id.trim().is_empty() {
            return Err(invalid("empty model_id"));
        }
        if self.description.trim().is_empty() {
            return Err(invalid("empty description"));
        }
        if self.input_schema.is_empty() {
            return Err(invalid("empty input_schema"));
        }
        if self.output_schema.is_empty() {
            return Err(invalid("empty output_schema"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for slot in &self.input_schema {
            if slot.name.is_empty() {
                return Err(invalid("input_schema slot with empty name"));
            }
            if !seen.insert(slot.name.as_str()) {
                return Err(invalid(&format!("duplicate input slot `{}`", slot.name)));
            }
        }
        Ok(())
    }

    pub fn slot(&self, name: &str) -> Option<&SlotSchema> {
        self.input_schema.iter().find(|s| s.name == name)
    }

    pub fn required_slots(&self) -> impl Iterator<Item = &SlotSchema> {
        self.input_schema.iter().filter(|s| s.required)
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("model id `{0}` is already registered")]
    DuplicateModelId(String),
    #[error("invalid descriptor `{model_id}`: {reason}")]
    InvalidDescriptor { model_id: String, reason: String },
    #[error("registry parse error: {0}")]
    Parse(String),
    #[error("registry I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Descriptors keyed by `model_id`. Iteration is always in ascending id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    models: BTreeMap<String, ModelDescriptor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    version: u32,
    models: Vec<ModelDescriptor>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The built-in registry, parsed from [`DEFAULT_REGISTRY_JSON`].
    pub fn builtin() -> Self {
        Self::from_json_str(DEFAULT_REGISTRY_JSON).expect("bundled registry is valid")
    }

    pub fn register_model(&mut self, descriptor: ModelDescriptor) -> Result<String, RegistryError> {
        descriptor.validate()?;
        if self.models.contains_key(&descriptor.model_id) {
            return Err(RegistryError::DuplicateModelId(descriptor.model_id));
        }
        let id = descriptor.model_id.clone();
        self.models.insert(id.clone(), descriptor);
        Ok(id)
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelDescriptor> {
        self.models.get(model_id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// All descriptors, optionally filtered by task type, ascending by id.
    pub fn list_models(&self, task_type: Option<TaskType>) -> Vec<&ModelDescriptor> {
        self.models
            .values()
            .filter(|m| task_type.is_none_or(|t| m.task_type == t))
            .collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        if file.version != REGISTRY_FORMAT_VERSION {
            return Err(RegistryError::Parse(format!(
                "unsupported registry version {} (expected {REGISTRY_FORMAT_VERSION})",
                file.version
            )));
        }
        let mut reg = Registry::new();
        for (i, m) in file.models.into_iter().enumerate() {
            reg.register_model(m).map_err(|e| match e {
                RegistryError::DuplicateModelId(id) => {
                    RegistryError::Parse(format!("models[{i}]: DuplicateModelId `{id}`"))
                }
                other => RegistryError::Parse(format!("models[{i}]: {other}")),
            })?;
        }
        Ok(reg)
    }

    pub fn to_json_string(&self) -> String {
        let file = RegistryFile {
            version: REGISTRY_FORMAT_VERSION,
            models: self.models.values().cloned().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("registry serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RegistryError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Registry {
    type Item = &'a ModelDescriptor;
    type IntoIter = std::collections::btree_map::Values<'a, String, ModelDescriptor>;

    fn into_iter(self) -> Self::IntoIter {
        self.models.values()
    }
}
