//! Model selection: filter the registry by task type, narrow by objective
//! when possible, and rank by description/query similarity.

use crate::memory::embed_text;
use crate::registry::{ModelDescriptor, Objective, Registry, TaskType};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no registered model for task type {0}")]
    NoModelForTask(TaskType),
    #[error("top_n must be at least 1")]
    InvalidTopN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub model_id: String,
    pub score: f64,
    pub rank: usize,
}

/// `u·v / (‖u‖·‖v‖)`, defined as 0 when either vector is zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SelectorError> {
    if u.len() != v.len() {
        return Err(SelectorError::DimensionMismatch { left: u.len(), right: v.len() });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Ranks candidates for one task: score descending, then `download_count`
/// descending, then `model_id` ascending. At most `top_n` are returned.
pub fn rank_models(
    registry: &Registry,
    task_type: TaskType,
    objective: Objective,
    query_text: &str,
    top_n: usize,
) -> Result<Vec<RankedCandidate>, SelectorError> {
    if top_n == 0 {
        return Err(SelectorError::InvalidTopN);
    }
    let by_task = registry.list_models(Some(task_type));
    if by_task.is_empty() {
        return Err(SelectorError::NoModelForTask(task_type));
    }
    let exact: Vec<&ModelDescriptor> =
        by_task.iter().copied().filter(|m| m.objective == objective).collect();
    let pool = if exact.is_empty() { by_task } else { exact };

    let query = embed_text(query_text);
    let mut scored: Vec<(f64, &ModelDescriptor)> = pool
        .into_iter()
        .map(|m| {
            let s = cosine_similarity(embed_text(&m.description).as_slice(), query.as_slice())
                .expect("embeddings share a dimension");
            (s, m)
        })
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.total_cmp(sa)
            .then_with(|| b.download_count.cmp(&a.download_count))
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    Ok(scored
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, (score, m))| RankedCandidate { model_id: m.model_id.clone(), score, rank: i + 1 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{ModelSource, SlotKind, SlotSchema};

    fn model(id: &str, description: &str, downloads: u64) -> ModelDescriptor {
        ModelDescriptor {
            model_id: id.into(),
            task_type: TaskType::PowerAllocation,
            objective: Objective::MaxMinSinr,
            description: description.into(),
            input_schema: vec![SlotSchema { name: "x".into(), kind: SlotKind::Number, required: true }],
            output_schema: vec!["y".into()],
            download_count: downloads,
            source: ModelSource::Analytical,
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[3.0, -1.0, 2.0], &[3.0, -1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(SelectorError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn single_candidate_ranks_first() {
        let mut reg = Registry::new();
        reg.register_model(model("only", "max-min power", 0)).unwrap();
        let r = rank_models(&reg, TaskType::PowerAllocation, Objective::MaxMinSinr, "anything", 3).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].model_id.as_str(), r[0].rank), ("only", 1));
    }

    #[test]
    fn two_token_vocabulary_scores() {
        // "power" hashes to bucket 230, "beam" to 26, "allocation" to 71.
        // query "power allocation" = (e230 + e71)/√2
        //   A = "power"      -> e230             cos = 1/√2
        //   B = "beam beam"  -> e26              cos = 0
        let mut reg = Registry::new();
        reg.register_model(model("A", "power", 0)).unwrap();
        reg.register_model(model("B", "beam beam", 100)).unwrap();
        let r = rank_models(&reg, TaskType::PowerAllocation, Objective::MaxMinSinr, "power allocation", 2).unwrap();
        assert_eq!(r[0].model_id, "A");
        assert!((r[0].score - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(r[1].model_id, "B");
        assert_eq!(r[1].score, 0.0);
    }

    #[test]
    fn ties_fall_back_to_downloads_then_id() {
        let mut reg = Registry::new();
        reg.register_model(model("b", "same text", 5)).unwrap();
        reg.register_model(model("a", "same text", 5)).unwrap();
        reg.register_model(model("c", "same text", 9)).unwrap();
        let r = rank_models(&reg, TaskType::PowerAllocation, Objective::MaxMinSinr, "same text", 3).unwrap();
        let ids: Vec<&str> = r.iter().map(|c| c.model_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn objective_narrowing_falls_back_to_task_type() {
        let reg = Registry::builtin();
        let r = rank_models(&reg, TaskType::PowerAllocation, Objective::MaxProdSinr, "power", 5).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].model_id, "maxprod_power_v1");
        let r = rank_models(&reg, TaskType::PowerAllocation, Objective::ProportionalFairness, "power", 5).unwrap();
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn unknown_task_type_fails() {
        let err = rank_models(&Registry::builtin(), TaskType::BeamPrediction, Objective::None, "beam", 1).unwrap_err();
        assert_eq!(err, SelectorError::NoModelForTask(TaskType::BeamPrediction));
        assert_eq!(
            rank_models(&Registry::builtin(), TaskType::PowerAllocation, Objective::None, "x", 0).unwrap_err(),
            SelectorError::InvalidTopN
        );
    }
}
