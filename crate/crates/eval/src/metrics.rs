use crate::EvalError;
use protoagent_agent::{RequestCategory, RetrievedContext};
use protoagent_llm::EmbeddingVector;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;

/// Scoring column: the three edit categories plus structured requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    Modification,
    Adding,
    Deleting,
    Json,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [
        Bucket::Modification,
        Bucket::Adding,
        Bucket::Deleting,
        Bucket::Json,
    ];

    pub fn from_category(category: RequestCategory) -> Option<Self> {
        match category {
            RequestCategory::Modification => Some(Bucket::Modification),
            RequestCategory::Adding => Some(Bucket::Adding),
            RequestCategory::Deleting => Some(Bucket::Deleting),
            RequestCategory::Others => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bucket::Modification => "Modification",
            Bucket::Adding => "Adding",
            Bucket::Deleting => "Deleting",
            Bucket::Json => "JSON",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub bucket: Bucket,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub n_total: usize,
    pub n_correct: usize,
    /// `None` for an empty bucket.
    pub rate: Option<f64>,
}

impl Rate {
    fn of(n_correct: usize, n_total: usize) -> Self {
        Self {
            n_total,
            n_correct,
            rate: (n_total > 0).then(|| n_correct as f64 / n_total as f64),
        }
    }
}

/// Per-bucket rates with both general aggregations: the unweighted mean
/// over non-empty buckets and the pooled rate over all cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub buckets: BTreeMap<Bucket, Rate>,
    pub macro_rate: Option<f64>,
    pub micro_rate: Option<f64>,
}

pub fn rate_table(outcomes: &[Outcome]) -> RateTable {
    let buckets: BTreeMap<Bucket, Rate> = Bucket::ALL
        .iter()
        .map(|b| {
            let mine: Vec<_> = outcomes.iter().filter(|o| o.bucket == *b).collect();
            (
                *b,
                Rate::of(mine.iter().filter(|o| o.ok).count(), mine.len()),
            )
        })
        .collect();
    let defined: Vec<f64> = buckets.values().filter_map(|r| r.rate).collect();
    let macro_rate =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let micro = Rate::of(outcomes.iter().filter(|o| o.ok).count(), outcomes.len());
    RateTable {
        buckets,
        macro_rate,
        micro_rate: micro.rate,
    }
}

/// Syntax correctness rate; `ok` is whether the modified protocol passed
/// syntax validation.
pub fn compute_scr(outcomes: &[Outcome]) -> RateTable {
    rate_table(outcomes)
}

/// Plan accuracy: a case is correct when its produced segments equal the
/// gold segments exactly. A case with no produced result counts as wrong.
pub fn compute_plan_accuracy<S: PartialEq>(
    cases: &[(String, Bucket, S)],
    produced: &BTreeMap<String, S>,
) -> RateTable {
    let outcomes: Vec<Outcome> = cases
        .iter()
        .map(|(id, bucket, gold)| {
            let ok = match produced.get(id) {
                Some(p) => p == gold,
                None => {
                    tracing::warn!(case = %id, "no produced result, counted as incorrect");
                    false
                }
            };
            Outcome {
                bucket: *bucket,
                ok,
            }
        })
        .collect();
    rate_table(&outcomes)
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EvalError> {
    if a.values.len() != b.values.len() {
        return Err(EvalError::DimensionMismatch {
            left: a.values.len(),
            right: b.values.len(),
        });
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a.values), norm(&b.values));
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    /// Sample standard deviation (n - 1) over sqrt(n); 0 for one sample.
    pub sem: f64,
    pub n: usize,
}

pub fn mean_sem(xs: &[f64]) -> Option<MeanSem> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sem = if n == 1 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (n as f64).sqrt()
    };
    Some(MeanSem { mean, sem, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn prf<T: Ord + Hash>(gold: &BTreeSet<T>, retrieved: &BTreeSet<T>) -> Result<Prf, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let hit = gold.intersection(retrieved).count() as f64;
    let precision = if retrieved.is_empty() {
        0.0
    } else {
        hit / retrieved.len() as f64
    };
    let recall = hit / gold.len() as f64;
    // Harmonic mean of P and R, computed from counts to avoid rounding.
    let f1 = 2.0 * hit / (gold.len() + retrieved.len()) as f64;
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRetrieval {
    pub entities: BTreeSet<String>,
    pub essentials: BTreeSet<(String, String)>,
}

/// Entity and essential level scores; a level whose gold set is empty is
/// not scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub entity: Option<Prf>,
    pub essential: Option<Prf>,
}

pub fn compute_retrieval_metrics(
    gold: &GoldRetrieval,
    retrieved: &RetrievedContext,
) -> RetrievalScores {
    let entities: BTreeSet<String> = retrieved.entities.iter().map(|e| e.id.clone()).collect();
    let essentials: BTreeSet<(String, String)> = retrieved
        .essentials
        .iter()
        .map(|e| (e.entity_id.clone(), e.essential_name.clone()))
        .collect();
    RetrievalScores {
        entity: prf(&gold.entities, &entities).ok(),
        essential: prf(&gold.essentials, &essentials).ok(),
    }
}
