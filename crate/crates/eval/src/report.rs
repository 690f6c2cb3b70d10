use crate::benchmark::{BenchmarkBackend, BenchmarkConfig, CaseResult, CaseStatus};
use crate::metrics::{mean_sem, Bucket, MeanSem, Prf, RateTable};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    /// Cases scored at this level (non-empty gold set).
    pub n_cases: usize,
    pub precision: Option<MeanSem>,
    pub recall: Option<MeanSem>,
    pub f1: Option<MeanSem>,
}

impl LevelSummary {
    fn of(scores: &[Prf]) -> Self {
        let pick = |f: fn(&Prf) -> f64| mean_sem(&scores.iter().map(f).collect::<Vec<_>>());
        Self {
            n_cases: scores.len(),
            precision: pick(|p| p.precision),
            recall: pick(|p| p.recall),
            f1: pick(|p| p.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub entity: LevelSummary,
    pub essential: LevelSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessSummary {
    /// Mean over cases of the per-case mean similarity.
    pub overall: Option<MeanSem>,
    pub buckets: BTreeMap<Bucket, MeanSem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub backend: String,
    pub embedder: String,
    pub n_pseudo: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run: RunInfo,
    pub cases_total: usize,
    pub cases_failed: usize,
    pub scr: RateTable,
    pub plan_accuracy: RateTable,
    pub faithfulness: FaithfulnessSummary,
    pub retrieval: RetrievalSummary,
    pub cases: Vec<CaseResult>,
}

impl MetricsReport {
    pub(crate) fn aggregate(
        cases: Vec<CaseResult>,
        scr: RateTable,
        plan_accuracy: RateTable,
        config: &BenchmarkConfig,
    ) -> Self {
        let case_means = |filter: &dyn Fn(&CaseResult) -> bool| {
            mean_sem(
                &cases
                    .iter()
                    .filter(|c| filter(c))
                    .filter_map(|c| c.faithfulness.as_ref().map(|f| f.mean))
                    .collect::<Vec<_>>(),
            )
        };
        let faithfulness = FaithfulnessSummary {
            overall: case_means(&|_| true),
            buckets: Bucket::ALL
                .iter()
                .filter_map(|b| case_means(&|c| c.bucket == Some(*b)).map(|m| (*b, m)))
                .collect(),
        };
        let entity: Vec<Prf> = cases
            .iter()
            .filter_map(|c| c.retrieval.and_then(|r| r.entity))
            .collect();
        let essential: Vec<Prf> = cases
            .iter()
            .filter_map(|c| c.retrieval.and_then(|r| r.essential))
            .collect();
        Self {
            run: RunInfo {
                backend: match &config.backend {
                    BenchmarkBackend::Scripted => "scripted".into(),
                    BenchmarkBackend::Shared(b) => b.model_id().to_string(),
                },
                embedder: config.embedder.model_id().to_string(),
                n_pseudo: config.n_pseudo,
            },
            cases_total: cases.len(),
            cases_failed: cases
                .iter()
                .filter(|c| c.status == CaseStatus::Failed)
                .count(),
            scr,
            plan_accuracy,
            faithfulness,
            retrieval: RetrievalSummary {
                entity: LevelSummary::of(&entity),
                essential: LevelSummary::of(&essential),
            },
            cases,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report encodes");
        s.push('\n');
        s
    }

    /// Human-readable tables: one row per metric, one column per bucket.
    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Evaluation report\n\n");
        let _ = writeln!(
            md,
            "Backend: {}. Embedder: {}. Pseudo tasks per case: {}. Cases: {} ({} failed).\n",
            self.run.backend,
            self.run.embedder,
            self.run.n_pseudo,
            self.cases_total,
            self.cases_failed
        );
        md.push_str("| Metric | Modification | Adding | Deleting | JSON | General (macro) | General (micro) |\n");
        md.push_str("|---|---|---|---|---|---|---|\n");
        for (label, table) in [("SCR", &self.scr), ("Plan accuracy", &self.plan_accuracy)] {
            let _ = write!(md, "| {label} |");
            for b in Bucket::ALL {
                let r = table.buckets[&b];
                let _ = write!(md, " {} ({}/{}) |", rate(r.rate), r.n_correct, r.n_total);
            }
            let _ = writeln!(
                md,
                " {} | {} |",
                rate(table.macro_rate),
                rate(table.micro_rate)
            );
        }
        let _ = write!(md, "| Faithfulness |");
        for b in Bucket::ALL {
            let _ = write!(md, " {} |", mean(self.faithfulness.buckets.get(&b)));
        }
        let _ = writeln!(md, " {} | |", mean(self.faithfulness.overall.as_ref()));

        md.push_str("\n## Retrieval\n\n| Level | Cases | Precision | Recall | F1 |\n|---|---|---|---|---|\n");
        for (label, level) in [
            ("Entity", &self.retrieval.entity),
            ("Essential", &self.retrieval.essential),
        ] {
            let _ = writeln!(
                md,
                "| {label} | {} | {} | {} | {} |",
                level.n_cases,
                mean(level.precision.as_ref()),
                mean(level.recall.as_ref()),
                mean(level.f1.as_ref())
            );
        }

        md.push_str("\n## Cases\n\n| Case | Bucket | Status | Syntax | Plan | Faithfulness | Note |\n|---|---|---|---|---|---|---|\n");
        for c in &self.cases {
            let faith = c.faithfulness.as_ref().map_or("n/a".to_string(), |f| {
                format!("{:.3} ± {:.3}", f.mean, f.sem)
            });
            let note = c
                .error
                .clone()
                .unwrap_or_else(|| c.notes.join("; "))
                .replace('|', "/");
            let _ = writeln!(
                md,
                "| {} | {} | {:?} | {} | {} | {} | {} |",
                c.id,
                c.bucket.map_or("?", Bucket::label),
                c.status,
                yes_no(c.syntax_ok),
                yes_no(c.plan_correct),
                faith,
                note
            );
        }
        md
    }

    pub fn write_to(&self, out_dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join("report.json"), self.to_json())?;
        std::fs::write(out_dir.join("report.md"), self.to_markdown())
    }
}

fn rate(r: Option<f64>) -> String {
    r.map_or("n/a".into(), |v| format!("{v:.3}"))
}

fn mean(m: Option<&MeanSem>) -> String {
    m.map_or("n/a".into(), |m| format!("{:.3} ± {:.3}", m.mean, m.sem))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fail"
    }
}
