//! Structured result records emitted by the commands (JSON lines).

use camoe_core::retrieval::{EvalReport, GateReport, RankingResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub record: &'static str,
    pub task: String,
    pub direction: String,
    pub dsl: bool,
    pub temp: Option<f64>,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub median_rank: f64,
    pub mean_rank: f64,
    pub queries: usize,
}

fn metrics_record(task: &str, dsl: bool, temp: Option<f64>, r: &RankingResult) -> MetricsRecord {
    MetricsRecord {
        record: "metrics",
        task: task.to_string(),
        direction: r.direction.name().to_string(),
        dsl,
        temp,
        r1: r.r_at_1,
        r5: r.r_at_5,
        r10: r.r_at_10,
        median_rank: r.median_rank,
        mean_rank: r.mean_rank,
        queries: r.ranks.len(),
    }
}

pub fn render_eval_report(report: &EvalReport) -> String {
    let mut out = String::new();
    for row in &report.rows {
        for r in [&row.t2v, &row.v2t] {
            let rec = metrics_record(row.task.name(), row.dsl, row.temp, r);
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out.push_str(
        &serde_json::to_string(&serde_json::json!({
            "record": "fallbacks",
            "count": report.fallbacks,
        }))
        .unwrap(),
    );
    out.push('\n');
    out
}

pub fn render_gate_report(report: &GateReport) -> String {
    let mut out = String::new();
    for (video, weights) in &report.per_video {
        out.push_str(
            &serde_json::to_string(&serde_json::json!({
                "record": "gate",
                "video": video,
                "weights": weights,
            }))
            .unwrap(),
        );
        out.push('\n');
    }
    out.push_str(
        &serde_json::to_string(&serde_json::json!({
            "record": "gate_mean",
            "weights": report.mean,
        }))
        .unwrap(),
    );
    out.push('\n');
    out
}
