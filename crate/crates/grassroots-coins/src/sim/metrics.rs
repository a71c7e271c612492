//! CSV export of per-round liquidity metrics and the final-state JSON.

use serde_json::json;

use crate::analytics::LiquidityReport;
use crate::sim::engine::ScenarioOutcome;
use crate::sim::scenario::AgentRegistry;

/// Columns: round, agent, fd, cash_ratio, quick_ratio_lb, current_ratio,
/// insolvent. Ratios are exact fractions (`num/den`) or `undef`.
pub fn metrics_csv(reports: &[LiquidityReport], registry: &AgentRegistry) -> String {
    let mut out = String::from("round,agent,fd,cash_ratio,quick_ratio_lb,current_ratio,insolvent\n");
    for report in reports {
        for row in &report.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                report.round,
                registry.name(row.agent),
                row.fd,
                row.cash_ratio,
                row.quick_ratio_lb,
                row.current_ratio,
                row.insolvent
            ));
        }
    }
    out
}

/// Final configuration as JSON: per-agent block lists plus the holdings
/// summary from the last metrics row.
pub fn final_state_json(outcome: &ScenarioOutcome) -> String {
    let agents: Vec<serde_json::Value> = outcome
        .final_config
        .iter()
        .map(|(id, state)| {
            let blocks: Vec<serde_json::Value> = state
                .iter()
                .map(|b| {
                    json!({
                        "author": outcome.registry.name(b.author),
                        "index": b.index,
                        "payload": b.payload.map(|p| p.to_hex()),
                    })
                })
                .collect();
            json!({
                "name": outcome.registry.name(id),
                "blocks": blocks,
            })
        })
        .collect();
    let last = outcome.metrics.last().map(|report| {
        report
            .rows
            .iter()
            .map(|row| {
                json!({
                    "agent": outcome.registry.name(row.agent),
                    "fd": row.fd,
                    "cash_ratio": row.cash_ratio.to_string(),
                    "quick_ratio_lb": row.quick_ratio_lb.to_string(),
                    "current_ratio": row.current_ratio.to_string(),
                    "insolvent": row.insolvent,
                })
            })
            .collect::<Vec<_>>()
    });
    serde_json::to_string_pretty(&json!({
        "schema": 1,
        "agents": agents,
        "liquidity": last,
    }))
    .expect("state serializes")
}
