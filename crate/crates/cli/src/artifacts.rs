//! Artifact writers. Every file embeds the scenario hash and seed: JSON
//! documents carry `scenario_sha256`/`seed` fields, CSVs a leading `#`
//! comment line before the header row. Floats are written in shortest
//! round-trip form so identical runs produce identical bytes.

use anyhow::Context;
use std::fmt::Write as _;
use std::path::Path;
use tmc_core::demand::Mode;
use tmc_core::engine::{DayResult, EquilibriumResult, TxKind};
use tmc_core::metrics::WelfareReport;
use tmc_core::scenario::Scenario;

pub struct Stamp<'a> {
    pub scenario_sha256: &'a str,
    pub seed: u64,
}

impl Stamp<'_> {
    pub fn csv_header(&self) -> String {
        format!(
            "# scenario_sha256={} seed={}\n",
            self.scenario_sha256, self.seed
        )
    }
}

pub fn write_text(dir: &Path, name: &str, content: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

/// Day log: one row per traveler per reported day.
pub fn day_log_csv(days: &[&DayResult], stamp: &Stamp) -> String {
    let mut out = stamp.csv_header();
    out.push_str("day,traveler_id,mode,interval\n");
    for day in days {
        for (id, decision) in day.decisions.iter().enumerate() {
            let mode = match day.realized_mode[id] {
                Mode::Car => "car",
                Mode::Pt => "pt",
            };
            let _ = writeln!(out, "{},{},{},{}", day.day, id, mode, decision.interval);
        }
    }
    out
}

/// Flow series: per interval car/PT departures and mean travel time.
pub fn flow_csv(days: &[&DayResult], stamp: &Stamp) -> String {
    let mut out = stamp.csv_header();
    out.push_str("day,interval,car_departures,pt_departures,mean_tt\n");
    for day in days {
        for h in 0..tmc_core::NUM_INTERVALS {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                day.day, h, day.car_departures[h], day.pt_departures[h], day.interval_tt[h]
            );
        }
    }
    out
}

/// Transaction log.
pub fn transactions_csv(days: &[&DayResult], stamp: &Stamp) -> String {
    let mut out = stamp.csv_header();
    out.push_str("day,minute,traveler_id,kind,tokens,dollars\n");
    for day in days {
        for tx in &day.transactions {
            let kind = match tx.kind {
                TxKind::Buy => "buy",
                TxKind::Sell => "sell",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                tx.day, tx.minute, tx.traveler, kind, tx.tokens, tx.dollars
            );
        }
    }
    out
}

/// Equilibrium summary JSON.
pub fn summary_json(
    scenario: &Scenario,
    result: &EquilibriumResult,
    report: Option<&WelfareReport>,
    stamp: &Stamp,
) -> String {
    let welfare = report.map(|r| {
        serde_json::json!({
            "user_benefit": r.user_benefit,
            "regulator_revenue": r.regulator_revenue,
            "social_welfare": r.social_welfare,
            "gini": r.gini,
            "gini_saw_negative": r.gini_saw_negative,
            "tti": r.tti,
            "pt_share": r.pt_share,
            "buyback_fraction": r.buyback_fraction,
            "buyback_per_capita": r.buyback_per_capita,
        })
    });
    let doc = serde_json::json!({
        "scenario_sha256": stamp.scenario_sha256,
        "seed": stamp.seed,
        "instrument": scenario.instrument.kind,
        "converged": result.converged,
        "days_run": result.days_run,
        "convergence_day": result.convergence_day,
        "final_price": result.final_day().price,
        "final_token_revenue": result.final_day().token_revenue,
        "norm_trajectory": result.norm_trajectory,
        "price_trajectory": result.price_trajectory,
        "welfare": welfare,
    });
    serde_json::to_string_pretty(&doc).expect("summary serializes")
}

/// Welfare report JSON (per-traveler benefits included).
pub fn welfare_json(report: &WelfareReport, stamp: &Stamp) -> String {
    let doc = serde_json::json!({
        "scenario_sha256": stamp.scenario_sha256,
        "seed": stamp.seed,
        "report": report,
    });
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

/// Reported days of a run: the converged window plus any event days.
pub fn reported_days(result: &EquilibriumResult) -> Vec<&DayResult> {
    result
        .window
        .iter()
        .chain(result.post_days.iter())
        .collect()
}
