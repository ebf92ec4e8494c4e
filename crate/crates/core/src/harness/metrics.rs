use serde::{Deserialize, Serialize};

use super::EpisodeLog;
use crate::obs::EpisodeStatus;
use crate::policy::EpisodeStats;

/// Aggregates over evaluation episodes. Reward and speed are per-episode
/// values averaged over episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub episodes: usize,
    /// Mean over episodes of the episode's summed reward.
    pub cumulative_reward: f64,
    pub cumulative_reward_std: f64,
    /// Mean over episodes of the episode's mean speed (m/s).
    pub avg_speed: f64,
    pub avg_speed_std: f64,
    pub collisions: usize,
    pub collision_rate: f64,
    pub success_rate: f64,
}

/// One episode reduced to what the report needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub cumulative_reward: f64,
    pub mean_speed: f64,
    pub status: EpisodeStatus,
}

impl From<&EpisodeStats> for EpisodeSummary {
    fn from(s: &EpisodeStats) -> Self {
        Self {
            cumulative_reward: s.episode_return,
            mean_speed: s.mean_speed,
            status: s.status,
        }
    }
}

impl From<&EpisodeLog> for EpisodeSummary {
    /// Rewards and speeds recomputed from logged states, summed in step order.
    fn from(log: &EpisodeLog) -> Self {
        let ret = log.recomputed_rewards().iter().fold(0.0, |acc, r| acc + r.total);
        let speeds = log.step_speeds();
        let sum = speeds.iter().fold(0.0, |acc, v| acc + v);
        Self {
            cumulative_reward: ret,
            mean_speed: sum / speeds.len().max(1) as f64,
            status: log.final_status(),
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl MetricsReport {
    pub fn from_summaries(variant: &str, eps: &[EpisodeSummary]) -> Self {
        let rewards: Vec<f64> = eps.iter().map(|e| e.cumulative_reward).collect();
        let speeds: Vec<f64> = eps.iter().map(|e| e.mean_speed).collect();
        let (cr, cr_std) = mean_std(&rewards);
        let (sp, sp_std) = mean_std(&speeds);
        let n = eps.len().max(1) as f64;
        let collisions = eps.iter().filter(|e| e.status == EpisodeStatus::Collided).count();
        let successes = eps.iter().filter(|e| e.status == EpisodeStatus::Succeeded).count();
        Self {
            variant: variant.to_string(),
            episodes: eps.len(),
            cumulative_reward: cr,
            cumulative_reward_std: cr_std,
            avg_speed: sp,
            avg_speed_std: sp_std,
            collisions,
            collision_rate: collisions as f64 / n,
            success_rate: successes as f64 / n,
        }
    }

    pub fn from_episodes(variant: &str, eps: &[EpisodeStats]) -> Self {
        Self::from_summaries(variant, &eps.iter().map(EpisodeSummary::from).collect::<Vec<_>>())
    }

    pub fn from_logs(variant: &str, logs: &[EpisodeLog]) -> Self {
        Self::from_summaries(variant, &logs.iter().map(EpisodeSummary::from).collect::<Vec<_>>())
    }
}

/// Aligned text table with one column per report.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("Metric".into(), reports.iter().map(|r| r.variant.clone()).collect()),
        (
            "Cumulative reward".into(),
            reports.iter().map(|r| format!("{:.2}", r.cumulative_reward)).collect(),
        ),
        (
            "Avg. Speed (m/s)".into(),
            reports.iter().map(|r| format!("{:.2} ± {:.2}", r.avg_speed, r.avg_speed_std)).collect(),
        ),
        (
            "Collision Rate".into(),
            reports.iter().map(|r| format!("{:.1}%", 100.0 * r.collision_rate)).collect(),
        ),
        (
            "Success Rate".into(),
            reports.iter().map(|r| format!("{:.1}%", 100.0 * r.success_rate)).collect(),
        ),
    ];
    rows.push(("Episodes".into(), reports.iter().map(|r| r.episodes.to_string()).collect()));
    let label_w = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..reports.len())
        .map(|j| rows.iter().map(|r| r.1[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, (label, cells)) in rows.iter().enumerate() {
        out.push_str(&format!("{label:<label_w$}"));
        for (c, w) in cells.iter().zip(&col_w) {
            let pad = w - c.chars().count();
            out.push_str("  ");
            out.push_str(&" ".repeat(pad));
            out.push_str(c);
        }
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(label_w + col_w.iter().map(|w| w + 2).sum::<usize>()));
            out.push('\n');
        }
    }
    out
}
