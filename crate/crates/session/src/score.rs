//! End-of-session score and the target alignment bins used for analysis.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// `1 - |b - S_T|_1 / |b - S_0|_1`; negative when the human ended
    /// farther from the target than they started.
    pub raw: f64,
    /// `raw` floored at 0.
    pub clamped: f64,
    /// True when the target equals the starting allocation, so the ratio is
    /// undefined and the score is 1 for an exact match and 0 otherwise.
    pub degenerate: bool,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn score(target: &[f64], start: &[f64], end: &[f64]) -> Score {
    let base = l1(target, start);
    if base == 0.0 {
        let raw = if l1(target, end) == 0.0 { 1.0 } else { 0.0 };
        tracing::warn!(?target, "target equals the starting allocation; score is degenerate");
        return Score { raw, clamped: raw, degenerate: true };
    }
    let raw = 1.0 - l1(target, end) / base;
    Score { raw, clamped: raw.max(0.0), degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignmentBin {
    #[serde(rename = "0-60")]
    Aligned,
    #[serde(rename = "60-120")]
    Orthogonal,
    #[serde(rename = "120-180")]
    Opposed,
}

/// Angle in degrees between the moves from `start` to each target; `None`
/// when either move is zero.
pub fn alignment_angle(agent_target: &[f64], human_target: &[f64], start: &[f64]) -> Option<f64> {
    let a: Vec<f64> = agent_target.iter().zip(start).map(|(t, s)| t - s).collect();
    let b: Vec<f64> = human_target.iter().zip(start).map(|(t, s)| t - s).collect();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        tracing::warn!(?agent_target, ?human_target, "a target equals the start; alignment is unbinned");
        return None;
    }
    let cos = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Some(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Bins are `[0, 60)`, `[60, 120)` and `[120, 180]`.
pub fn alignment_bin(agent_target: &[f64], human_target: &[f64], start: &[f64]) -> Option<AlignmentBin> {
    let deg = alignment_angle(agent_target, human_target, start)?;
    Some(if deg < 60.0 {
        AlignmentBin::Aligned
    } else if deg < 120.0 {
        AlignmentBin::Orthogonal
    } else {
        AlignmentBin::Opposed
    })
}
