//! Summary statistics of a run.

use std::collections::BTreeMap;

use serde::Serialize;

use super::record::{Event, MonotonicityTrace, RunRecord};

/// Fraction of the horizon used for the excitation growth rate.
pub const GROWTH_WINDOW: f64 = 0.2;
/// Fraction of the horizon treated as steady state.
pub const STEADY_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelStats {
    pub final_abs: f64,
    pub max_abs: f64,
    /// Signed mean over the steady-state window.
    pub steady_mean: f64,
    pub steady_max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationStats {
    pub final_integral: f64,
    /// Slope of `∫Δ²dt` over the growth window; stays positive when `Δ ∉ L₂`.
    pub growth_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub name: String,
    pub samples: usize,
    pub horizon: f64,
    /// Every `err_*` and `track_*` column.
    pub channels: BTreeMap<String, ChannelStats>,
    pub monotone: bool,
    pub monotonicity: Vec<MonotonicityTrace>,
    /// Every `intDelta2*` column.
    pub excitation: BTreeMap<String, ExcitationStats>,
    pub events: Vec<Event>,
}

/// First index whose time is at or after `fraction` of the way from the start to the end.
fn window_start(t: &[f64], fraction: f64) -> usize {
    let (Some(&t0), Some(&t1)) = (t.first(), t.last()) else {
        return 0;
    };
    let cut = t1 - fraction * (t1 - t0);
    t.iter().position(|&s| s >= cut).unwrap_or(t.len() - 1)
}

fn channel_stats(t: &[f64], v: &[f64]) -> ChannelStats {
    if v.is_empty() {
        return ChannelStats {
            final_abs: 0.0,
            max_abs: 0.0,
            steady_mean: 0.0,
            steady_max_abs: 0.0,
        };
    }
    let steady = &v[window_start(t, STEADY_WINDOW)..];
    ChannelStats {
        final_abs: v[v.len() - 1].abs(),
        max_abs: v.iter().fold(0.0, |m, x| m.max(x.abs())),
        steady_mean: steady.iter().sum::<f64>() / steady.len() as f64,
        steady_max_abs: steady.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

fn excitation_stats(t: &[f64], integral: &[f64]) -> ExcitationStats {
    let n = integral.len();
    if n == 0 {
        return ExcitationStats {
            final_integral: 0.0,
            growth_rate: 0.0,
        };
    }
    let start = window_start(t, GROWTH_WINDOW);
    let span = t[n - 1] - t[start];
    ExcitationStats {
        final_integral: integral[n - 1],
        growth_rate: if span > 0.0 {
            (integral[n - 1] - integral[start]) / span
        } else {
            0.0
        },
    }
}

pub fn metrics(rec: &RunRecord) -> Metrics {
    let t = rec.column("t").unwrap_or(&[]);
    let mut channels = BTreeMap::new();
    let mut excitation = BTreeMap::new();
    for (name, col) in rec.columns.iter().zip(&rec.data) {
        if name.starts_with("err_") || name.starts_with("track_") {
            channels.insert(name.clone(), channel_stats(t, col));
        } else if name.starts_with("intDelta2") {
            excitation.insert(name.clone(), excitation_stats(t, col));
        }
    }
    Metrics {
        name: rec.name.clone(),
        samples: rec.len(),
        horizon: t.last().copied().unwrap_or(0.0),
        channels,
        monotone: rec.monotonicity.iter().all(MonotonicityTrace::passed),
        monotonicity: rec.monotonicity.clone(),
        excitation,
        events: rec.events.clone(),
    }
}
