//! Walking-log ingestion, ground-truth contact events from pressure
//! channels, and validation statistics for discovered mode transitions.
//!
//! Analysis (kinematic) and validation (pressure) channels live in separate
//! trajectories so validation data can never leak into segmentation
//! features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncd::{run_ncd, ModeLabeling, NcdConfig};
use crate::trajectory::Trajectory;

pub const ANALYSIS_CHANNELS: [&str; 12] = [
    "r_knee_angle",
    "r_knee_velocity",
    "r_hip_angle",
    "r_hip_velocity",
    "r_knee_current",
    "r_hip_current",
    "l_knee_angle",
    "l_knee_velocity",
    "l_hip_angle",
    "l_hip_velocity",
    "l_knee_current",
    "l_hip_current",
];

pub const VALIDATION_CHANNELS: [&str; 4] = ["r_heel", "r_toe", "l_heel", "l_toe"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaitSchema {
    /// Initial warm-up window to discard, in seconds.
    pub trim_seconds: f64,
    /// When false, missing pressure channels are tolerated and the record
    /// carries no validation data.
    pub require_validation: bool,
}

impl Default for GaitSchema {
    fn default() -> Self {
        Self { trim_seconds: 10.0, require_validation: true }
    }
}

#[derive(Debug, Clone)]
pub struct GaitRecord {
    analysis: Trajectory,
    validation: Option<Trajectory>,
    pub subject: String,
}

impl GaitRecord {
    pub fn new(analysis: Trajectory, validation: Option<Trajectory>, subject: String) -> Result<Self> {
        if analysis.channels() != ANALYSIS_CHANNELS {
            return Err(Error::RejectedInput("analysis channels out of order".into()));
        }
        if let Some(v) = &validation {
            if v.channels() != VALIDATION_CHANNELS {
                return Err(Error::RejectedInput("validation channels out of order".into()));
            }
            if v.len() != analysis.len() {
                return Err(Error::RejectedInput("channel group length mismatch".into()));
            }
        }
        Ok(Self { analysis, validation, subject })
    }

    /// Kinematic channels; the only group segmentation may see.
    pub fn analysis(&self) -> &Trajectory {
        &self.analysis
    }

    pub fn validation(&self) -> Option<&Trajectory> {
        self.validation.as_ref()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.analysis.dt()
    }
}

/// Parses a 17-column gait CSV (time + 12 kinematic + 4 pressure channels)
/// and trims the warm-up window.
pub fn load_gait_csv(text: &str, schema: &GaitSchema) -> Result<GaitRecord> {
    let full = Trajectory::from_csv(text)?;
    let missing: Vec<&str> = ANALYSIS_CHANNELS
        .iter()
        .filter(|n| full.channel_index(n).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Load(format!("missing analysis columns: {}", missing.join(", "))));
    }
    let missing_validation: Vec<&str> = VALIDATION_CHANNELS
        .iter()
        .filter(|n| full.channel_index(n).is_none())
        .cloned()
        .collect();
    if schema.require_validation && !missing_validation.is_empty() {
        return Err(Error::Load(format!(
            "missing validation columns: {}",
            missing_validation.join(", ")
        )));
    }
    let trim = (schema.trim_seconds / full.dt()).round() as usize;
    if trim + 2 > full.len() {
        return Err(Error::RejectedInput(format!(
            "trim of {} samples leaves no data (record has {})",
            trim,
            full.len()
        )));
    }
    let trimmed = full.slice(trim, full.len())?;
    let analysis = trimmed.select_channels(&ANALYSIS_CHANNELS)?;
    let validation = if missing_validation.is_empty() {
        Some(trimmed.select_channels(&VALIDATION_CHANNELS)?)
    } else {
        None
    };
    GaitRecord::new(analysis, validation, String::new())
}

/// Schmitt-trigger binarization: high above threshold + hysteresis/2, low
/// below threshold − hysteresis/2, initial state from the first sample's
/// side of the threshold.
pub fn threshold_contact(signal: &[f64], threshold: f64, hysteresis: f64) -> Vec<u8> {
    let hi = threshold + hysteresis / 2.0;
    let lo = threshold - hysteresis / 2.0;
    let mut state = !signal.is_empty() && signal[0] > threshold;
    signal
        .iter()
        .map(|&v| {
            if v > hi {
                state = true;
            } else if v < lo {
                state = false;
            }
            state as u8
        })
        .collect()
}

/// Dataset-agnostic threshold: midpoint of the 5th/95th percentiles,
/// hysteresis 10% of that span.
pub fn auto_threshold(signal: &[f64]) -> (f64, f64) {
    let mut sorted = signal.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let (p5, p95) = (pct(0.05), pct(0.95));
    ((p5 + p95) / 2.0, 0.1 * (p95 - p5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContactEvents {
    pub heel_strikes: Vec<(Side, usize)>,
    pub toe_offs: Vec<(Side, usize)>,
}

impl ContactEvents {
    pub fn merge(mut self, other: ContactEvents) -> ContactEvents {
        self.heel_strikes.extend(other.heel_strikes);
        self.toe_offs.extend(other.toe_offs);
        self.heel_strikes.sort_by_key(|&(_, i)| i);
        self.toe_offs.sort_by_key(|&(_, i)| i);
        self
    }

    pub fn heel_strike_indices(&self) -> Vec<usize> {
        self.heel_strikes.iter().map(|&(_, i)| i).collect()
    }

    pub fn toe_off_indices(&self) -> Vec<usize> {
        self.toe_offs.iter().map(|&(_, i)| i).collect()
    }

    /// CSV export: type, side, sample, time_ms.
    pub fn to_csv(&self, sample_rate: f64) -> String {
        let mut out = String::from("type,side,sample,time_ms\n");
        let mut rows: Vec<(&str, Side, usize)> = self
            .heel_strikes
            .iter()
            .map(|&(s, i)| ("heel_strike", s, i))
            .chain(self.toe_offs.iter().map(|&(s, i)| ("toe_off", s, i)))
            .collect();
        rows.sort_by_key(|&(_, _, i)| i);
        for (ty, side, i) in rows {
            out.push_str(&format!("{ty},{side:?},{i},{:.3}\n", i as f64 / sample_rate * 1e3));
        }
        out
    }
}

/// Heel strikes at 0→1 heel transitions, toe-offs at 1→0 toe transitions.
pub fn detect_contact_events(heel: &[u8], toe: &[u8], side: Side) -> Result<ContactEvents> {
    for (name, ch) in [("heel", heel), ("toe", toe)] {
        if ch.iter().any(|&v| v > 1) {
            return Err(Error::Parameter(format!("{name} channel is not binary")));
        }
    }
    let heel_strikes = heel
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] == 0 && w[1] == 1)
        .map(|(k, _)| (side, k + 1))
        .collect();
    let toe_offs = toe
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] == 1 && w[1] == 0)
        .map(|(k, _)| (side, k + 1))
        .collect();
    Ok(ContactEvents { heel_strikes, toe_offs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub index: usize,
    pub from: i32,
    pub to: i32,
}

/// Emits label changes that persist at least `min_dwell` samples; shorter
/// excursions (and noise samples) are suppressed as chatter.
pub fn extract_mode_transitions(labeling: &ModeLabeling, min_dwell: usize) -> Vec<Transition> {
    // run-length encode, skipping noise samples
    let mut runs: Vec<(i32, usize, usize)> = Vec::new(); // (label, start, len)
    for (k, &l) in labeling.labels.iter().enumerate() {
        if l < 0 {
            continue;
        }
        match runs.last_mut() {
            Some((label, _, len)) if *label == l => *len += 1,
            _ => runs.push((l, k, 1)),
        }
    }
    let mut transitions = Vec::new();
    let mut current: Option<i32> = None;
    for &(label, start, len) in &runs {
        if len < min_dwell.max(1) {
            continue;
        }
        if let Some(prev) = current {
            if prev != label {
                transitions.push(Transition { index: start, from: prev, to: label });
            }
        }
        current = Some(label);
    }
    transitions
}

/// Matching statistics between predicted transitions and ground-truth
/// events; offsets only over matched pairs, negative = anticipatory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub offsets_ms: Vec<f64>,
    pub mean_abs_offset_ms: f64,
    pub offset_std_ms: f64,
    pub matched: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub total_truth_events: usize,
}

/// Greedy nearest-neighbor matching within ±max_window_ms; each event
/// matched at most once. FP rate = FP/(matched+FP), FN rate = FN/truth.
pub fn match_events(
    predicted: &[usize],
    truth: &[usize],
    max_window_ms: f64,
    sample_rate: f64,
) -> ValidationReport {
    let ms_per_sample = 1e3 / sample_rate;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, &p) in predicted.iter().enumerate() {
        for (ti, &t) in truth.iter().enumerate() {
            let offset = (p as f64 - t as f64) * ms_per_sample;
            if offset.abs() <= max_window_ms {
                pairs.push((offset.abs(), pi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut pred_used = vec![false; predicted.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut offsets_ms = Vec::new();
    for (_, pi, ti) in pairs {
        if !pred_used[pi] && !truth_used[ti] {
            pred_used[pi] = true;
            truth_used[ti] = true;
            offsets_ms.push((predicted[pi] as f64 - truth[ti] as f64) * ms_per_sample);
        }
    }
    let matched = offsets_ms.len();
    let false_positives = predicted.len() - matched;
    let false_negatives = truth.len() - matched;
    let mean_abs = if matched > 0 {
        offsets_ms.iter().map(|o| o.abs()).sum::<f64>() / matched as f64
    } else {
        0.0
    };
    let std = if matched > 0 {
        (offsets_ms.iter().map(|o| (o.abs() - mean_abs).powi(2)).sum::<f64>() / matched as f64)
            .sqrt()
    } else {
        0.0
    };
    ValidationReport {
        false_positive_rate: if matched + false_positives > 0 {
            false_positives as f64 / (matched + false_positives) as f64
        } else {
            0.0
        },
        false_negative_rate: if !truth.is_empty() {
            false_negatives as f64 / truth.len() as f64
        } else {
            0.0
        },
        offsets_ms,
        mean_abs_offset_ms: mean_abs,
        offset_std_ms: std,
        matched,
        false_positives,
        false_negatives,
        total_truth_events: truth.len(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventReport {
    pub event: String,
    /// (from, to) transition types associated with this event class.
    pub transition_types: Vec<(i32, i32)>,
    pub report: ValidationReport,
}

/// Segmentation summary shaped like one decomposition row of a validation
/// table: phase count plus per-event FP/FN/offset statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaitReport {
    pub phases: usize,
    pub events: Vec<EventReport>,
    pub total_truth_events: usize,
}

impl GaitReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentOptions {
    /// Dwell filter for transition extraction, in seconds.
    pub min_dwell_seconds: f64,
    /// Event-matching window, in milliseconds.
    pub max_window_ms: f64,
    /// A transition type whose matched fraction against an event class
    /// reaches this value is reported as detecting that event.
    pub association_threshold: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { min_dwell_seconds: 0.025, max_window_ms: 100.0, association_threshold: 0.5 }
    }
}

pub struct GaitSegmentation {
    pub labeling: ModeLabeling,
    pub transitions: Vec<Transition>,
    pub truth: Option<ContactEvents>,
    pub report: Option<GaitReport>,
}

/// Ground-truth contact events from the validation pressure channels with
/// auto-derived thresholds.
pub fn ground_truth_events(validation: &Trajectory) -> Result<ContactEvents> {
    let channel = |name: &str| -> Vec<f64> {
        let i = validation.channel_index(name).unwrap();
        validation.samples().iter().map(|s| s[i]).collect()
    };
    let binarize = |name: &str| -> Vec<u8> {
        let sig = channel(name);
        let (th, hy) = auto_threshold(&sig);
        threshold_contact(&sig, th, hy)
    };
    let right =
        detect_contact_events(&binarize("r_heel"), &binarize("r_toe"), Side::Right)?;
    let left = detect_contact_events(&binarize("l_heel"), &binarize("l_toe"), Side::Left)?;
    Ok(right.merge(left))
}

/// Runs NCD on the kinematic channels, extracts debounced transitions, and
/// validates them against pressure-derived contact events when available.
pub fn segment_gait(
    record: &GaitRecord,
    config: &NcdConfig,
    options: &SegmentOptions,
) -> Result<GaitSegmentation> {
    let outcome = run_ncd(record.analysis(), config)?;
    let min_dwell = (options.min_dwell_seconds * record.sample_rate()).round() as usize;
    let transitions = extract_mode_transitions(&outcome.labeling, min_dwell.max(1));
    let (truth, report) = match record.validation() {
        None => (None, None),
        Some(v) => {
            let truth = ground_truth_events(v)?;
            let classes: [(&str, Vec<usize>); 2] = [
                ("heel_strike", truth.heel_strike_indices()),
                ("toe_off", truth.toe_off_indices()),
            ];
            // group transition indices by (from, to) type
            let mut types: Vec<((i32, i32), Vec<usize>)> = Vec::new();
            for t in &transitions {
                let key = (t.from, t.to);
                match types.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, v)) => v.push(t.index),
                    None => types.push((key, vec![t.index])),
                }
            }
            let mut events = Vec::new();
            for (name, truth_idx) in &classes {
                let mut assoc = Vec::new();
                let mut predicted = Vec::new();
                for (key, idx) in &types {
                    let r = match_events(idx, truth_idx, options.max_window_ms, record.sample_rate());
                    let frac = r.matched as f64 / idx.len().max(1) as f64;
                    if frac >= options.association_threshold {
                        assoc.push(*key);
                        predicted.extend_from_slice(idx);
                    }
                }
                predicted.sort_unstable();
                let report =
                    match_events(&predicted, truth_idx, options.max_window_ms, record.sample_rate());
                events.push(EventReport {
                    event: name.to_string(),
                    transition_types: assoc,
                    report,
                });
            }
            let total = truth.heel_strikes.len() + truth.toe_offs.len();
            (
                Some(truth),
                Some(GaitReport {
                    phases: outcome.diagnostics.num_modes,
                    events,
                    total_truth_events: total,
                }),
            )
        }
    };
    Ok(GaitSegmentation { labeling: outcome.labeling, transitions, truth, report })
}

/// Synthetic two-mode walking surrogate: a planar oscillator whose angular
/// rate switches with the sign of its second coordinate, mixed linearly into
/// the 12 kinematic channels; pressure channels are clean square waves
/// aligned with the switches. Returns the record and the true switch sample
/// indices (post-trim).
pub fn synthetic_gait(
    duration_seconds: f64,
    sample_rate: f64,
    noise: f64,
    seed: u64,
) -> Result<(GaitRecord, Vec<usize>)> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    let n = (duration_seconds * sample_rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // underlying 4-D state: a slow phase pair driving the mode switches and
    // a fast pair whose frequency depends on the mode; fixed 12x4 mixing,
    // slow components attenuated so the fast dynamics dominate the window
    // fits
    let mix: Vec<[f64; 4]> = (0..12)
        .map(|_| {
            [
                0.3 * rng.random_range(-1.0..1.0),
                0.3 * rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let slow_rate = std::f64::consts::PI / 0.5; // half-cycle 0.5 s
    let fast_rate = [
        std::f64::consts::TAU * 12.5, // mode 0
        std::f64::consts::TAU * 20.0, // mode 1
    ];
    let mut theta_s: f64 = 0.01; // start just inside mode 0
    let mut theta_f: f64 = 0.0;
    let mut switches = Vec::new();
    let mut samples = Vec::with_capacity(n);
    let mut validation = Vec::with_capacity(n);
    let mut prev_mode = 0usize;
    for k in 0..n {
        let mode = if theta_s.sin() >= 0.0 { 0 } else { 1 };
        if mode != prev_mode {
            switches.push(k);
            prev_mode = mode;
        }
        let u = [theta_s.cos(), theta_s.sin(), theta_f.cos(), theta_f.sin()];
        let row: Vec<f64> = mix
            .iter()
            .map(|m| {
                m.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
                    + noise * rng.random_range(-1.0..1.0)
            })
            .collect();
        samples.push(row);
        // right foot loaded in mode 0, left in mode 1; pressure levels far
        // apart relative to the hysteresis band
        let (r, l) = if mode == 0 { (0.9, 0.1) } else { (0.1, 0.9) };
        let jitter = 0.01 * rng.random_range(-1.0..1.0);
        validation.push(vec![r + jitter, r + jitter, l + jitter, l + jitter]);
        theta_s = (theta_s + slow_rate / sample_rate) % std::f64::consts::TAU;
        theta_f = (theta_f + fast_rate[mode] / sample_rate) % std::f64::consts::TAU;
    }
    let dt = 1.0 / sample_rate;
    let analysis = Trajectory::new(
        samples,
        dt,
        ANALYSIS_CHANNELS.iter().map(|s| s.to_string()).collect(),
    )?;
    let validation = Trajectory::new(
        validation,
        dt,
        VALIDATION_CHANNELS.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok((GaitRecord::new(analysis, Some(validation), "synthetic".into())?, switches))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::BasisSpec;
    use crate::ncd::WindowingPlan;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schmitt_constant_above_threshold() {
        assert_eq!(threshold_contact(&[2.0, 2.0, 2.0], 1.0, 0.2), vec![1, 1, 1]);
    }

    #[test]
    fn schmitt_clean_square_wave() {
        let sig = [0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        assert_eq!(threshold_contact(&sig, 0.5, 0.2), vec![0, 0, 1, 1, 0, 1]);
    }

    #[test]
    fn schmitt_rejects_sub_hysteresis_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut clean = Vec::new();
        let mut noisy = Vec::new();
        for k in 0..400 {
            let v = if (k / 100) % 2 == 0 { 0.0 } else { 1.0 };
            clean.push(v);
            noisy.push(v + rng.random_range(-0.04..0.04));
        }
        let edges = |b: &[u8]| b.windows(2).filter(|w| w[0] != w[1]).count();
        let cb = threshold_contact(&clean, 0.5, 0.1);
        let nb = threshold_contact(&noisy, 0.5, 0.1);
        assert_eq!(edges(&cb), edges(&nb));
    }

    #[test]
    fn contact_edges_hand_computed() {
        let heel = [0, 0, 0, 1, 1, 1, 0, 0, 1, 1];
        let toe = [1, 1, 1, 0, 0, 0, 1, 1, 1, 1];
        let ev = detect_contact_events(&heel, &toe, Side::Right).unwrap();
        assert_eq!(ev.heel_strike_indices(), vec![3, 8]);
        assert_eq!(ev.toe_off_indices(), vec![3]);
    }

    #[test]
    fn contact_all_zero_no_events() {
        let ev = detect_contact_events(&[0; 5], &[0; 5], Side::Left).unwrap();
        assert!(ev.heel_strikes.is_empty() && ev.toe_offs.is_empty());
    }

    #[test]
    fn contact_rejects_non_binary() {
        assert!(detect_contact_events(&[0, 2], &[0, 0], Side::Left).is_err());
    }

    fn labeling_of(labels: Vec<i32>) -> ModeLabeling {
        ModeLabeling { num_modes: 2, labels, votes: vec![] }
    }

    #[test]
    fn transition_basic() {
        let t = extract_mode_transitions(&labeling_of(vec![0, 0, 0, 1, 1, 1]), 2);
        assert_eq!(t, vec![Transition { index: 3, from: 0, to: 1 }]);
    }

    #[test]
    fn transition_blip_suppressed() {
        let t = extract_mode_transitions(&labeling_of(vec![0, 0, 0, 1, 0, 1, 1]), 2);
        assert_eq!(t, vec![Transition { index: 5, from: 0, to: 1 }]);
    }

    #[test]
    fn transition_min_dwell_one_emits_all() {
        let t = extract_mode_transitions(&labeling_of(vec![0, 1, 0]), 1);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn match_exact() {
        let r = match_events(&[10, 20, 30], &[10, 20, 30], 100.0, 500.0);
        assert_eq!(r.false_positives, 0);
        assert_eq!(r.false_negatives, 0);
        assert!(r.offsets_ms.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn match_anticipatory_offset_is_negative() {
        // 3 samples early at 500 Hz = -6 ms
        let r = match_events(&[7, 17, 27], &[10, 20, 30], 100.0, 500.0);
        assert_eq!(r.matched, 3);
        for &o in &r.offsets_ms {
            assert_relative_eq!(o, -6.0, epsilon = 1e-12);
        }
        assert_relative_eq!(r.mean_abs_offset_ms, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn match_spurious_prediction_counted() {
        let truth: Vec<usize> = (1..=10).map(|k| k * 100).collect();
        let mut pred = truth.clone();
        pred.push(455); // spurious, > 100 ms from everything at 500 Hz
        let r = match_events(&pred, &truth, 100.0, 500.0);
        assert_eq!(r.false_positives, 1);
        assert_relative_eq!(r.false_positive_rate, 1.0 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn match_swap_swaps_fp_fn() {
        let a = [10, 50, 90];
        let b = [12, 50];
        let r1 = match_events(&a, &b, 20.0, 500.0);
        let r2 = match_events(&b, &a, 20.0, 500.0);
        assert_eq!(r1.false_positives, r2.false_negatives);
        assert_eq!(r1.false_negatives, r2.false_positives);
    }

    #[test]
    fn match_totals_consistent() {
        let r = match_events(&[10, 200], &[12, 400, 600], 50.0, 500.0);
        assert_eq!(r.matched + r.false_negatives, r.total_truth_events);
    }

    #[test]
    fn load_trims_and_splits_channels() {
        let (record, _) = synthetic_gait(4.0, 100.0, 0.0, 1).unwrap();
        let mut csv = String::from("time");
        for c in ANALYSIS_CHANNELS.iter().chain(VALIDATION_CHANNELS.iter()) {
            csv.push_str(&format!(",{c}"));
        }
        csv.push('\n');
        for k in 0..record.analysis().len() {
            csv.push_str(&format!("{:.4}", record.analysis().time(k)));
            for v in record.analysis().sample(k).iter().chain(record.validation().unwrap().sample(k)) {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        let schema = GaitSchema { trim_seconds: 1.0, require_validation: true };
        let loaded = load_gait_csv(&csv, &schema).unwrap();
        assert_eq!(loaded.analysis().len(), record.analysis().len() - 100);
        assert_eq!(loaded.analysis().dim(), 12);
        assert_eq!(loaded.validation().unwrap().dim(), 4);
    }

    #[test]
    fn load_reports_missing_column() {
        let csv = "time,r_knee_angle\n0.0,1.0\n0.01,1.0\n";
        match load_gait_csv(csv, &GaitSchema::default()) {
            Err(Error::Load(msg)) => assert!(msg.contains("r_knee_velocity")),
            other => panic!("expected load error, got ok={}", other.is_ok()),
        }
    }

    #[test]
    fn synthetic_switches_align_with_pressure_events() {
        let (record, switches) = synthetic_gait(6.0, 500.0, 0.0, 7).unwrap();
        let truth = ground_truth_events(record.validation().unwrap()).unwrap();
        let mut events = truth.heel_strike_indices();
        events.sort_unstable();
        // every switch has a heel strike within one sample
        for &s in &switches {
            assert!(
                events.iter().any(|&e| (e as i64 - s as i64).abs() <= 1),
                "switch at {s} unmatched"
            );
        }
    }

    #[test]
    fn segment_synthetic_gait_end_to_end() {
        let (record, switches) = synthetic_gait(6.0, 500.0, 1e-3, 11).unwrap();
        let mut config = NcdConfig::new(BasisSpec::identity(12));
        config.windowing = WindowingPlan { window_len: 30, stride: 10 };
        config.min_cluster_size = Some(10);
        config.svm_epochs = 30;
        config.ridge = 1e-4; // windows are rank-deficient; damp noise directions
        let seg = segment_gait(&record, &config, &SegmentOptions::default()).unwrap();
        let report = seg.report.expect("validation present");
        assert!(report.phases >= 2, "phases {}", report.phases);
        let pred: Vec<usize> = seg.transitions.iter().map(|t| t.index).collect();
        let r = match_events(&pred, &switches, 100.0, record.sample_rate());
        let err = r.false_positive_rate + r.false_negative_rate;
        assert!(err <= 0.05, "FP+FN {err}");
        // two window strides at stride 10 → 20 samples → 40 ms
        assert!(r.mean_abs_offset_ms <= 40.0, "offset {}", r.mean_abs_offset_ms);
    }
}
