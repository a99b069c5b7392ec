//! End-to-end mode discovery: window the trajectory, fit a local operator
//! per window, cluster the operators, propagate cluster labels back to
//! samples, train the indicator, and fit one operator per discovered mode.

use serde::{Deserialize, Serialize};

use crate::clustering::{self, ClusterResult, PointSet, SelectionMethod, NOISE};
use crate::error::{Error, Result};
use crate::indicator::{train_indicator, IndicatorFunction};
use crate::lifting::{fit_koopman, BasisSpec, KoopmanModel, SnapshotPairs};
use crate::trajectory::Trajectory;

/// Sliding-window layout over a trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowingPlan {
    pub window_len: usize,
    pub stride: usize,
}

impl Default for WindowingPlan {
    fn default() -> Self {
        Self { window_len: 25, stride: 5 }
    }
}

/// Half-open sample ranges [a, b), one per window; a trailing partial window
/// is dropped.
pub fn window_dataset(traj_len: usize, plan: &WindowingPlan) -> Result<Vec<(usize, usize)>> {
    if plan.window_len < 2 {
        return Err(Error::Parameter("window_len must be at least 2".into()));
    }
    if plan.stride == 0 {
        return Err(Error::Parameter("stride must be positive".into()));
    }
    if plan.window_len > traj_len {
        return Err(Error::Parameter(format!(
            "window_len {} exceeds trajectory length {traj_len}",
            plan.window_len
        )));
    }
    let mut ranges = Vec::new();
    let mut start = 0;
    while start + plan.window_len <= traj_len {
        ranges.push((start, start + plan.window_len));
        start += plan.stride;
    }
    Ok(ranges)
}

/// Fits one operator per window and flattens it (row-major) into a point for
/// clustering.
pub fn fit_local_models(
    traj: &Trajectory,
    ranges: &[(usize, usize)],
    basis: &BasisSpec,
    ridge: f64,
) -> Result<PointSet> {
    fit_local_models_shifted(traj, ranges, basis, ridge, &[])
}

/// As [`fit_local_models`], but each window is translated into the frame of
/// its first sample per `shift_channels`, so windows of translation-
/// invariant dynamics produce comparable operators wherever they sit.
pub fn fit_local_models_shifted(
    traj: &Trajectory,
    ranges: &[(usize, usize)],
    basis: &BasisSpec,
    ridge: f64,
    shift_channels: &[usize],
) -> Result<PointSet> {
    let mut points = Vec::with_capacity(ranges.len());
    for (w, &(a, b)) in ranges.iter().enumerate() {
        let window: Vec<Vec<f64>> = if shift_channels.is_empty() {
            traj.samples()[a..b].to_vec()
        } else {
            let offset = traj.sample(a)[shift_channels[0]];
            traj.samples()[a..b]
                .iter()
                .map(|s| {
                    let mut v = s.clone();
                    for &c in shift_channels {
                        v[c] -= offset;
                    }
                    v
                })
                .collect()
        };
        let pairs = SnapshotPairs::from_sequence(&window).map_err(|e| Error::Pipeline {
            stage: format!("local fit, window {w}"),
            message: e.to_string(),
        })?;
        let model = fit_koopman(&pairs, basis, ridge).map_err(|e| Error::Pipeline {
            stage: format!("local fit, window {w}"),
            message: e.to_string(),
        })?;
        points.push(model.k.transpose().as_slice().to_vec());
    }
    PointSet::new(points)
}

/// Per-sample mode labels with voting provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeLabeling {
    pub labels: Vec<i32>,
    pub num_modes: usize,
    /// Vote counts per sample: (label, number of covering windows).
    pub votes: Vec<Vec<(i32, u32)>>,
}

impl ModeLabeling {
    /// CSV export: sample_index,time,label.
    pub fn to_csv(&self, dt: f64) -> String {
        let mut out = String::from("sample_index,time,label\n");
        for (k, &l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{k},{:.6},{l}\n", k as f64 * dt));
        }
        out
    }
}

/// Extends window labels to samples: majority vote among covering non-noise
/// windows, ties broken by the window whose center is nearest the sample,
/// noise-only coverage stays noise.
pub fn propagate_labels(
    traj_len: usize,
    ranges: &[(usize, usize)],
    window_labels: &[i32],
) -> Result<ModeLabeling> {
    if ranges.len() != window_labels.len() {
        return Err(Error::Parameter("one label per window range required".into()));
    }
    let mut votes: Vec<Vec<(i32, u32)>> = vec![Vec::new(); traj_len];
    let mut nearest: Vec<Vec<(i32, f64)>> = vec![Vec::new(); traj_len];
    for (&(a, b), &label) in ranges.iter().zip(window_labels) {
        if label == NOISE {
            continue;
        }
        let center = a as f64 + (b - a - 1) as f64 / 2.0;
        for k in a..b.min(traj_len) {
            let entry = votes[k].iter_mut().find(|(l, _)| *l == label);
            match entry {
                Some((_, c)) => *c += 1,
                None => votes[k].push((label, 1)),
            }
            let dist = (center - k as f64).abs();
            let ne = nearest[k].iter_mut().find(|(l, _)| *l == label);
            match ne {
                Some((_, d)) => {
                    if dist < *d {
                        *d = dist;
                    }
                }
                None => nearest[k].push((label, dist)),
            }
        }
    }
    let labels: Vec<i32> = (0..traj_len)
        .map(|k| {
            if votes[k].is_empty() {
                return NOISE;
            }
            let max_count = votes[k].iter().map(|&(_, c)| c).max().unwrap();
            let tied: Vec<i32> = votes[k]
                .iter()
                .filter(|&&(_, c)| c == max_count)
                .map(|&(l, _)| l)
                .collect();
            if tied.len() == 1 {
                tied[0]
            } else {
                // nearest window center wins; equal distances fall back to
                // the lowest label
                let mut best = tied[0];
                let mut best_d = f64::INFINITY;
                let mut sorted = tied.clone();
                sorted.sort_unstable();
                for l in sorted {
                    let d = nearest[k]
                        .iter()
                        .find(|&&(nl, _)| nl == l)
                        .map(|&(_, d)| d)
                        .unwrap_or(f64::INFINITY);
                    if d < best_d {
                        best_d = d;
                        best = l;
                    }
                }
                best
            }
        })
        .collect();
    let num_modes = labels
        .iter()
        .filter(|&&l| l >= 0)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(ModeLabeling { labels, num_modes, votes })
}

/// Pipeline configuration; clustering defaults derive from the window count
/// when left unset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NcdConfig {
    pub windowing: WindowingPlan,
    pub basis: BasisSpec,
    pub ridge: f64,
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub selection: SelectionMethod,
    pub svm_reg: f64,
    pub svm_epochs: usize,
}

impl NcdConfig {
    pub fn new(basis: BasisSpec) -> Self {
        Self {
            windowing: WindowingPlan::default(),
            basis,
            ridge: 1e-8,
            min_cluster_size: None,
            min_samples: None,
            selection: SelectionMethod::ExcessOfMass,
            svm_reg: 1e-4,
            svm_epochs: 200,
        }
    }

    /// 5% of the window count, floored at 5.
    fn resolved_min_cluster_size(&self, num_windows: usize) -> usize {
        self.min_cluster_size.unwrap_or((num_windows / 20).max(5))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NcdDiagnostics {
    pub num_modes: usize,
    pub num_windows: usize,
    pub noise_window_fraction: f64,
    pub windows_per_cluster: Vec<usize>,
    pub svm_train_accuracy: f64,
}

pub struct NcdOutcome {
    pub indicator: IndicatorFunction,
    pub labeling: ModeLabeling,
    pub window_labels: ClusterResult,
    pub ranges: Vec<(usize, usize)>,
    pub diagnostics: NcdDiagnostics,
}

/// Runs the full discovery pipeline on a trajectory.
pub fn run_ncd(traj: &Trajectory, config: &NcdConfig) -> Result<NcdOutcome> {
    if config.basis.state_dim() != traj.dim() {
        return Err(Error::Parameter(format!(
            "basis state_dim {} does not match trajectory channels {}",
            config.basis.state_dim(),
            traj.dim()
        )));
    }
    let ranges = window_dataset(traj.len(), &config.windowing)?;
    let points = fit_local_models(traj, &ranges, &config.basis, config.ridge)?;
    let mcs = config.resolved_min_cluster_size(points.len());
    let ms = config.min_samples.unwrap_or(mcs);
    let clusters = clustering::hdbscan_with(&points, mcs, ms, config.selection)
        .map_err(|e| Error::Pipeline { stage: "clustering".into(), message: e.to_string() })?;
    if clusters.num_clusters == 0 {
        return Err(Error::Pipeline {
            stage: "clustering".into(),
            message: "all windows labeled noise; try a smaller min_cluster_size or \
                      longer windows"
                .into(),
        });
    }
    let labeling = propagate_labels(traj.len(), &ranges, &clusters.labels)?;
    let mut states = Vec::new();
    let mut labels = Vec::new();
    for (s, &l) in traj.samples().iter().zip(&labeling.labels) {
        if l >= 0 {
            states.push(s.clone());
            labels.push(l);
        }
    }
    let indicator =
        train_indicator(&states, &labels, &config.basis, config.svm_reg, config.svm_epochs)
            .map_err(|e| Error::Pipeline { stage: "indicator".into(), message: e.to_string() })?;
    let noise_windows = clusters.labels.iter().filter(|&&l| l == NOISE).count();
    let mut windows_per_cluster = vec![0usize; clusters.num_clusters];
    for &l in &clusters.labels {
        if l >= 0 {
            windows_per_cluster[l as usize] += 1;
        }
    }
    let diagnostics = NcdDiagnostics {
        num_modes: clusters.num_clusters,
        num_windows: clusters.labels.len(),
        noise_window_fraction: noise_windows as f64 / clusters.labels.len() as f64,
        windows_per_cluster,
        svm_train_accuracy: indicator.train_accuracy,
    };
    Ok(NcdOutcome {
        indicator,
        labeling,
        window_labels: clusters,
        ranges,
        diagnostics,
    })
}

/// The controllable artifact: per-mode operators plus the learned guard.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridModel {
    pub modes: Vec<KoopmanModel>,
    pub mode_labels: Vec<i32>,
    pub indicator: IndicatorFunction,
    /// Trailing channels of the dynamics basis that carry controls rather
    /// than plant state (zero for state-only models).
    pub control_dim: usize,
    /// Translation-invariance preprocessing: before lifting, the value of
    /// the first listed channel is subtracted from every listed channel (and
    /// added back after prediction). Empty disables the shift.
    #[serde(default)]
    pub shift_channels: Vec<usize>,
}

/// Applies a model's origin shift to a state vector, returning the shifted
/// copy and the offset that restores the original frame.
pub fn shift_origin(x: &[f64], shift_channels: &[usize]) -> (Vec<f64>, f64) {
    if shift_channels.is_empty() {
        return (x.to_vec(), 0.0);
    }
    let offset = x[shift_channels[0]];
    let mut out = x.to_vec();
    for &c in shift_channels {
        out[c] -= offset;
    }
    (out, offset)
}

/// Inverse of [`shift_origin`].
pub fn unshift_origin(x: &mut [f64], shift_channels: &[usize], offset: f64) {
    for &c in shift_channels {
        if c < x.len() {
            x[c] += offset;
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedModel {
    format_version: u32,
    model: HybridModel,
}

impl HybridModel {
    /// Plant-state dimension (dynamics channels minus control channels).
    pub fn plant_dim(&self) -> usize {
        self.modes[0].basis.state_dim() - self.control_dim
    }

    pub fn model_for(&self, label: i32) -> Option<&KoopmanModel> {
        self.mode_labels
            .iter()
            .position(|&l| l == label)
            .map(|i| &self.modes[i])
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&VersionedModel {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: VersionedModel =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if v.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                v.format_version
            )));
        }
        Ok(v.model)
    }
}

/// Fits one operator per mode on within-mode snapshot pairs. Pairs that
/// straddle a label change or touch a noise sample are discarded; every mode
/// must keep at least N+1 pairs.
pub fn fit_mode_models(
    traj: &Trajectory,
    labeling: &ModeLabeling,
    basis: &BasisSpec,
    ridge: f64,
    indicator: IndicatorFunction,
    control_dim: usize,
) -> Result<HybridModel> {
    fit_mode_models_shifted(traj, labeling, basis, ridge, indicator, control_dim, Vec::new())
}

/// As [`fit_mode_models`], but each snapshot pair is translated into the
/// frame of its first element per `shift_channels` before fitting.
pub fn fit_mode_models_shifted(
    traj: &Trajectory,
    labeling: &ModeLabeling,
    basis: &BasisSpec,
    ridge: f64,
    indicator: IndicatorFunction,
    control_dim: usize,
    shift_channels: Vec<usize>,
) -> Result<HybridModel> {
    if labeling.labels.len() != traj.len() {
        return Err(Error::Parameter("labeling length mismatch".into()));
    }
    let mut present: Vec<i32> = labeling.labels.iter().cloned().filter(|&l| l >= 0).collect();
    present.sort_unstable();
    present.dedup();
    if present.is_empty() {
        return Err(Error::Pipeline {
            stage: "mode models".into(),
            message: "no labeled samples".into(),
        });
    }
    let mut modes = Vec::with_capacity(present.len());
    for &label in &present {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 0..traj.len() - 1 {
            if labeling.labels[k] == label && labeling.labels[k + 1] == label {
                let (x, offset) = shift_origin(traj.sample(k), &shift_channels);
                let mut y = traj.sample(k + 1).to_vec();
                for &c in &shift_channels {
                    y[c] -= offset;
                }
                xs.push(x);
                ys.push(y);
            }
        }
        let needed = basis.lifted_dim() + 1;
        if xs.len() < needed {
            return Err(Error::Pipeline {
                stage: "mode models".into(),
                message: format!(
                    "mode {label} has only {} usable pairs, needs at least {needed}",
                    xs.len()
                ),
            });
        }
        let pairs = SnapshotPairs::new(xs, ys)?;
        modes.push(fit_koopman(&pairs, basis, ridge)?);
    }
    Ok(HybridModel { modes, mode_labels: present, indicator, control_dim, shift_channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicator::classify;
    use approx::assert_relative_eq;

    fn switched_scalar(n1: usize, n2: usize) -> Trajectory {
        let mut x = 1.0;
        let mut samples = Vec::new();
        for k in 0..n1 + n2 {
            samples.push(vec![x]);
            x *= if k < n1 { 0.9 } else { 0.5 };
        }
        Trajectory::new(samples, 0.01, vec!["x".into()]).unwrap()
    }

    #[test]
    fn window_ranges_basic() {
        let plan = WindowingPlan { window_len: 4, stride: 2 };
        assert_eq!(window_dataset(10, &plan).unwrap(), vec![(0, 4), (2, 6), (4, 8), (6, 10)]);
    }

    #[test]
    fn window_full_length() {
        let plan = WindowingPlan { window_len: 10, stride: 1 };
        assert_eq!(window_dataset(10, &plan).unwrap(), vec![(0, 10)]);
    }

    #[test]
    fn window_drops_partial_tail() {
        let plan = WindowingPlan { window_len: 4, stride: 4 };
        assert_eq!(window_dataset(7, &plan).unwrap(), vec![(0, 4)]);
    }

    #[test]
    fn window_rejects_oversize() {
        let plan = WindowingPlan { window_len: 11, stride: 1 };
        assert!(window_dataset(10, &plan).is_err());
    }

    #[test]
    fn local_models_track_the_switch() {
        let traj = switched_scalar(50, 50);
        let plan = WindowingPlan { window_len: 10, stride: 5 };
        let ranges = window_dataset(traj.len(), &plan).unwrap();
        let basis = BasisSpec::identity(1);
        let points = fit_local_models(&traj, &ranges, &basis, 0.0).unwrap();
        let mut straddling = 0;
        for (&(a, b), p) in ranges.iter().zip(points.points()) {
            if b <= 50 {
                assert_relative_eq!(p[0], 0.9, epsilon = 1e-8);
            } else if a >= 50 {
                assert_relative_eq!(p[0], 0.5, epsilon = 1e-8);
            } else {
                straddling += 1;
            }
        }
        assert!(straddling <= 2, "{straddling} straddling windows");
    }

    #[test]
    fn local_models_constant_trajectory() {
        let samples = vec![vec![2.0]; 30];
        let traj = Trajectory::new(samples, 0.01, vec!["x".into()]).unwrap();
        let plan = WindowingPlan { window_len: 10, stride: 10 };
        let ranges = window_dataset(traj.len(), &plan).unwrap();
        let points = fit_local_models(&traj, &ranges, &BasisSpec::identity(1), 0.0).unwrap();
        for p in points.points() {
            assert_relative_eq!(p[0], points.points()[0][0], epsilon = 1e-12);
        }
    }

    #[test]
    fn single_window_point_set() {
        let traj = switched_scalar(5, 0);
        let plan = WindowingPlan { window_len: 5, stride: 5 };
        let ranges = window_dataset(traj.len(), &plan).unwrap();
        let points = fit_local_models(&traj, &ranges, &BasisSpec::identity(1), 0.0).unwrap();
        assert_eq!(points.len(), 1);
    }

    #[test]
    fn propagate_nonoverlapping_is_direct() {
        let ranges = vec![(0, 3), (3, 6)];
        let lab = propagate_labels(6, &ranges, &[1, 0]).unwrap();
        assert_eq!(lab.labels, vec![1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn propagate_majority_vote() {
        // sample 4 is covered by three windows labeled 0, 0, 1
        let ranges = vec![(0, 5), (2, 7), (4, 9)];
        let lab = propagate_labels(9, &ranges, &[0, 0, 1]).unwrap();
        assert_eq!(lab.labels[4], 0);
    }

    #[test]
    fn propagate_tie_breaks_to_nearest_center() {
        // sample 4: windows [0,6) center 2.5 (label 0) and [3,6) center 4 (label 1)
        let ranges = vec![(0, 6), (3, 6)];
        let lab = propagate_labels(6, &ranges, &[0, 1]).unwrap();
        assert_eq!(lab.labels[4], 1);
    }

    #[test]
    fn propagate_noise_only_coverage() {
        let ranges = vec![(0, 3), (3, 6)];
        let lab = propagate_labels(6, &ranges, &[-1, 0]).unwrap();
        assert_eq!(lab.labels, vec![-1, -1, -1, 0, 0, 0]);
    }

    #[test]
    fn run_ncd_recovers_two_modes_and_switch() {
        let traj = switched_scalar(50, 50);
        let mut config = NcdConfig::new(BasisSpec::identity(1));
        config.windowing = WindowingPlan { window_len: 10, stride: 5 };
        config.min_cluster_size = Some(5);
        let out = run_ncd(&traj, &config).unwrap();
        assert_eq!(out.diagnostics.num_modes, 2);
        // the indicator should localize the switch within a window length
        let switch_label = classify(&out.indicator, traj.sample(0)).unwrap();
        let mut change_at = None;
        for k in 0..traj.len() {
            if classify(&out.indicator, traj.sample(k)).unwrap() != switch_label {
                change_at = Some(k);
                break;
            }
        }
        let change_at = change_at.expect("indicator never switched");
        assert!(
            (change_at as i64 - 50).unsigned_abs() as usize <= 10,
            "switch found at {change_at}"
        );
    }

    #[test]
    fn run_ncd_single_mode() {
        let mut samples = Vec::new();
        let mut x = 1.0;
        for _ in 0..200 {
            samples.push(vec![x]);
            x *= 0.99;
        }
        let traj = Trajectory::new(samples, 0.01, vec!["x".into()]).unwrap();
        let mut config = NcdConfig::new(BasisSpec::identity(1));
        config.windowing = WindowingPlan { window_len: 10, stride: 5 };
        config.min_cluster_size = Some(5);
        let out = run_ncd(&traj, &config).unwrap();
        assert_eq!(out.diagnostics.num_modes, 1);
        assert_eq!(classify(&out.indicator, &[0.5]).unwrap(), 0);
    }

    #[test]
    fn mode_models_recover_switched_operators() {
        let traj = switched_scalar(50, 50);
        let mut config = NcdConfig::new(BasisSpec::identity(1));
        config.windowing = WindowingPlan { window_len: 10, stride: 5 };
        config.min_cluster_size = Some(5);
        let out = run_ncd(&traj, &config).unwrap();
        let hybrid =
            fit_mode_models(&traj, &out.labeling, &config.basis, 0.0, out.indicator, 0).unwrap();
        assert_eq!(hybrid.modes.len(), 2);
        let mut ops: Vec<f64> = hybrid.modes.iter().map(|m| m.k[(0, 0)]).collect();
        ops.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(ops[0], 0.5, epsilon = 1e-2);
        assert_relative_eq!(ops[1], 0.9, epsilon = 1e-2);
    }

    #[test]
    fn mode_model_pairs_never_straddle_labels() {
        // two-mode labeling with a boundary at 5; fitting must succeed while
        // skipping the straddling pair, checked via pair-count arithmetic
        let mut samples = Vec::new();
        for k in 0..20 {
            samples.push(vec![if k < 10 { 0.9f64.powi(k) } else { 0.5f64.powi(k - 9) }]);
        }
        let traj = Trajectory::new(samples, 0.01, vec!["x".into()]).unwrap();
        let labels: Vec<i32> = (0..20).map(|k| if k < 10 { 0 } else { 1 }).collect();
        let labeling = ModeLabeling { labels, num_modes: 2, votes: vec![] };
        let basis = BasisSpec::identity(1);
        let ind = crate::indicator::train_indicator(
            &traj.samples().to_vec(),
            &labeling.labels,
            &basis,
            1e-4,
            10,
        )
        .unwrap();
        let hybrid = fit_mode_models(&traj, &labeling, &basis, 0.0, ind, 0).unwrap();
        // 9 within-mode pairs per side out of 19 consecutive pairs
        assert_eq!(hybrid.modes.len(), 2);
        assert_relative_eq!(hybrid.model_for(0).unwrap().k[(0, 0)], 0.9, epsilon = 1e-10);
        assert_relative_eq!(hybrid.model_for(1).unwrap().k[(0, 0)], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn undertrained_mode_is_reported() {
        let traj = switched_scalar(4, 0);
        let labeling = ModeLabeling { labels: vec![0, 0, 1, 1], num_modes: 2, votes: vec![] };
        let basis = BasisSpec::identity(1);
        let ind = crate::indicator::train_indicator(
            &traj.samples().to_vec(),
            &labeling.labels,
            &basis,
            1e-4,
            10,
        )
        .unwrap();
        match fit_mode_models(&traj, &labeling, &basis, 0.0, ind, 0) {
            Err(Error::Pipeline { message, .. }) => assert!(message.contains("mode 0")),
            other => panic!("expected undertrained-mode error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let traj = switched_scalar(50, 50);
        let mut config = NcdConfig::new(BasisSpec::identity(1));
        config.windowing = WindowingPlan { window_len: 10, stride: 5 };
        config.min_cluster_size = Some(5);
        let a = run_ncd(&traj, &config).unwrap();
        let b = run_ncd(&traj, &config).unwrap();
        assert_eq!(a.labeling.labels, b.labeling.labels);
    }

    #[test]
    fn model_json_round_trip() {
        let traj = switched_scalar(50, 50);
        let mut config = NcdConfig::new(BasisSpec::identity(1));
        config.windowing = WindowingPlan { window_len: 10, stride: 5 };
        config.min_cluster_size = Some(5);
        let out = run_ncd(&traj, &config).unwrap();
        let hybrid =
            fit_mode_models(&traj, &out.labeling, &config.basis, 0.0, out.indicator, 0).unwrap();
        let json = hybrid.to_json().unwrap();
        let back = HybridModel::from_json(&json).unwrap();
        assert_eq!(back.mode_labels, hybrid.mode_labels);
        assert_eq!(back.modes[0].k, hybrid.modes[0].k);
    }
}
