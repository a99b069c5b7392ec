//! Learns a switched model of the hopper from logged data: mode discovery
//! on the state channels, a guard classifier over translated states, and
//! control-extended per-mode operators ready for the receding-horizon
//! controller.

use serde::{Deserialize, Serialize};

use crate::clustering::{self, SelectionMethod};
use crate::error::{Error, Result};
use crate::indicator::{classify, train_indicator};
use crate::lifting::{BasisSpec, BasisTerm};
use crate::ncd::{
    fit_local_models_shifted, fit_mode_models_shifted, propagate_labels, shift_origin,
    window_dataset, HybridModel, ModeLabeling, WindowingPlan,
};
use crate::slip::{Mode, SlipLog};
use crate::trajectory::Trajectory;

/// Horizontal-position channels of the 5-state hopper: x_m and x_t. The
/// hopper's dynamics and guard are invariant to translating both together.
pub const SLIP_SHIFT_CHANNELS: [usize; 2] = [0, 4];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlipLearnConfig {
    pub windowing: WindowingPlan,
    /// Basis for the per-window local fits (5 state channels).
    pub local_basis: BasisSpec,
    /// Basis for the guard classifier (5 state channels, translated frame).
    pub indicator_basis: BasisSpec,
    /// Basis for the per-mode dynamics (5 states + 2 controls).
    pub dynamics_basis: BasisSpec,
    pub local_ridge: f64,
    pub dynamics_ridge: f64,
    pub min_cluster_size: Option<usize>,
    pub svm_reg: f64,
    pub svm_epochs: usize,
    /// Plant samples per model step for the dynamics fit.
    pub substeps: usize,
    /// Decimated samples dropped on each side of a label change before
    /// pairing the dynamics data.
    pub boundary_guard_band: usize,
}

/// Quadratic leg-geometry terms: the squared leg length is a combination of
/// x_m², x_m·x_t, x_t², and z_m².
fn leg_quadratics() -> Vec<BasisTerm> {
    vec![
        BasisTerm::Product { i: 0, j: 0 },
        BasisTerm::Product { i: 0, j: 4 },
        BasisTerm::Product { i: 4, j: 4 },
        BasisTerm::Product { i: 2, j: 2 },
        BasisTerm::Constant,
    ]
}

impl Default for SlipLearnConfig {
    fn default() -> Self {
        let local_basis = BasisSpec::with_terms(5, leg_quadratics()).unwrap();
        let indicator_basis = BasisSpec::with_terms(5, leg_quadratics()).unwrap();
        let dynamics_basis = BasisSpec::with_terms(
            7,
            [
                BasisTerm::Product { i: 0, j: 0 },
                BasisTerm::Product { i: 0, j: 4 },
                BasisTerm::Product { i: 4, j: 4 },
                BasisTerm::Product { i: 2, j: 2 },
                BasisTerm::Product { i: 0, j: 2 },
                BasisTerm::Product { i: 2, j: 4 },
                // thrust acts along the leg: couple it to the geometry
                BasisTerm::Product { i: 5, j: 0 },
                BasisTerm::Product { i: 5, j: 2 },
                BasisTerm::Product { i: 5, j: 4 },
                BasisTerm::Constant,
            ],
        )
        .unwrap();
        Self {
            windowing: WindowingPlan { window_len: 50, stride: 25 },
            local_basis,
            indicator_basis,
            dynamics_basis,
            local_ridge: 1e-6,
            dynamics_ridge: 1e-8,
            min_cluster_size: None,
            svm_reg: 1e-4,
            svm_epochs: 100,
            substeps: 10,
            boundary_guard_band: 3,
        }
    }
}

pub struct SlipLearnOutcome {
    pub model: HybridModel,
    pub labeling: ModeLabeling,
    pub num_modes: usize,
    pub noise_window_fraction: f64,
    /// Discovered label → true mode, by majority over the training log
    /// (available because the log carries ground-truth modes).
    pub label_modes: Vec<(i32, Mode)>,
}

/// Full discovery-and-fit pass. Mode discovery and the guard classifier
/// need a log whose windows follow the plant's natural closed-loop motion;
/// the control-extended dynamics fit needs independently excited controls or
/// the regression credits the oracle's steering to its thrust. No single log
/// serves both, so discovery runs on `log` and the dynamics fit on
/// `excited`, labeled by the learned guard.
pub fn learn_slip_model(
    log: &SlipLog,
    excited: &SlipLog,
    config: &SlipLearnConfig,
) -> Result<SlipLearnOutcome> {
    let traj = &log.trajectory;
    let ranges = window_dataset(traj.len(), &config.windowing)?;
    let points = fit_local_models_shifted(
        traj,
        &ranges,
        &config.local_basis,
        config.local_ridge,
        &SLIP_SHIFT_CHANNELS,
    )?;
    // a varied-target log makes the stance operators heterogeneous; a large
    // minimum cluster size merges everything into one cluster
    let mcs = config.min_cluster_size.unwrap_or((points.len() / 40).max(10));
    let clusters = clustering::hdbscan_with(&points, mcs, mcs, SelectionMethod::ExcessOfMass)
        .map_err(|e| Error::Pipeline { stage: "clustering".into(), message: e.to_string() })?;
    if clusters.num_clusters == 0 {
        return Err(Error::Pipeline {
            stage: "clustering".into(),
            message: "all windows labeled noise".into(),
        });
    }
    let labeling = propagate_labels(traj.len(), &ranges, &clusters.labels)?;

    // guard classifier over translated states
    let mut states = Vec::new();
    let mut labels = Vec::new();
    for (s, &l) in traj.samples().iter().zip(&labeling.labels) {
        if l >= 0 {
            states.push(shift_origin(s, &SLIP_SHIFT_CHANNELS).0);
            labels.push(l);
        }
    }
    let indicator = train_indicator(
        &states,
        &labels,
        &config.indicator_basis,
        config.svm_reg,
        config.svm_epochs,
    )
    .map_err(|e| Error::Pipeline { stage: "indicator".into(), message: e.to_string() })?;

    // control-extended dynamics at the decimated model rate, on the excited
    // log, labeled by the guard we just learned
    let ext = extended_trajectory(excited)?;
    let ext_dec = ext.decimate(config.substeps)?;
    let mut labels_dec: Vec<i32> = ext_dec
        .samples()
        .iter()
        .map(|s| classify(&indicator, &shift_origin(&s[..5], &SLIP_SHIFT_CHANNELS).0))
        .collect::<Result<_>>()?;
    // propagated labels are least reliable right at mode changes; a pair
    // mislabeled across a touchdown attributes the impact to whatever
    // control it carries, poisoning the control columns. Blank a guard band
    // around every label change before pairing.
    let band = config.boundary_guard_band;
    let changes: Vec<usize> = labels_dec
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(k, _)| k + 1)
        .collect();
    for k in changes {
        let lo = k.saturating_sub(band);
        let hi = (k + band).min(labels_dec.len());
        for l in &mut labels_dec[lo..hi] {
            *l = -1;
        }
    }
    let labeling_dec = ModeLabeling {
        labels: labels_dec,
        num_modes: labeling.num_modes,
        votes: vec![],
    };
    let model = fit_mode_models_shifted(
        &ext_dec,
        &labeling_dec,
        &config.dynamics_basis,
        config.dynamics_ridge,
        indicator,
        2,
        SLIP_SHIFT_CHANNELS.to_vec(),
    )?;

    let label_modes = model
        .mode_labels
        .iter()
        .map(|&l| {
            let stance = labeling
                .labels
                .iter()
                .zip(&log.modes)
                .filter(|(&ll, &m)| ll == l && m == Mode::Stance)
                .count();
            let total = labeling.labels.iter().filter(|&&ll| ll == l).count();
            (l, if 2 * stance > total { Mode::Stance } else { Mode::Flight })
        })
        .collect();
    let noise_windows = clusters.labels.iter().filter(|&&l| l == clustering::NOISE).count();
    Ok(SlipLearnOutcome {
        model,
        labeling,
        num_modes: clusters.num_clusters,
        noise_window_fraction: noise_windows as f64 / clusters.labels.len().max(1) as f64,
        label_modes,
    })
}

/// Target schedule for training-data generation: varying speed and apex,
/// including direction changes, so stance data covers toe placements on
/// both sides of the mass.
pub fn training_schedule() -> Vec<(f64, crate::slip::HopTarget)> {
    use crate::slip::HopTarget;
    vec![
        (0.0, HopTarget { forward_velocity: 0.4, apex_height: 1.6 }),
        (7.5, HopTarget { forward_velocity: -0.5, apex_height: 1.6 }),
        (15.0, HopTarget { forward_velocity: 0.8, apex_height: 1.7 }),
        (22.5, HopTarget { forward_velocity: -0.2, apex_height: 1.5 }),
    ]
}

/// Scheduled oracle with excitation noise on both controls. The oracle's
/// thrust is tightly correlated with its own steering, so a plain log lets
/// the regression credit velocity changes to thrust; independent dither
/// breaks that correlation.
pub struct DitheredController {
    inner: crate::slip::ScheduledOracleController,
    params: crate::slip::SlipParams,
    rng: rand_chacha::ChaCha8Rng,
    thrust_amp: f64,
    toe_amp: f64,
    hold: usize,
    counter: usize,
    current: (f64, f64),
}

impl DitheredController {
    pub fn new(
        inner: crate::slip::ScheduledOracleController,
        params: crate::slip::SlipParams,
        thrust_amp: f64,
        toe_amp: f64,
        hold: usize,
        seed: u64,
    ) -> Self {
        use rand::SeedableRng;
        Self {
            inner,
            params,
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
            thrust_amp,
            toe_amp,
            hold,
            counter: 0,
            current: (0.0, 0.0),
        }
    }
}

impl crate::slip::Controller for DitheredController {
    fn control(&mut self, s: &crate::slip::SlipState, t: f64) -> crate::slip::SlipControl {
        use rand::Rng;
        if self.counter == 0 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, amp: f64| {
                if amp > 0.0 { rng.random_range(-amp..amp) } else { 0.0 }
            };
            self.current = (
                draw(&mut self.rng, self.thrust_amp),
                draw(&mut self.rng, self.toe_amp),
            );
        }
        self.counter = (self.counter + 1) % self.hold.max(1);
        let u = self.inner.control(s, t);
        crate::slip::SlipControl {
            u_stance: u.u_stance + self.current.0,
            u_flight: u.u_flight + self.current.1,
        }
        .saturate(&self.params)
    }
}

/// Discovery run: scheduled oracle from a 2 m drop, so the learned
/// operators cover the same high-apex flight states the controller starts
/// in. No dither: window clustering needs the natural closed-loop motion.
pub fn discovery_log(duration: f64, params: &crate::slip::SlipParams) -> Result<SlipLog> {
    use crate::slip::{simulate, ScheduledOracleController, SlipState};
    let s0 = SlipState { x_m: 0.0, xdot_m: 0.0, z_m: 2.0, zdot_m: 0.0, x_t: 0.0 };
    let mut ctrl = ScheduledOracleController::new(*params, training_schedule())?;
    simulate(s0, &mut ctrl, duration, params)
}

/// Excitation run: same schedule with independent dither on both controls,
/// which the dynamics fit needs to attribute control effects honestly. The
/// dither holds each draw for 0.05 s — long enough for the hop dynamics to
/// show a response, short enough not to unseat the oracle.
pub fn excitation_log(duration: f64, params: &crate::slip::SlipParams) -> Result<SlipLog> {
    use crate::slip::{simulate, ScheduledOracleController, SlipState};
    let s0 = SlipState { x_m: 0.0, xdot_m: 0.0, z_m: 2.0, zdot_m: 0.0, x_t: 0.0 };
    let oracle = ScheduledOracleController::new(*params, training_schedule())?;
    let hold = (0.05 / params.dt).round() as usize;
    let mut ctrl = DitheredController::new(oracle, *params, 15.0, 0.5, hold, 7);
    simulate(s0, &mut ctrl, duration, params)
}

/// Receding-horizon configuration tuned for hopping the learned model at
/// 0.4 m/s. Thrust is bounded below at zero (negative thrust is outside the
/// training data and the model extrapolates badly there), and the toe gets
/// its full slew authority so it can still get ahead of a fast mass.
pub fn slip_mpc_config(params: &crate::slip::SlipParams) -> crate::mpc::MpcConfig {
    crate::mpc::MpcConfig {
        horizon: 60,
        candidates: 256,
        u_min: vec![0.0, -params.u_flight_max],
        u_max: vec![params.u_stance_max, params.u_flight_max],
        q_diag: vec![0.0, 50.0, 100.0, 0.0, 0.0],
        r_diag: vec![1e-3, 0.01],
        x_d: crate::mpc::Desired::Constant(vec![0.0, 0.4, 1.6, 0.0, 0.0]),
        seed: 0,
        model_dt: params.dt * 10.0,
        divergence_bound: 100.0,
        replan_interval: 20,
        substeps: 10,
        hold_steps: 5,
    }
}

/// 7-channel trajectory: the 5 states plus the two control channels.
pub fn extended_trajectory(log: &SlipLog) -> Result<Trajectory> {
    let samples: Vec<Vec<f64>> = log
        .trajectory
        .samples()
        .iter()
        .zip(&log.controls)
        .map(|(s, u)| {
            let mut v = s.clone();
            v.push(u.u_stance);
            v.push(u.u_flight);
            v
        })
        .collect();
    let mut channels: Vec<String> =
        log.trajectory.channels().iter().cloned().collect();
    channels.push("u_stance".into());
    channels.push("u_flight".into());
    Trajectory::new(samples, log.trajectory.dt(), channels)
}

/// Fraction of samples where the learned guard (mapped to true modes)
/// agrees with the analytic guard on a log.
pub fn guard_agreement(outcome: &SlipLearnOutcome, log: &SlipLog) -> Result<f64> {
    let mut agree = 0usize;
    for (s, &m) in log.trajectory.samples().iter().zip(&log.modes) {
        let shifted = shift_origin(s, &SLIP_SHIFT_CHANNELS).0;
        let label = classify(&outcome.model.indicator, &shifted)?;
        let mapped = outcome
            .label_modes
            .iter()
            .find(|(l, _)| *l == label)
            .map(|&(_, mode)| mode);
        if mapped == Some(m) {
            agree += 1;
        }
    }
    Ok(agree as f64 / log.trajectory.len() as f64)
}
