//! Receding-horizon control over a learned switched linear model: random
//! shooting with a warm start, re-classifying the predicted state at every
//! step to pick the active mode operator.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicator::classify;
use crate::ncd::{shift_origin, unshift_origin, HybridModel};
use crate::slip::{slip_step, true_guard, SlipControl, SlipLog, SlipParams, SlipState, STATE_CHANNELS};
use crate::trajectory::Trajectory;

/// Desired state, constant or per-step; reads past the end hold the last
/// entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Desired {
    Constant(Vec<f64>),
    TimeIndexed(Vec<Vec<f64>>),
}

impl Desired {
    pub fn at(&self, k: usize) -> &[f64] {
        match self {
            Desired::Constant(x) => x,
            Desired::TimeIndexed(xs) => &xs[k.min(xs.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Lookahead in model steps.
    pub horizon: usize,
    /// Rollouts evaluated per replan; index 0 is the warm start.
    pub candidates: usize,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub x_d: Desired,
    pub seed: u64,
    /// Time covered by one model step.
    pub model_dt: f64,
    /// Predicted states whose norm exceeds this bound mark the rollout
    /// divergent (measured on the plant-state block, in the model's shifted
    /// frame).
    pub divergence_bound: f64,
    /// Plant steps between replans (closed loop only).
    pub replan_interval: usize,
    /// Plant steps covered by one model step (closed loop only).
    pub substeps: usize,
    /// Sampled candidate controls are held constant for this many model
    /// steps; longer holds explore sustained inputs instead of white noise.
    pub hold_steps: usize,
}

impl MpcConfig {
    pub fn validate(&self, control_dim: usize, plant_dim: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        if self.candidates == 0 {
            return Err(Error::Parameter("need at least one candidate".into()));
        }
        if self.u_min.len() != control_dim || self.u_max.len() != control_dim {
            return Err(Error::Parameter(format!(
                "saturation bounds must have {control_dim} entries"
            )));
        }
        if self.u_min.iter().zip(&self.u_max).any(|(a, b)| a > b) {
            return Err(Error::Parameter("u_min must not exceed u_max".into()));
        }
        if self.q_diag.len() != plant_dim {
            return Err(Error::Parameter(format!("q_diag must have {plant_dim} entries")));
        }
        if self.r_diag.len() != control_dim {
            return Err(Error::Parameter(format!("r_diag must have {control_dim} entries")));
        }
        if self.q_diag.iter().chain(&self.r_diag).any(|&v| v < 0.0) {
            return Err(Error::Parameter("Q and R must be entrywise nonnegative".into()));
        }
        if self.model_dt <= 0.0 {
            return Err(Error::Parameter("model_dt must be positive".into()));
        }
        if self.replan_interval == 0 || self.substeps == 0 {
            return Err(Error::Parameter("replan_interval and substeps must be positive".into()));
        }
        if self.hold_steps == 0 {
            return Err(Error::Parameter("hold_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Prediction under one candidate control sequence.
#[derive(Debug, Clone)]
pub struct SwitchedRollout {
    /// Plant-state predictions after each step (length ≤ horizon).
    pub states: Vec<Vec<f64>>,
    /// Mode label used at each step, from the indicator on the pre-step state.
    pub modes: Vec<i32>,
    /// Step at which the lifted state left the divergence bound, if any.
    pub divergent_at: Option<usize>,
}

/// Advances the switched model H steps under the given control sequence.
/// Each step classifies the current plant state, lifts state-plus-control,
/// and applies the selected mode operator.
pub fn rollout(model: &HybridModel, x0: &[f64], controls: &[Vec<f64>], bound: f64) -> Result<SwitchedRollout> {
    let d = model.plant_dim();
    let c = model.control_dim;
    if x0.len() != d {
        return Err(Error::Parameter(format!("x0 must have {d} entries")));
    }
    let mut states = Vec::with_capacity(controls.len());
    let mut modes = Vec::with_capacity(controls.len());
    let mut divergent_at = None;
    if c == 0 && model.shift_channels.is_empty() {
        // state-only model: advance in lifted space without re-lifting
        let mut z = model.modes[0].basis.lift(x0)?;
        for (k, u) in controls.iter().enumerate() {
            if !u.is_empty() {
                return Err(Error::Parameter(format!("control {k} must be empty")));
            }
            let x: Vec<f64> = z.as_slice()[..d].to_vec();
            let label = classify(&model.indicator, &x)?;
            let op = model.model_for(label).ok_or_else(|| Error::Pipeline {
                stage: "rollout".into(),
                message: format!("indicator produced unmodeled label {label}"),
            })?;
            let z_next = &op.k * z;
            let block = &z_next.as_slice()[..d];
            if !z_next.iter().all(|v| v.is_finite())
                || block.iter().map(|v| v * v).sum::<f64>().sqrt() > bound
            {
                divergent_at = Some(k);
                break;
            }
            modes.push(label);
            states.push(block.to_vec());
            z = z_next;
        }
        return Ok(SwitchedRollout { states, modes, divergent_at });
    }
    let mut x = x0.to_vec();
    for (k, u) in controls.iter().enumerate() {
        if u.len() != c {
            return Err(Error::Parameter(format!("control {k} must have {c} entries")));
        }
        let (x_rel, offset) = shift_origin(&x, &model.shift_channels);
        let label = classify(&model.indicator, &x_rel)?;
        let op = model.model_for(label).ok_or_else(|| Error::Pipeline {
            stage: "rollout".into(),
            message: format!("indicator produced unmodeled label {label}"),
        })?;
        let mut ext = x_rel;
        ext.extend_from_slice(u);
        let z = op.basis.lift(&ext)?;
        let z_next = &op.k * z;
        let block = &z_next.as_slice()[..d];
        if !z_next.iter().all(|v| v.is_finite())
            || block.iter().map(|v| v * v).sum::<f64>().sqrt() > bound
        {
            divergent_at = Some(k);
            break;
        }
        let mut x_next: Vec<f64> = block.to_vec();
        unshift_origin(&mut x_next, &model.shift_channels, offset);
        modes.push(label);
        states.push(x_next.clone());
        x = x_next;
    }
    Ok(SwitchedRollout { states, modes, divergent_at })
}

/// Discrete quadratic tracking cost
/// ½ Σ_k [(x_k − x_d,k)ᵀ Q (x_k − x_d,k) + u_kᵀ R u_k] · dt,
/// pairing each control with the state it produces. Divergent rollouts cost
/// infinity.
pub fn cost(roll: &SwitchedRollout, controls: &[Vec<f64>], config: &MpcConfig) -> f64 {
    if roll.divergent_at.is_some() || roll.states.len() < controls.len() {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for (k, (x, u)) in roll.states.iter().zip(controls).enumerate() {
        let xd = config.x_d.at(k);
        let mut s = 0.0;
        for i in 0..config.q_diag.len() {
            let e = x[i] - xd[i];
            s += config.q_diag[i] * e * e;
        }
        for (j, &uv) in u.iter().enumerate() {
            s += config.r_diag[j] * uv * uv;
        }
        total += 0.5 * s * config.model_dt;
    }
    total
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub best_cost: f64,
    pub best_index: usize,
    pub all_divergent: bool,
}

/// Stateful shooting optimizer carrying the warm start between replans.
pub struct MpcController {
    pub model: HybridModel,
    pub config: MpcConfig,
    rng: ChaCha8Rng,
    prev_plan: Option<Vec<Vec<f64>>>,
    pub last: StepDiagnostics,
}

impl MpcController {
    pub fn new(model: HybridModel, config: MpcConfig) -> Result<Self> {
        config.validate(model.control_dim, model.plant_dim())?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { model, config, rng, prev_plan: None, last: StepDiagnostics::default() })
    }

    fn clamped_zero(&self) -> Vec<f64> {
        self.config
            .u_min
            .iter()
            .zip(&self.config.u_max)
            .map(|(&lo, &hi)| 0.0f64.clamp(lo, hi))
            .collect()
    }

    /// Previous best plan shifted one step, last entry repeated; zeros when
    /// no history exists.
    fn warm_start(&self) -> Vec<Vec<f64>> {
        let h = self.config.horizon;
        match &self.prev_plan {
            Some(plan) => {
                let mut shifted: Vec<Vec<f64>> = plan[1..].to_vec();
                shifted.push(plan.last().unwrap().clone());
                shifted.truncate(h);
                shifted
            }
            None => vec![self.clamped_zero(); h],
        }
    }

    fn sample_plan(&mut self) -> Vec<Vec<f64>> {
        let h = self.config.horizon;
        let c = self.config.u_min.len();
        let mut plan = Vec::with_capacity(h);
        for k in 0..h {
            if k % self.config.hold_steps == 0 {
                let mut u = Vec::with_capacity(c);
                for j in 0..c {
                    let (lo, hi) = (self.config.u_min[j], self.config.u_max[j]);
                    u.push(if lo < hi { self.rng.random_range(lo..=hi) } else { lo });
                }
                plan.push(u);
            } else {
                plan.push(plan[k - 1].clone());
            }
        }
        plan
    }

    /// Replans from the given state and returns the full best control
    /// sequence. Ties go to the lowest candidate index; if every candidate
    /// diverges the plan is zero controls with `all_divergent` set.
    pub fn plan(&mut self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut best_cost = f64::INFINITY;
        let mut best_index = 0;
        let mut best_plan: Option<Vec<Vec<f64>>> = None;
        for i in 0..self.config.candidates {
            let candidate = if i == 0 { self.warm_start() } else { self.sample_plan() };
            let roll = rollout(&self.model, x, &candidate, self.config.divergence_bound)?;
            let c = cost(&roll, &candidate, &self.config);
            if c < best_cost {
                best_cost = c;
                best_index = i;
                best_plan = Some(candidate);
            }
        }
        match best_plan {
            Some(plan) => {
                self.last = StepDiagnostics { best_cost, best_index, all_divergent: false };
                self.prev_plan = Some(plan.clone());
                Ok(plan)
            }
            None => {
                self.last = StepDiagnostics {
                    best_cost: f64::INFINITY,
                    best_index: 0,
                    all_divergent: true,
                };
                self.prev_plan = None;
                Ok(vec![self.clamped_zero(); self.config.horizon])
            }
        }
    }

    /// First control of a fresh plan.
    pub fn step(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.plan(x)?[0].clone())
    }
}

/// One-shot planning without controller state.
pub fn mpc_step(model: &HybridModel, x: &[f64], config: &MpcConfig) -> Result<Vec<f64>> {
    MpcController::new(model.clone(), config.clone())?.step(x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedLoopMetrics {
    pub mean_forward_velocity: f64,
    pub mean_height: f64,
    pub crashed: bool,
    pub crash_time: Option<f64>,
    /// Best predicted cost at each replan.
    pub cost_trace: Vec<f64>,
}

impl ClosedLoopMetrics {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

pub struct ClosedLoopResult {
    pub log: SlipLog,
    pub metrics: ClosedLoopMetrics,
}

/// Runs the MPC against the true SLIP plant. The model's control channels
/// are [u_stance, u_flight]. A plant crash ends the run early with metrics
/// up to the failure.
pub fn run_closed_loop(
    model: &HybridModel,
    s0: SlipState,
    duration: f64,
    params: &SlipParams,
    config: &MpcConfig,
) -> Result<ClosedLoopResult> {
    params.validate()?;
    if duration <= 0.0 {
        return Err(Error::Parameter("duration must be positive".into()));
    }
    if model.control_dim != 2 {
        return Err(Error::Parameter("SLIP closed loop needs a 2-control model".into()));
    }
    let mut controller = MpcController::new(model.clone(), config.clone())?;
    let steps = (duration / params.dt).round() as usize;
    let mut s = s0;
    let mut plan: Vec<Vec<f64>> = Vec::new();
    let mut plan_age = 0usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    let mut modes = Vec::with_capacity(steps + 1);
    let mut cost_trace = Vec::new();
    let mut crash_time = None;
    for k in 0..=steps {
        let t = k as f64 * params.dt;
        if plan.is_empty() || plan_age >= config.replan_interval {
            plan = controller.plan(&s.to_array())?;
            cost_trace.push(controller.last.best_cost);
            plan_age = 0;
        }
        let slot = (plan_age / config.substeps).min(plan.len() - 1);
        let u = SlipControl { u_stance: plan[slot][0], u_flight: plan[slot][1] }.saturate(params);
        samples.push(s.to_array().to_vec());
        controls.push(u);
        modes.push(true_guard(&s, params));
        if k == steps {
            break;
        }
        match slip_step(&s, &u, params) {
            Ok(next) => s = next,
            Err(Error::Crash { reason, .. }) => {
                crash_time = Some(t);
                let _ = reason;
                break;
            }
            Err(e) => return Err(e),
        }
        plan_age += 1;
    }
    let n = samples.len() as f64;
    let mean_forward_velocity = samples.iter().map(|s| s[1]).sum::<f64>() / n;
    let mean_height = samples.iter().map(|s| s[2]).sum::<f64>() / n;
    let log = SlipLog {
        trajectory: Trajectory::new(
            samples,
            params.dt,
            STATE_CHANNELS.iter().map(|s| s.to_string()).collect(),
        )?,
        controls,
        modes,
    };
    Ok(ClosedLoopResult {
        log,
        metrics: ClosedLoopMetrics {
            mean_forward_velocity,
            mean_height,
            crashed: crash_time.is_some(),
            crash_time,
            cost_trace,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicator::train_indicator;
    use crate::lifting::{self, BasisSpec, KoopmanModel};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn base_config(control_dim: usize, plant_dim: usize) -> MpcConfig {
        MpcConfig {
            horizon: 5,
            candidates: 64,
            u_min: vec![-1.0; control_dim],
            u_max: vec![1.0; control_dim],
            q_diag: vec![1.0; plant_dim],
            r_diag: vec![1.0; control_dim],
            x_d: Desired::Constant(vec![0.0; plant_dim]),
            seed: 0,
            model_dt: 1.0,
            divergence_bound: 1e6,
            replan_interval: 1,
            substeps: 1,
            hold_steps: 1,
        }
    }

    /// Scalar plant x' = a·x + b·u wrapped as a single-mode HybridModel.
    fn scalar_model(a: f64, b: f64) -> HybridModel {
        let basis = BasisSpec::identity(2);
        let k = DMatrix::from_row_slice(2, 2, &[a, b, 0.0, 0.0]);
        let indicator = train_indicator(
            &[vec![0.0], vec![1.0], vec![2.0]],
            &[0, 0, 0],
            &BasisSpec::identity(1),
            1e-4,
            1,
        )
        .unwrap();
        HybridModel {
            modes: vec![KoopmanModel { k, basis, ridge: 0.0 }],
            mode_labels: vec![0],
            indicator,
            control_dim: 1,
            shift_channels: vec![],
        }
    }

    /// Two-mode scalar switched model: contraction 0.5 for x ≥ 0, expansion
    /// 1.5 for x < 0; no controls.
    fn switched_scalar_model() -> HybridModel {
        let basis = BasisSpec::identity(1);
        let mut states = Vec::new();
        let mut labels = Vec::new();
        for k in 1..=20 {
            states.push(vec![k as f64 * 0.1]);
            labels.push(0);
            states.push(vec![-(k as f64) * 0.1]);
            labels.push(1);
        }
        let indicator = train_indicator(&states, &labels, &basis, 1e-4, 200).unwrap();
        let mk = |v: f64| KoopmanModel {
            k: DMatrix::from_row_slice(1, 1, &[v]),
            basis: basis.clone(),
            ridge: 0.0,
        };
        HybridModel {
            modes: vec![mk(0.5), mk(1.5)],
            mode_labels: vec![0, 1],
            indicator,
            control_dim: 0,
            shift_channels: vec![],
        }
    }

    #[test]
    fn single_mode_rollout_matches_predict() {
        let model = switched_scalar_model();
        let single = HybridModel {
            modes: vec![model.modes[0].clone()],
            mode_labels: vec![0],
            indicator: train_indicator(
                &[vec![1.0], vec![2.0]],
                &[0, 0],
                &BasisSpec::identity(1),
                1e-4,
                1,
            )
            .unwrap(),
            control_dim: 0,
            shift_channels: vec![],
        };
        let controls = vec![vec![]; 6];
        let roll = rollout(&single, &[8.0], &controls, 1e6).unwrap();
        let oracle = lifting::predict(&single.modes[0], &[8.0], 6, false).unwrap();
        for (a, b) in roll.states.iter().zip(&oracle) {
            assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn rollout_mode_sequence_is_self_consistent() {
        let model = switched_scalar_model();
        let controls = vec![vec![]; 10];
        let roll = rollout(&model, &[3.0], &controls, 1e6).unwrap();
        let mut x = vec![3.0];
        for (k, m) in roll.modes.iter().enumerate() {
            assert_eq!(*m, classify(&model.indicator, &x).unwrap(), "step {k}");
            x = roll.states[k].clone();
        }
        // contraction keeps the state on the positive side: constant mode
        assert!(roll.modes.iter().all(|&m| m == 0));
    }

    #[test]
    fn rollout_flips_mode_once_across_boundary() {
        // a sign change under control crosses the indicator boundary
        let m = scalar_model(1.0, 1.0);
        let controls = vec![vec![-0.6], vec![-0.6], vec![0.0]];
        let roll = rollout(&m, &[1.0], &controls, 1e6).unwrap();
        assert_relative_eq!(roll.states[0][0], 0.4, epsilon = 1e-12);
        assert_relative_eq!(roll.states[1][0], -0.2, epsilon = 1e-12);
        assert!(roll.divergent_at.is_none());
    }

    #[test]
    fn divergent_rollout_is_flagged_and_infinite() {
        let model = switched_scalar_model();
        let controls = vec![vec![]; 200];
        let roll = rollout(&model, &[-1.0], &controls, 1e6).unwrap();
        assert!(roll.divergent_at.is_some());
        let config = base_config(0, 1);
        assert!(cost(&roll, &controls, &config).is_infinite());
    }

    #[test]
    fn cost_zero_on_target() {
        let roll = SwitchedRollout {
            states: vec![vec![0.0; 5]],
            modes: vec![0],
            divergent_at: None,
        };
        let mut config = base_config(1, 5);
        config.q_diag = vec![0.0, 50.0, 100.0, 0.0, 0.0];
        assert_eq!(cost(&roll, &[vec![0.0]], &config), 0.0);
    }

    #[test]
    fn cost_arithmetic_example() {
        // Q_diag [0,50,100,0,0], error [1,0.1,0,0,0], u=0, dt=1 → 0.25
        let roll = SwitchedRollout {
            states: vec![vec![1.0, 0.1, 0.0, 0.0, 0.0]],
            modes: vec![0],
            divergent_at: None,
        };
        let mut config = base_config(1, 5);
        config.q_diag = vec![0.0, 50.0, 100.0, 0.0, 0.0];
        config.r_diag = vec![0.0];
        assert_relative_eq!(cost(&roll, &[vec![0.0]], &config), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn doubling_control_quadruples_cost() {
        let roll = SwitchedRollout {
            states: vec![vec![0.0]],
            modes: vec![0],
            divergent_at: None,
        };
        let mut config = base_config(1, 1);
        config.q_diag = vec![0.0];
        let c1 = cost(&roll, &[vec![0.3]], &config);
        let c2 = cost(&roll, &[vec![0.6]], &config);
        assert_relative_eq!(c2, 4.0 * c1, epsilon = 1e-12);
    }

    #[test]
    fn mpc_step_matches_one_step_lqr() {
        let (a, b) = (1.0, 1.0);
        let model = scalar_model(a, b);
        let mut config = base_config(1, 1);
        config.horizon = 1;
        config.candidates = 4096;
        config.u_min = vec![-2.0];
        config.u_max = vec![2.0];
        let x = 1.0;
        // argmin_u q(ax+bu)² + ru²
        let (q, r) = (config.q_diag[0], config.r_diag[0]);
        let u_star = -q * a * b * x / (q * b * b + r);
        let u = mpc_step(&model, &[x], &config).unwrap();
        assert!(
            (u[0] - u_star).abs() <= 0.1 * u_star.abs(),
            "got {} want {u_star}",
            u[0]
        );
    }

    #[test]
    fn zero_saturation_means_zero_control() {
        let model = scalar_model(0.9, 1.0);
        let mut config = base_config(1, 1);
        config.u_min = vec![0.0];
        config.u_max = vec![0.0];
        let u = mpc_step(&model, &[5.0], &config).unwrap();
        assert_eq!(u, vec![0.0]);
    }

    #[test]
    fn mpc_step_is_deterministic() {
        let model = scalar_model(1.0, 1.0);
        let config = base_config(1, 1);
        let a = mpc_step(&model, &[1.3], &config).unwrap();
        let b = mpc_step(&model, &[1.3], &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn warm_start_is_evaluated_first() {
        let model = scalar_model(1.0, 1.0);
        let mut config = base_config(1, 1);
        config.candidates = 1; // only the warm start survives
        let mut ctrl = MpcController::new(model, config).unwrap();
        let u = ctrl.step(&[1.0]).unwrap();
        assert_eq!(u, vec![0.0]); // zero plan when no history
        assert_eq!(ctrl.last.best_index, 0);
    }

    #[test]
    fn all_divergent_returns_zero_with_warning() {
        let model = switched_scalar_model();
        let mut config = base_config(0, 1);
        config.divergence_bound = 1e-6; // everything diverges immediately
        let mut ctrl = MpcController::new(model, config).unwrap();
        let u = ctrl.plan(&[1.0]).unwrap();
        assert!(ctrl.last.all_divergent);
        assert!(u.iter().all(|v| v.is_empty()));
    }

    #[test]
    fn zero_horizon_rejected() {
        let model = scalar_model(1.0, 1.0);
        let mut config = base_config(1, 1);
        config.horizon = 0;
        assert!(MpcController::new(model, config).is_err());
    }

    #[test]
    fn shifted_rollout_is_translation_invariant() {
        // pure translation dynamics: x' = x + u with shift on channel 0
        let mut model = scalar_model(1.0, 1.0);
        model.shift_channels = vec![0];
        let controls = vec![vec![0.5]; 4];
        let a = rollout(&model, &[0.0], &controls, 1e6).unwrap();
        let b = rollout(&model, &[100.0], &controls, 1e6).unwrap();
        for (p, q) in a.states.iter().zip(&b.states) {
            assert_relative_eq!(q[0] - p[0], 100.0, epsilon = 1e-9);
        }
    }
}
