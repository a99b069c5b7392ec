//! Planar spring-loaded inverted pendulum: a point mass on a massless spring
//! leg. Flight is ballistic with a velocity-commanded toe; in stance the toe
//! is pinned and the spring (plus thrust) acts along the leg axis. Serves as
//! the ground-truth hybrid plant for the identification pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Hybrid mode, numbered to match indicator class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Stance = 0,
    Flight = 1,
}

/// State: mass position/velocity and toe horizontal position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipState {
    pub x_m: f64,
    pub xdot_m: f64,
    pub z_m: f64,
    pub zdot_m: f64,
    pub x_t: f64,
}

impl SlipState {
    pub fn to_array(self) -> [f64; 5] {
        [self.x_m, self.xdot_m, self.z_m, self.zdot_m, self.x_t]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { x_m: s[0], xdot_m: s[1], z_m: s[2], zdot_m: s[3], x_t: s[4] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlipControl {
    /// Leg thrust (N), active in stance.
    pub u_stance: f64,
    /// Toe horizontal velocity command (m/s), active in flight.
    pub u_flight: f64,
}

impl SlipControl {
    pub fn saturate(self, params: &SlipParams) -> Self {
        Self {
            u_stance: self.u_stance.clamp(-params.u_stance_max, params.u_stance_max),
            u_flight: self.u_flight.clamp(-params.u_flight_max, params.u_flight_max),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SlipParams {
    pub mass: f64,
    pub stiffness: f64,
    pub rest_length: f64,
    pub gravity: f64,
    pub u_stance_max: f64,
    pub u_flight_max: f64,
    pub dt: f64,
}

impl Default for SlipParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 150.0,
            rest_length: 1.0,
            gravity: 9.81,
            u_stance_max: 60.0,
            u_flight_max: 5.0,
            dt: 1e-3,
        }
    }
}

impl SlipParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.mass,
            self.stiffness,
            self.rest_length,
            self.gravity,
            self.u_stance_max,
            self.u_flight_max,
            self.dt,
        ];
        if fields.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Parameter("all SLIP parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Leg length measured from the toe (at ground height) to the mass.
pub fn leg_length(s: &SlipState) -> f64 {
    ((s.x_m - s.x_t).powi(2) + s.z_m * s.z_m).sqrt()
}

/// Analytic guard: flight iff the leg is at or beyond its rest length
/// (unloaded). Touchdown and liftoff are the two crossings of this boundary.
pub fn true_guard(s: &SlipState, params: &SlipParams) -> Mode {
    if leg_length(s) >= params.rest_length {
        Mode::Flight
    } else {
        Mode::Stance
    }
}

fn derivative(s: &SlipState, u: &SlipControl, params: &SlipParams, mode: Mode) -> [f64; 5] {
    match mode {
        Mode::Flight => [s.xdot_m, 0.0, s.zdot_m, -params.gravity, u.u_flight],
        Mode::Stance => {
            let l = leg_length(s).max(1e-9);
            let force = params.stiffness * (params.rest_length - l) + u.u_stance;
            let ax = force * (s.x_m - s.x_t) / l / params.mass;
            let az = force * s.z_m / l / params.mass - params.gravity;
            [s.xdot_m, ax, s.zdot_m, az, 0.0]
        }
    }
}

fn add_scaled(s: &SlipState, d: &[f64; 5], h: f64) -> SlipState {
    SlipState {
        x_m: s.x_m + h * d[0],
        xdot_m: s.xdot_m + h * d[1],
        z_m: s.z_m + h * d[2],
        zdot_m: s.zdot_m + h * d[3],
        x_t: s.x_t + h * d[4],
    }
}

/// One fixed step of RK4 under the mode active at the start of the step.
/// Mode switches take effect between steps; there is no event localization,
/// which at dt = 1e-3 keeps the guard error below the tolerances of interest.
pub fn slip_step(s: &SlipState, u: &SlipControl, params: &SlipParams) -> Result<SlipState> {
    let mode = true_guard(s, params);
    let u = u.saturate(params);
    let h = params.dt;
    let k1 = derivative(s, &u, params, mode);
    let s2 = add_scaled(s, &k1, h / 2.0);
    let k2 = derivative(&s2, &u, params, mode);
    let s3 = add_scaled(s, &k2, h / 2.0);
    let k3 = derivative(&s3, &u, params, mode);
    let s4 = add_scaled(s, &k3, h);
    let k4 = derivative(&s4, &u, params, mode);
    let mut d = [0.0; 5];
    for i in 0..5 {
        d[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    let next = add_scaled(s, &d, h);
    if next.z_m <= 0.0 || !next.z_m.is_finite() {
        return Err(Error::Crash { time: 0.0, reason: "mass reached the ground".into() });
    }
    Ok(next)
}

/// Total mechanical energy; the spring term only counts while loaded.
pub fn mechanical_energy(s: &SlipState, params: &SlipParams) -> f64 {
    let kinetic = 0.5 * params.mass * (s.xdot_m.powi(2) + s.zdot_m.powi(2));
    let potential = params.mass * params.gravity * s.z_m;
    let l = leg_length(s);
    let spring = if l < params.rest_length {
        0.5 * params.stiffness * (params.rest_length - l).powi(2)
    } else {
        0.0
    };
    kinetic + potential + spring
}

/// Controller called once per simulation step.
pub trait Controller {
    fn control(&mut self, s: &SlipState, t: f64) -> SlipControl;
}

/// Passive hopping: zero thrust and a frozen toe.
pub struct ZeroController;

impl Controller for ZeroController {
    fn control(&mut self, _s: &SlipState, _t: f64) -> SlipControl {
        SlipControl::default()
    }
}

/// Desired hopping setpoint used by controllers and MPC costs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HopTarget {
    pub forward_velocity: f64,
    pub apex_height: f64,
}

impl Default for HopTarget {
    fn default() -> Self {
        Self { forward_velocity: 0.4, apex_height: 1.6 }
    }
}

/// Foot-placement heuristic for data generation: in flight the toe servos
/// toward the neutral point plus a velocity-error correction; in stance the
/// thrust is proportional to the predicted apex error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleGains {
    /// Velocity-error term in the foot placement (s).
    pub k_velocity: f64,
    /// Toe servo gain (1/s).
    pub k_toe: f64,
    /// Thrust per meter of apex error (N/m).
    pub k_thrust: f64,
    /// Integral gain on velocity error feeding the placement bias (1/s).
    pub k_bias: f64,
}

impl Default for OracleGains {
    fn default() -> Self {
        Self { k_velocity: 0.08, k_toe: 30.0, k_thrust: 40.0, k_bias: 0.05 }
    }
}

pub struct OracleController {
    pub params: SlipParams,
    pub target: HopTarget,
    pub gains: OracleGains,
    // slow integral correction for the neutral-point estimate
    bias: f64,
}

impl OracleController {
    pub fn new(params: SlipParams, target: HopTarget) -> Self {
        Self { params, target, gains: OracleGains::default(), bias: 0.0 }
    }

    /// Estimated apex height from the vertical energy budget.
    fn apex_estimate(&self, s: &SlipState) -> f64 {
        let p = &self.params;
        let l = leg_length(s);
        let spring = if l < p.rest_length {
            0.5 * p.stiffness * (p.rest_length - l).powi(2)
        } else {
            0.0
        };
        s.z_m + s.zdot_m.powi(2) / (2.0 * p.gravity) + spring / (p.mass * p.gravity)
    }
}

impl Controller for OracleController {
    fn control(&mut self, s: &SlipState, _t: f64) -> SlipControl {
        let p = &self.params;
        let g = &self.gains;
        let control = match true_guard(s, p) {
            Mode::Flight => {
                // Raibert foot placement: neutral point plus velocity correction
                let stance_time = std::f64::consts::PI * (p.mass / p.stiffness).sqrt();
                let neutral = s.x_m + s.xdot_m * stance_time / 2.0;
                let err = s.xdot_m - self.target.forward_velocity;
                self.bias = (self.bias + g.k_bias * err * p.dt).clamp(-0.1, 0.1);
                let correction =
                    (g.k_velocity * err + self.bias).clamp(-0.2 * p.rest_length, 0.2 * p.rest_length);
                let toe_target = neutral + correction;
                SlipControl { u_stance: 0.0, u_flight: g.k_toe * (toe_target - s.x_t) }
            }
            Mode::Stance => {
                // thrust only while the leg decompresses; braking thrust is
                // kept small so it can never cancel the spring outright
                let u_stance = if s.zdot_m > 0.0 {
                    let apex_err = self.target.apex_height - self.apex_estimate(s);
                    (g.k_thrust * apex_err).clamp(-0.25 * p.u_stance_max, p.u_stance_max)
                } else {
                    0.0
                };
                SlipControl { u_stance, u_flight: 0.0 }
            }
        };
        control.saturate(p)
    }
}

/// Oracle with a piecewise-constant target schedule, for generating
/// varying-velocity training data that visits accelerating and
/// direction-changing maneuvers.
pub struct ScheduledOracleController {
    oracle: OracleController,
    schedule: Vec<(f64, HopTarget)>,
}

impl ScheduledOracleController {
    /// `schedule` entries are (start time, target), sorted by start time;
    /// the first entry must start at 0.
    pub fn new(params: SlipParams, schedule: Vec<(f64, HopTarget)>) -> Result<Self> {
        if schedule.is_empty() || schedule[0].0 != 0.0 {
            return Err(Error::Parameter("schedule must start at t = 0".into()));
        }
        if schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Parameter("schedule times must increase".into()));
        }
        let target = schedule[0].1;
        Ok(Self { oracle: OracleController::new(params, target), schedule })
    }
}

impl Controller for ScheduledOracleController {
    fn control(&mut self, s: &SlipState, t: f64) -> SlipControl {
        for &(start, target) in self.schedule.iter().rev() {
            if t >= start {
                self.oracle.target = target;
                break;
            }
        }
        self.oracle.control(s, t)
    }
}

/// Full simulation log: states, applied controls, and true modes, all
/// sampled at every step edge (controls/modes have one entry per state).
pub struct SlipLog {
    pub trajectory: Trajectory,
    pub controls: Vec<SlipControl>,
    pub modes: Vec<Mode>,
}

pub const STATE_CHANNELS: [&str; 5] = ["x_m", "xdot_m", "z_m", "zdot_m", "x_t"];

impl SlipLog {
    /// CSV export: time, 5 state channels, 2 control channels, true mode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,x_m,xdot_m,z_m,zdot_m,x_t,u_stance,u_flight,mode\n");
        for (k, s) in self.trajectory.samples().iter().enumerate() {
            let u = &self.controls[k];
            out.push_str(&format!(
                "{:.6},{},{},{},{},{},{},{},{}\n",
                self.trajectory.time(k),
                s[0],
                s[1],
                s[2],
                s[3],
                s[4],
                u.u_stance,
                u.u_flight,
                self.modes[k] as i32
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<SlipLog> {
        let full = Trajectory::from_csv(text)?;
        let expected = ["x_m", "xdot_m", "z_m", "zdot_m", "x_t", "u_stance", "u_flight", "mode"];
        if full.channels() != expected {
            return Err(Error::Load(format!(
                "unexpected columns {:?}, want time followed by {:?}",
                full.channels(),
                expected
            )));
        }
        let dt = full.dt();
        let mut samples = Vec::with_capacity(full.len());
        let mut controls = Vec::with_capacity(full.len());
        let mut modes = Vec::with_capacity(full.len());
        for s in full.samples() {
            samples.push(s[..5].to_vec());
            controls.push(SlipControl { u_stance: s[5], u_flight: s[6] });
            modes.push(if s[7] == 0.0 { Mode::Stance } else { Mode::Flight });
        }
        Ok(SlipLog {
            trajectory: Trajectory::new(
                samples,
                dt,
                STATE_CHANNELS.iter().map(|s| s.to_string()).collect(),
            )?,
            controls,
            modes,
        })
    }
}

/// Fixed-step closed-loop simulation with per-sample logging.
pub fn simulate(
    s0: SlipState,
    controller: &mut dyn Controller,
    duration: f64,
    params: &SlipParams,
) -> Result<SlipLog> {
    let (log, crashed) = simulate_partial(s0, controller, duration, params)?;
    match crashed {
        None => Ok(log),
        Some(time) => Err(Error::Crash { time, reason: "mass reached the ground".into() }),
    }
}

/// As [`simulate`], but a plant crash ends the run early and returns the log
/// up to the failure together with the crash time.
pub fn simulate_partial(
    s0: SlipState,
    controller: &mut dyn Controller,
    duration: f64,
    params: &SlipParams,
) -> Result<(SlipLog, Option<f64>)> {
    params.validate()?;
    if duration <= 0.0 {
        return Err(Error::Parameter("duration must be positive".into()));
    }
    let steps = (duration / params.dt).round() as usize;
    let mut s = s0;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    let mut modes = Vec::with_capacity(steps + 1);
    let mut crash_time = None;
    for k in 0..=steps {
        let t = k as f64 * params.dt;
        let u = controller.control(&s, t).saturate(params);
        samples.push(s.to_array().to_vec());
        controls.push(u);
        modes.push(true_guard(&s, params));
        if k < steps {
            match slip_step(&s, &u, params) {
                Ok(next) => s = next,
                Err(Error::Crash { .. }) => {
                    crash_time = Some(t);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    let log = SlipLog {
        trajectory: Trajectory::new(
            samples,
            params.dt,
            STATE_CHANNELS.iter().map(|s| s.to_string()).collect(),
        )?,
        controls,
        modes,
    };
    Ok((log, crash_time))
}
