//! Thin wasm-bindgen surface over the core crate for the browser demo.
//! Everything returns flat `f64`/`i32` buffers so the JS side stays free of
//! wrapper objects; the crate also builds natively so the bindings are
//! testable without a wasm toolchain.

use wasm_bindgen::prelude::*;

use ncd_core::clustering::{hdbscan, PointSet};
use ncd_core::ncd::{run_ncd, NcdConfig, WindowingPlan};
use ncd_core::lifting::BasisSpec;
use ncd_core::slip::{
    slip_step, true_guard, HopTarget, Controller, OracleController, SlipParams, SlipState,
};
use ncd_core::trajectory::Trajectory;

/// Interactive hopper: an oracle controller chases the given hop target and
/// the canvas animates the returned state snapshots.
#[wasm_bindgen]
pub struct HopperSim {
    params: SlipParams,
    controller: OracleController,
    state: SlipState,
    time: f64,
    crashed: bool,
}

#[wasm_bindgen]
impl HopperSim {
    #[wasm_bindgen(constructor)]
    pub fn new(forward_velocity: f64, apex_height: f64, start_height: f64) -> HopperSim {
        let params = SlipParams::default();
        let controller =
            OracleController::new(params, HopTarget { forward_velocity, apex_height });
        HopperSim {
            params,
            controller,
            state: SlipState {
                x_m: 0.0,
                xdot_m: 0.0,
                z_m: start_height,
                zdot_m: 0.0,
                x_t: 0.0,
            },
            time: 0.0,
            crashed: false,
        }
    }

    pub fn set_target(&mut self, forward_velocity: f64, apex_height: f64) {
        self.controller =
            OracleController::new(self.params, HopTarget { forward_velocity, apex_height });
    }

    /// Advances `substeps` plant steps and returns
    /// `[x_m, xdot_m, z_m, zdot_m, x_t, mode, time, crashed]`.
    pub fn step(&mut self, substeps: usize) -> Vec<f64> {
        for _ in 0..substeps {
            if self.crashed {
                break;
            }
            let u = self.controller.control(&self.state, self.time).saturate(&self.params);
            match slip_step(&self.state, &u, &self.params) {
                Ok(next) => {
                    self.state = next;
                    self.time += self.params.dt;
                }
                Err(_) => self.crashed = true,
            }
        }
        let s = self.state;
        vec![
            s.x_m,
            s.xdot_m,
            s.z_m,
            s.zdot_m,
            s.x_t,
            true_guard(&s, &self.params) as i32 as f64,
            self.time,
            if self.crashed { 1.0 } else { 0.0 },
        ]
    }

    pub fn rest_length(&self) -> f64 {
        self.params.rest_length
    }
}

/// Density clustering over flattened 2-D points `[x0, y0, x1, y1, ...]`;
/// returns one label per point, −1 for noise. Errors become an empty vector
/// (the demo treats it as "nothing to draw").
#[wasm_bindgen]
pub fn cluster_points(xy: &[f64], min_cluster_size: usize) -> Vec<i32> {
    if xy.len() < 4 || xy.len() % 2 != 0 {
        return Vec::new();
    }
    let points: Vec<Vec<f64>> = xy.chunks(2).map(|c| c.to_vec()).collect();
    let set = match PointSet::new(points) {
        Ok(s) => s,
        Err(_) => return Vec::new(),
    };
    match hdbscan(&set, min_cluster_size.max(2), min_cluster_size.max(2)) {
        Ok(result) => result.labels,
        Err(_) => Vec::new(),
    }
}

/// Segments a scalar signal into dynamic modes: windowed local fits,
/// clustering, label propagation. Returns one label per sample, −1 for
/// unresolved samples; empty on failure.
#[wasm_bindgen]
pub fn segment_signal(
    values: &[f64],
    window_len: usize,
    stride: usize,
    min_cluster_size: usize,
) -> Vec<i32> {
    let samples: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let traj = match Trajectory::new(samples, 1.0, vec!["x".into()]) {
        Ok(t) => t,
        Err(_) => return Vec::new(),
    };
    let mut config = NcdConfig::new(BasisSpec::identity(1));
    config.windowing = WindowingPlan { window_len: window_len.max(4), stride: stride.max(1) };
    config.ridge = 0.0;
    config.min_cluster_size = Some(min_cluster_size.max(2));
    match run_ncd(&traj, &config) {
        Ok(outcome) => outcome.labeling.labels,
        Err(_) => Vec::new(),
    }
}
