//! Run configuration: one TOML file with optional per-subcommand sections.
//! Unknown keys anywhere are rejected before any computation starts.

use ncd_core::lifting::BasisSpec;
use ncd_core::mpc::{Desired, MpcConfig};
use ncd_core::ncd::{NcdConfig, WindowingPlan};
use ncd_core::slip::SlipParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overridden by the NCD_OUT environment variable when set.
    pub output_dir: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub slip: SlipSection,
    #[serde(default)]
    pub ncd: NcdSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub gait: GaitSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config error: {e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlipSection {
    pub mass: f64,
    pub stiffness: f64,
    pub rest_length: f64,
    pub gravity: f64,
    pub u_stance_max: f64,
    pub u_flight_max: f64,
    pub dt: f64,
    pub duration: f64,
    /// "constant" follows one hop target; "schedule" varies targets over the
    /// run; "excite" adds identification dither on top of the schedule.
    pub controller: String,
    pub target_velocity: f64,
    pub apex_height: f64,
    pub start_height: f64,
}

impl Default for SlipSection {
    fn default() -> Self {
        let p = SlipParams::default();
        Self {
            mass: p.mass,
            stiffness: p.stiffness,
            rest_length: p.rest_length,
            gravity: p.gravity,
            u_stance_max: p.u_stance_max,
            u_flight_max: p.u_flight_max,
            dt: p.dt,
            duration: 30.0,
            controller: "schedule".into(),
            target_velocity: 0.4,
            apex_height: 1.6,
            start_height: 2.0,
        }
    }
}

impl SlipSection {
    pub fn params(&self) -> SlipParams {
        SlipParams {
            mass: self.mass,
            stiffness: self.stiffness,
            rest_length: self.rest_length,
            gravity: self.gravity,
            u_stance_max: self.u_stance_max,
            u_flight_max: self.u_flight_max,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NcdSection {
    pub window_len: usize,
    pub stride: usize,
    /// "identity" or "quadratic" over the data's channel count.
    pub basis: String,
    pub ridge: f64,
    pub min_cluster_size: Option<usize>,
    pub svm_reg: f64,
    pub svm_epochs: usize,
}

impl Default for NcdSection {
    fn default() -> Self {
        Self {
            window_len: 25,
            stride: 5,
            basis: "identity".into(),
            ridge: 1e-8,
            min_cluster_size: None,
            svm_reg: 1e-4,
            svm_epochs: 200,
        }
    }
}

impl NcdSection {
    pub fn basis_for(&self, dim: usize) -> Result<BasisSpec, String> {
        match self.basis.as_str() {
            "identity" => Ok(BasisSpec::identity(dim)),
            "quadratic" => Ok(BasisSpec::quadratic(dim)),
            other => Err(format!("unknown basis '{other}' (expected identity or quadratic)")),
        }
    }

    pub fn ncd_config(&self, dim: usize) -> Result<NcdConfig, String> {
        let mut config = NcdConfig::new(self.basis_for(dim)?);
        config.windowing = WindowingPlan { window_len: self.window_len, stride: self.stride };
        config.ridge = self.ridge;
        config.min_cluster_size = self.min_cluster_size;
        config.svm_reg = self.svm_reg;
        config.svm_epochs = self.svm_epochs;
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcSection {
    pub horizon: usize,
    pub candidates: usize,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub x_d: Vec<f64>,
    pub divergence_bound: f64,
    pub replan_interval: usize,
    pub substeps: usize,
    pub hold_steps: usize,
    pub duration: f64,
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            horizon: 60,
            candidates: 256,
            q_diag: vec![0.0, 50.0, 100.0, 0.0, 0.0],
            r_diag: vec![1e-3, 0.01],
            x_d: vec![0.0, 0.4, 1.6, 0.0, 0.0],
            divergence_bound: 100.0,
            replan_interval: 20,
            substeps: 10,
            hold_steps: 5,
            duration: 30.0,
        }
    }
}

impl MpcSection {
    pub fn mpc_config(&self, params: &SlipParams, seed: u64) -> MpcConfig {
        MpcConfig {
            horizon: self.horizon,
            candidates: self.candidates,
            u_min: vec![0.0, -params.u_flight_max],
            u_max: vec![params.u_stance_max, params.u_flight_max],
            q_diag: self.q_diag.clone(),
            r_diag: self.r_diag.clone(),
            x_d: Desired::Constant(self.x_d.clone()),
            seed,
            model_dt: params.dt * self.substeps as f64,
            divergence_bound: self.divergence_bound,
            replan_interval: self.replan_interval,
            substeps: self.substeps,
            hold_steps: self.hold_steps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitSection {
    pub trim_seconds: f64,
    pub require_validation: bool,
    pub min_dwell_seconds: f64,
    pub max_window_ms: f64,
    pub association_threshold: f64,
}

impl Default for GaitSection {
    fn default() -> Self {
        Self {
            trim_seconds: 10.0,
            require_validation: true,
            min_dwell_seconds: 0.025,
            max_window_ms: 100.0,
            association_threshold: 0.5,
        }
    }
}
