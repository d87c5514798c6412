//! Run configuration: file paths plus solver and pipeline settings.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{Failure, SolverMode};
use cdsc::pipeline::PipelineConfig;
use cdsc::solver::{AlphaMode, SolverConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub detections: PathBuf,
    pub features: PathBuf,
    pub transition_model: PathBuf,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    pub alpha: Option<f64>,
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_support_eps")]
    pub support_eps: f64,
}

fn default_mode() -> String {
    "exact".into()
}
fn default_kkt_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    10_000
}
fn default_support_eps() -> f64 {
    1e-8
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            mode: default_mode(),
            alpha: None,
            kkt_tol: default_kkt_tol(),
            max_iters: default_max_iters(),
            support_eps: default_support_eps(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default = "default_segment_len")]
    pub segment_len: u64,
    #[serde(default = "default_window_segments")]
    pub window_segments: u64,
    #[serde(default = "default_chain_iou")]
    pub chain_iou: f64,
    #[serde(default = "default_motion_scale")]
    pub motion_scale: f64,
}

fn default_segment_len() -> u64 {
    15
}
fn default_window_segments() -> u64 {
    10
}
fn default_chain_iou() -> f64 {
    0.7
}
fn default_motion_scale() -> f64 {
    5.0
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            segment_len: default_segment_len(),
            window_segments: default_window_segments(),
            chain_iou: default_chain_iou(),
            motion_scale: default_motion_scale(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("{}: {}", path.display(), e)))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::Validation(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        for path in [&self.detections, &self.features, &self.transition_model] {
            if !path.exists() {
                return Err(Failure::Validation(format!(
                    "referenced file does not exist: {}",
                    path.display()
                )));
            }
        }
        if !matches!(self.solver.mode.as_str(), "exact" | "fast") {
            return Err(Failure::Validation(format!(
                "solver.mode must be 'exact' or 'fast', got '{}'",
                self.solver.mode
            )));
        }
        let positive = [
            ("solver.kkt_tol", self.solver.kkt_tol),
            ("solver.support_eps", self.solver.support_eps),
            ("pipeline.chain_iou", self.pipeline.chain_iou),
            ("pipeline.motion_scale", self.pipeline.motion_scale),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Failure::Validation(format!("{} must be positive, got {}", name, v)));
            }
        }
        if self.solver.max_iters == 0 {
            return Err(Failure::Validation("solver.max_iters must be positive".into()));
        }
        if self.pipeline.segment_len == 0 || self.pipeline.window_segments == 0 {
            return Err(Failure::Validation(
                "pipeline.segment_len and pipeline.window_segments must be positive".into(),
            ));
        }
        if let Some(alpha) = self.solver.alpha {
            if alpha <= 0.0 {
                return Err(Failure::Validation(format!(
                    "solver.alpha must be positive, got {}",
                    alpha
                )));
            }
        }
        Ok(())
    }

    /// Assembles the pipeline configuration, with the command line winning
    /// over the file for the solver mode.
    pub fn pipeline_config(&self, mode_override: Option<SolverMode>) -> PipelineConfig {
        let alpha_mode = match mode_override {
            Some(SolverMode::Exact) => AlphaMode::Exact,
            Some(SolverMode::Fast) => AlphaMode::Fast,
            None => {
                if self.solver.mode == "fast" {
                    AlphaMode::Fast
                } else {
                    AlphaMode::Exact
                }
            }
        };
        PipelineConfig {
            segment_len: self.pipeline.segment_len,
            window_segments: self.pipeline.window_segments,
            chain_iou: self.pipeline.chain_iou,
            motion_scale: self.pipeline.motion_scale,
            solver: SolverConfig {
                support_eps: self.solver.support_eps,
                kkt_tol: self.solver.kkt_tol,
                max_iters: self.solver.max_iters,
                alpha_mode,
                alpha_override: self.solver.alpha,
                ..SolverConfig::default()
            },
        }
    }
}
