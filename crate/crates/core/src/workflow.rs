//! End-to-end registration entry points shared by the CLI and the C API.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geom::{BinaryVolume, MaskStack, TransformParams};
use crate::joint::{optimize_joint, optimize_separate, require_finite, OptimTrace};
use crate::profiles::{auto_initial_guess, initialize, InitConfig, InitialGuess};

#[derive(Debug, Clone)]
pub struct Registration {
    /// Profile and center-of-mass initialization.
    pub initial: TransformParams,
    pub trace: OptimTrace,
    pub warnings: Vec<String>,
}

impl Registration {
    pub fn theta(&self) -> &TransformParams {
        &self.trace.final_theta
    }
}

/// Profile initialization followed by joint optimization.
pub fn register(stack: &MaskStack, ct_mask: &BinaryVolume, cfg: &PipelineConfig) -> Result<Registration> {
    register_with_init(stack, ct_mask, &cfg.init, cfg)
}

fn register_with_init(stack: &MaskStack, ct_mask: &BinaryVolume, init: &InitConfig, cfg: &PipelineConfig) -> Result<Registration> {
    let (initial, warnings) = initialize(stack, ct_mask, init)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let trace = optimize_joint(stack, ct_mask, &initial, &cfg.joint)?;
    require_finite(&trace)?;
    Ok(Registration { initial, trace, warnings })
}

/// Registers `k` slices grown outward from `center` (an ordinal of `stack`).
///
/// With the automatic initial guess, the guess is computed on the whole
/// stack, so a short run of slices starts at the spacing of the full stack
/// instead of being stretched over the CT height.
pub fn register_subset(stack: &MaskStack, ct_mask: &BinaryVolume, center: usize, k: usize, cfg: &PipelineConfig) -> Result<(MaskStack, Registration)> {
    let ords = stack.subset_around(center, k)?;
    let sub = stack.select(&ords)?;
    let mut init = cfg.init.clone();
    if init.initial_guess == InitialGuess::Auto {
        let g = auto_initial_guess(stack, ct_mask)?;
        init.initial_guess = InitialGuess::Fixed { scaling: g.scaling, spacing: g.spacing, offset_z: g.offset_z };
    }
    let reg = register_with_init(&sub, ct_mask, &init, cfg)?;
    Ok((sub, reg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparateInit {
    Profile,
    Joint,
}

/// Per-slice registration, started from the profile initialization or
/// from a full joint registration.
pub fn register_separate(stack: &MaskStack, ct_mask: &BinaryVolume, init: SeparateInit, cfg: &PipelineConfig) -> Result<Vec<OptimTrace>> {
    let start = match init {
        SeparateInit::Profile => {
            let (theta, warnings) = initialize(stack, ct_mask, &cfg.init)?;
            for w in &warnings {
                log::warn!("{w}");
            }
            theta
        }
        SeparateInit::Joint => register(stack, ct_mask, cfg)?.trace.final_theta,
    };
    let traces = optimize_separate(stack, ct_mask, &start, &cfg.separate)?;
    for (k, t) in traces.iter().enumerate() {
        require_finite(t).map_err(|e| match e {
            Error::Diverged { iteration, what } => Error::Diverged { iteration, what: format!("{what} (slice ordinal {k})") },
            other => other,
        })?;
    }
    Ok(traces)
}
