//! Initialization of the shared scale/z parameters by matching area profiles,
//! and of the per-slice in-plane offsets by matching centers of mass.
//!
//! The photo profile has one point `[sqrt(A_photo(i)) · scaling, offset_z + spacing · i]`
//! per slice; the CT profile one point `[sqrt(A_CT(j)), j]` per horizontal CT
//! slice. The fit minimizes the mean squared distance from each photo point to
//! its nearest CT point with momentum gradient descent, refreshing the
//! correspondences every iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{mat_t_vec, BinaryVolume, MaskStack, TransformParams};

#[derive(Debug, Clone, PartialEq)]
pub struct AreaProfile {
    pub points: Vec<[f64; 2]>,
}

impl AreaProfile {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("area profile needs at least one point".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("area profile points must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Starting point of the profile fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum InitialGuess {
    /// Derived from the data: scaling from the largest areas, spacing from
    /// the CT z-extent over the slice span, offset_z at the bottom of the CT support.
    Auto,
    Fixed { scaling: f64, spacing: f64, offset_z: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Applied to the scaling gradient divided by the mean photo area.
    pub lr_scaling: f64,
    pub lr_offset_z: f64,
    pub lr_spacing: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub initial_guess: InitialGuess,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            lr_scaling: 1e-3,
            lr_offset_z: 1e-1,
            lr_spacing: 1e-2,
            momentum: 0.6,
            iterations: 10_000,
            initial_guess: InitialGuess::Auto,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        let lrs = [self.lr_scaling, self.lr_offset_z, self.lr_spacing];
        if lrs.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("init learning rates must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(format!("init momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("init iterations must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn photo_area_profile(stack: &MaskStack, theta: &TransformParams) -> AreaProfile {
    let points = stack
        .masks()
        .iter()
        .zip(stack.slice_indices())
        .map(|(m, &i)| [(m.area() as f64).sqrt() * theta.scaling, theta.offset_z + theta.spacing * i as f64])
        .collect();
    AreaProfile { points }
}

/// Per horizontal slice `j` (z index): `[sqrt(A_CT(j)), j]`.
pub fn ct_area_profile(mask: &BinaryVolume) -> AreaProfile {
    let [nx, ny, nz] = mask.dims();
    let plane = nx * ny;
    let points = (0..nz)
        .map(|j| {
            let area = mask.data()[j * plane..(j + 1) * plane].iter().filter(|&&v| v == 1).count();
            [(area as f64).sqrt(), j as f64]
        })
        .collect();
    AreaProfile { points }
}

fn nearest(ct: &[[f64; 2]], p: [f64; 2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, s) in ct.iter().enumerate() {
        let d = (p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Mean squared distance from each photo point to its nearest CT point.
pub fn profile_cost(photo: &AreaProfile, ct: &AreaProfile) -> Result<f64> {
    if photo.is_empty() || ct.is_empty() {
        return Err(Error::InvalidInput("profile cost needs two nonempty profiles".into()));
    }
    let total: f64 = photo.points.iter().map(|&p| nearest(&ct.points, p).1).sum();
    Ok(total / photo.len() as f64)
}

/// Shared parameters touched by the profile fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    pub scaling: f64,
    pub spacing: f64,
    pub offset_z: f64,
}

/// Momentum descent on the profile cost. `sqrt_areas[k]` and `indices[k]`
/// describe photo slice `k`; `ct` is the CT profile already expressed in the
/// same z frame as `offset_z`.
pub fn fit_profile(sqrt_areas: &[f64], indices: &[i64], ct: &AreaProfile, start: ProfileParams, cfg: &InitConfig) -> Result<ProfileParams> {
    cfg.validate()?;
    if sqrt_areas.is_empty() || sqrt_areas.len() != indices.len() || ct.is_empty() {
        return Err(Error::InvalidInput("profile fit needs matching nonempty inputs".into()));
    }
    let n = sqrt_areas.len() as f64;
    let mean_area = (sqrt_areas.iter().map(|a| a * a).sum::<f64>() / n).max(1.0);
    let mut p = start;
    let mut vel = [0.0f64; 3];
    for iter in 0..cfg.iterations {
        let mut g = [0.0f64; 3];
        for (&a, &i) in sqrt_areas.iter().zip(indices) {
            let pt = [a * p.scaling, p.offset_z + p.spacing * i as f64];
            let (j, _) = nearest(&ct.points, pt);
            let da = pt[0] - ct.points[j][0];
            let dz = pt[1] - ct.points[j][1];
            g[0] += 2.0 * da * a;
            g[1] += 2.0 * dz * i as f64;
            g[2] += 2.0 * dz;
        }
        let lrs = [cfg.lr_scaling / mean_area, cfg.lr_spacing, cfg.lr_offset_z];
        for k in 0..3 {
            vel[k] = cfg.momentum * vel[k] - lrs[k] * g[k] / n;
        }
        p.scaling += vel[0];
        p.spacing += vel[1];
        p.offset_z += vel[2];
        for (name, v) in [("scaling", p.scaling), ("spacing", p.spacing), ("offset_z", p.offset_z)] {
            if !v.is_finite() {
                return Err(Error::Diverged { iteration: iter, what: name.into() });
            }
        }
    }
    Ok(p)
}

/// CT profile with z expressed in centered voxel coordinates.
pub fn centered_ct_profile(mask: &BinaryVolume) -> AreaProfile {
    let shift = (mask.dims()[2] as f64 - 1.0) * 0.5;
    let mut prof = ct_area_profile(mask);
    for p in &mut prof.points {
        p[1] -= shift;
    }
    prof
}

/// Data-driven starting point (see [`InitialGuess::Auto`]).
pub fn auto_initial_guess(stack: &MaskStack, ct_mask: &BinaryVolume) -> Result<ProfileParams> {
    let ct = centered_ct_profile(ct_mask);
    let support: Vec<f64> = ct.points.iter().filter(|p| p[0] > 0.0).map(|p| p[1]).collect();
    let (Some(&zmin), Some(&zmax)) = (support.first(), support.last()) else {
        return Err(Error::InvalidInput("CT mask is empty".into()));
    };
    let max_ct = ct.points.iter().map(|p| p[0]).fold(0.0, f64::max);
    let max_photo = stack.masks().iter().map(|m| (m.area() as f64).sqrt()).fold(0.0, f64::max);
    if max_photo == 0.0 {
        return Err(Error::InvalidInput("all photo masks are empty".into()));
    }
    let idx = stack.slice_indices();
    let span = (idx[idx.len() - 1] - idx[0] + 1) as f64;
    let spacing = (zmax - zmin + 1.0) / span;
    Ok(ProfileParams {
        scaling: max_ct / max_photo,
        spacing,
        offset_z: zmin - spacing * idx[0] as f64,
    })
}

/// Fits scaling, spacing and offset_z; rotations and per-slice offsets are zero.
pub fn fit_profile_params(stack: &MaskStack, ct_mask: &BinaryVolume, cfg: &InitConfig) -> Result<TransformParams> {
    let start = match cfg.initial_guess {
        InitialGuess::Auto => auto_initial_guess(stack, ct_mask)?,
        InitialGuess::Fixed { scaling, spacing, offset_z } => ProfileParams { scaling, spacing, offset_z },
    };
    let sqrt_areas: Vec<f64> = stack.masks().iter().map(|m| (m.area() as f64).sqrt()).collect();
    let fitted = fit_profile(&sqrt_areas, stack.slice_indices(), &centered_ct_profile(ct_mask), start, cfg)?;
    Ok(TransformParams::for_stack(stack, fitted.scaling, fitted.spacing, fitted.offset_z))
}

/// Centroid of the 1-voxels of z-slice `j`, in centered x/y coordinates.
fn ct_slice_com(mask: &BinaryVolume, j: usize) -> Option<[f64; 2]> {
    let [nx, ny, _] = mask.dims();
    let off = mask.center_offset();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..ny {
        for x in 0..nx {
            if mask.get(x, y, j) == 1 {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| [sx / n as f64 - off[0], sy / n as f64 - off[1]])
}

/// Sets each slice's in-plane offset so the transformed photo center of mass
/// lands on the center of mass of the nearest CT z-slice at the slice's
/// height. Slices without a usable CT slice or with an empty photo keep `(0, 0)`
/// and produce a warning.
pub fn init_xy_offsets(stack: &MaskStack, ct_mask: &BinaryVolume, theta: &TransformParams) -> Result<(TransformParams, Vec<String>)> {
    theta.check_bound(stack)?;
    let mut out = theta.clone();
    let mut warnings = Vec::new();
    let nz = ct_mask.dims()[2];
    let zoff = ct_mask.center_offset()[2];
    let rot = theta.rotation();
    for (k, mask) in stack.masks().iter().enumerate() {
        let idx = stack.slice_indices()[k];
        let z = theta.offset_z + theta.spacing * idx as f64;
        let j = (z + zoff).round();
        let slot = &mut out.per_slice_offsets[k];
        slot.offset_x = 0.0;
        slot.offset_y = 0.0;
        let ct_com = if j >= 0.0 && (j as usize) < nz { ct_slice_com(ct_mask, j as usize) } else { None };
        let Some(ct_com) = ct_com else {
            let msg = format!("slice {idx} maps to z = {z:.2} outside the CT mask support; offsets left at 0");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        let Some(photo_com) = mask.center_of_mass() else {
            let msg = format!("slice {idx} photo mask is empty; offsets left at 0");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        let target = mat_t_vec(&rot, [ct_com[0], ct_com[1], j - zoff]);
        slot.offset_x = target[0] - theta.scaling * photo_com[0];
        slot.offset_y = target[1] - theta.scaling * photo_com[1];
    }
    Ok((out, warnings))
}

/// Profile fit followed by center-of-mass offsets.
pub fn initialize(stack: &MaskStack, ct_mask: &BinaryVolume, cfg: &InitConfig) -> Result<(TransformParams, Vec<String>)> {
    let theta = fit_profile_params(stack, ct_mask, cfg)?;
    init_xy_offsets(stack, ct_mask, &theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mask2;

    #[test]
    fn photo_profile_arithmetic() {
        let mask = Mask2::from_fn(20, 20, |c, r| c < 10 && r < 10).unwrap();
        let stack = MaskStack::new(vec![mask, Mask2::zeros(20, 20).unwrap()], vec![3, 4]).unwrap();
        let theta = TransformParams::for_stack(&stack, 2.0, 4.0, 5.0);
        let prof = photo_area_profile(&stack, &theta);
        assert_eq!(prof.points, vec![[20.0, 17.0], [0.0, 21.0]]);
    }

    #[test]
    fn ct_profile_of_box_and_empty() {
        let vol = BinaryVolume::from_fn([12, 12, 5], 1.0, |x, y, _| u8::from((1..11).contains(&x) && (1..11).contains(&y))).unwrap();
        let prof = ct_area_profile(&vol);
        assert_eq!(prof.points, (0..5).map(|j| [10.0, j as f64]).collect::<Vec<_>>());
        let empty = BinaryVolume::filled([3, 3, 2], 1.0, 0).unwrap();
        assert_eq!(ct_area_profile(&empty).points, vec![[0.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn cost_basics() {
        let ct = AreaProfile::new(vec![[1.0, 0.0], [2.0, 1.0], [3.0, 2.0]]).unwrap();
        let sub = AreaProfile::new(vec![[2.0, 1.0], [3.0, 2.0]]).unwrap();
        assert_eq!(profile_cost(&sub, &ct).unwrap(), 0.0);
        let one = AreaProfile::new(vec![[3.0, 6.0]]).unwrap();
        assert_eq!(profile_cost(&one, &ct).unwrap(), 16.0);
        assert!(AreaProfile::new(vec![]).is_err());
        assert!(profile_cost(&AreaProfile { points: vec![] }, &ct).is_err());
    }

    #[test]
    fn zero_learning_rates_keep_start() {
        let ct = AreaProfile::new((0..20).map(|j| [10.0 + j as f64, j as f64]).collect()).unwrap();
        let start = ProfileParams { scaling: 1.3, spacing: 2.0, offset_z: 1.0 };
        let cfg = InitConfig { lr_scaling: 0.0, lr_offset_z: 0.0, lr_spacing: 0.0, iterations: 50, ..Default::default() };
        let got = fit_profile(&[5.0, 6.0, 7.0], &[0, 1, 2], &ct, start, &cfg).unwrap();
        assert_eq!(got, start);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = InitConfig { momentum: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = InitConfig { iterations: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn com_shift_sets_offsets() {
        // photo disc centered at the photo origin
        let photo = Mask2::from_fn(21, 21, |c, r| (c as f64 - 10.0).powi(2) + (r as f64 - 10.0).powi(2) <= 25.0).unwrap();
        // CT disc centered at (5, 7) in centered coordinates of a 31x31x3 volume
        let ct = BinaryVolume::from_fn([31, 31, 3], 1.0, |x, y, _| {
            u8::from((x as f64 - 20.0).powi(2) + (y as f64 - 22.0).powi(2) <= 25.0)
        })
        .unwrap();
        let stack = MaskStack::sequential(vec![photo]).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 1.0, 0.0);
        let (out, warnings) = init_xy_offsets(&stack, &ct, &theta).unwrap();
        assert!(warnings.is_empty());
        assert!((out.per_slice_offsets[0].offset_x - 5.0).abs() < 1e-12);
        assert!((out.per_slice_offsets[0].offset_y - 7.0).abs() < 1e-12);
    }

    #[test]
    fn slices_outside_support_warn() {
        let photo = Mask2::from_fn(5, 5, |_, _| true).unwrap();
        let ct = BinaryVolume::filled([5, 5, 3], 1.0, 1).unwrap();
        let stack = MaskStack::sequential(vec![photo]).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 1.0, 40.0);
        let (out, warnings) = init_xy_offsets(&stack, &ct, &theta).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(out.per_slice_offsets[0].offset_x, 0.0);
    }
}
