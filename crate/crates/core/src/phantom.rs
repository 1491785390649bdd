//! Synthetic apple-like phantoms with known slice transforms.
//!
//! The solid is a superellipsoid whose upper half is flattened, so the area
//! profile is not symmetric in z. A five-pointed star prism of lower intensity
//! models the core; its outer tips are the landmarks. Photo masks are exact
//! point samples of the solid on each slice plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ipced, AnnotationPair, AnnotationSet};
use crate::geom::{
    add, column, dot, euler_from_matrix, mat_mul, mat_t_vec, mat_vec, rotation_matrix, sub, BinaryVolume, Mask2, MaskStack, ScalarVolume,
    SliceOffset, TransformParams, Vec3, Volume,
};

/// Star-prism core centered on the apple axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreSpec {
    pub outer_radius: f64,
    pub inner_radius: f64,
    pub half_height: f64,
    /// Relative shrink of the outer radius at the top and bottom of the prism.
    pub taper: f64,
    /// Angle of the first tip (radians).
    pub phase: f64,
    pub intensity: f64,
}

impl Default for CoreSpec {
    fn default() -> Self {
        Self {
            outer_radius: 11.0,
            inner_radius: 4.5,
            half_height: 14.0,
            taper: 0.4,
            phase: 0.3,
            intensity: 0.6,
        }
    }
}

pub const CORE_TIPS: usize = 5;

impl CoreSpec {
    fn outer_at(&self, dz: f64) -> f64 {
        self.outer_radius * (1.0 - self.taper * (dz / self.half_height).powi(2))
    }

    fn outer_slope(&self, dz: f64) -> f64 {
        -2.0 * self.outer_radius * self.taper * dz / self.half_height.powi(2)
    }

    fn tip_angle(&self, k: usize) -> f64 {
        self.phase + 2.0 * std::f64::consts::PI * k as f64 / CORE_TIPS as f64
    }

    /// Whether `(dx, dy, dz)` relative to the apple center lies in the core.
    fn contains(&self, d: Vec3) -> bool {
        if d[2].abs() > self.half_height {
            return false;
        }
        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let outer = self.outer_at(d[2]);
        if r > outer {
            return false;
        }
        // star boundary: linear interpolation in angle between tip and notch radii
        let sector = 2.0 * std::f64::consts::PI / CORE_TIPS as f64;
        let a = (d[1].atan2(d[0]) - self.phase).rem_euclid(sector);
        let t = (a / (sector / 2.0) - 1.0).abs(); // 1 at tips, 0 at notches
        r <= self.inner_radius + t * (outer - self.inner_radius)
    }
}

/// Mask perturbation applied to the generated photo masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    #[default]
    Mixed,
    Dilate,
    Erode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Probability that a pixel within `boundary_radius` of the mask edge flips.
    pub boundary_rate: f64,
    pub boundary_radius: usize,
    pub boundary_mode: BoundaryMode,
    /// Standard deviation (radians) of an extra per-slice rotation about the
    /// slice center, breaking the parallel-slice model.
    pub rotation_jitter: f64,
    /// Standard deviation of additive Gaussian noise on CT intensities.
    pub intensity_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            boundary_rate: 0.0,
            boundary_radius: 1,
            boundary_mode: BoundaryMode::Mixed,
            rotation_jitter: 0.0,
            intensity_sigma: 0.05,
        }
    }
}

impl NoiseSpec {
    /// Expected area flipped per edge pixel, in pixels.
    pub fn expected_edge_displacement(&self) -> f64 {
        self.boundary_rate * self.boundary_radius as f64
    }
}

/// Ground-truth transform of the phantom slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSpec {
    pub rotation: [f64; 3],
    pub scaling: f64,
    pub spacing: f64,
    pub offset_z: f64,
    /// One `(x, y)` pair per slice; missing entries are zero.
    pub offsets: Vec<[f64; 2]>,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            rotation: [0.0; 3],
            scaling: 1.0,
            spacing: 4.0,
            offset_z: -18.0,
            offsets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    /// x, y, z semi-axes in voxels (z for the lower half).
    pub semi_axes: [f64; 3],
    pub exponent: f64,
    /// Upper-half z semi-axis as a fraction of `semi_axes[2]`.
    pub top_scale: f64,
    /// Cross-section rotation about z in radians per voxel of height.
    pub twist: f64,
    pub center: [f64; 3],
    pub flesh_intensity: f64,
    pub background_intensity: f64,
    pub core: CoreSpec,
    pub truth: TruthSpec,
    pub n_slices: usize,
    pub photo_dims: [usize; 2],
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [128, 128, 128],
            voxel_size: 0.1293,
            semi_axes: [34.0, 22.0, 25.0],
            exponent: 2.5,
            top_scale: 0.85,
            twist: 0.05,
            center: [0.0; 3],
            flesh_intensity: 1.0,
            background_intensity: 0.0,
            core: CoreSpec::default(),
            truth: TruthSpec::default(),
            n_slices: 10,
            photo_dims: [96, 96],
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// Spec with a random ground truth drawn from `seed`: rotations uniform in
    /// ±10°, scaling in [0.8, 1.2], spacing in [3.8, 4.2], slices centered on
    /// the apple, in-plane offsets within ±3 voxels.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e55);
        let max_rot = 10f64.to_radians();
        let mut spec = PhantomSpec { seed, ..Default::default() };
        let spacing = rng.random_range(3.8..4.2);
        let n = spec.n_slices;
        spec.truth = TruthSpec {
            rotation: [
                rng.random_range(-max_rot..max_rot),
                rng.random_range(-max_rot..max_rot),
                rng.random_range(-max_rot..max_rot),
            ],
            scaling: rng.random_range(0.8..1.2),
            spacing,
            offset_z: -spacing * (n as f64 - 1.0) / 2.0 + rng.random_range(-1.5..1.5),
            offsets: (0..n).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect(),
        };
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slices == 0 || self.photo_dims.contains(&0) || self.dims.contains(&0) {
            return Err(Error::InvalidInput("phantom needs positive dims and at least one slice".into()));
        }
        if !(self.exponent > 0.0) || self.semi_axes.iter().any(|&a| !(a > 0.0)) || !(self.top_scale > 0.0) || !self.twist.is_finite() {
            return Err(Error::InvalidInput("phantom semi-axes, exponent and top_scale must be positive and twist finite".into()));
        }
        let radial = if self.twist != 0.0 { self.semi_axes[0].max(self.semi_axes[1]) } else { 0.0 };
        for k in 0..3 {
            let a = if k < 2 { self.semi_axes[k].max(radial) } else { self.semi_axes[k] };
            let extent = a + self.center[k].abs();
            if extent >= (self.dims[k] as f64 - 1.0) / 2.0 {
                return Err(Error::InvalidInput(format!("semi-axis {k} does not fit in the volume")));
            }
        }
        if !(self.truth.scaling > 0.0) || self.truth.spacing < 0.0 {
            return Err(Error::InvalidInput("phantom truth needs positive scaling and non-negative spacing".into()));
        }
        if !(0.0..=1.0).contains(&self.noise.boundary_rate) {
            return Err(Error::InvalidInput("boundary noise rate must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Nominal parallel-slice parameters, slice indices `0..n_slices`.
    pub fn nominal_theta(&self) -> TransformParams {
        let t = &self.truth;
        TransformParams {
            rotation_x: t.rotation[0],
            rotation_y: t.rotation[1],
            rotation_z: t.rotation[2],
            scaling: t.scaling,
            spacing: t.spacing,
            offset_z: t.offset_z,
            per_slice_offsets: (0..self.n_slices)
                .map(|k| {
                    let o = t.offsets.get(k).copied().unwrap_or([0.0, 0.0]);
                    SliceOffset { index: k as i64, offset_x: o[0], offset_y: o[1] }
                })
                .collect(),
        }
    }

    /// Whether centered CT point `p` lies inside the apple.
    pub fn solid_contains(&self, p: Vec3) -> bool {
        let d = sub(p, self.center);
        let (sn, cs) = (-self.twist * d[2]).sin_cos();
        let d = [cs * d[0] - sn * d[1], sn * d[0] + cs * d[1], d[2]];
        let cz = if d[2] > 0.0 { self.semi_axes[2] * self.top_scale } else { self.semi_axes[2] };
        let e = self.exponent;
        (d[0] / self.semi_axes[0]).abs().powf(e) + (d[1] / self.semi_axes[1]).abs().powf(e) + (d[2] / cz).abs().powf(e) <= 1.0
    }

    pub fn core_contains(&self, p: Vec3) -> bool {
        self.core.contains(sub(p, self.center))
    }

    /// Point where core tip `k` crosses the plane through `origin` with normal `normal`.
    pub fn core_tip_on_plane(&self, k: usize, origin: Vec3, normal: Vec3) -> Option<Vec3> {
        let phi = self.core.tip_angle(k);
        let (s, c) = phi.sin_cos();
        let point = |dz: f64| {
            let r = self.core.outer_at(dz);
            add(self.center, [r * c, r * s, dz])
        };
        let mut dz = origin[2] - self.center[2];
        for _ in 0..50 {
            let g = dot(normal, sub(point(dz), origin));
            let slope = self.core.outer_slope(dz);
            let dg = normal[0] * slope * c + normal[1] * slope * s + normal[2];
            if dg.abs() < 1e-12 {
                return None;
            }
            let step = g / dg;
            dz -= step;
            if step.abs() < 1e-13 {
                break;
            }
        }
        (dz.abs() <= self.core.half_height).then(|| point(dz))
    }
}

/// One landmark: photo coordinate on the annotated slice and the CT position
/// of the same core tip on that slice's true plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub tip: usize,
    pub photo: [f64; 2],
    pub ct: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub slice_ordinal: usize,
    pub slice_index: i64,
    pub landmarks: Vec<Landmark>,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub volume: ScalarVolume,
    pub occupancy: BinaryVolume,
    pub stack: MaskStack,
    pub landmarks: LandmarkSet,
    /// Nominal parallel-slice parameters θ*.
    pub theta: TransformParams,
    /// Actual single-slice transform of each slice (equals θ* without jitter).
    pub slice_truth: Vec<TransformParams>,
}

fn slice_mask(spec: &PhantomSpec, truth: &TransformParams) -> Mask2 {
    let [w, h] = spec.photo_dims;
    let rot = truth.rotation();
    let t = mat_vec(&rot, truth.slice_translation(0).expect("single slice"));
    let (ex, ey) = (column(&rot, 0), column(&rot, 1));
    let probe = Mask2::zeros(w, h).expect("positive dims");
    Mask2::from_fn(w, h, |col, row| {
        let [u, v] = probe.centered(col, row);
        let (su, sv) = (truth.scaling * u, truth.scaling * v);
        spec.solid_contains([t[0] + su * ex[0] + sv * ey[0], t[1] + su * ex[1] + sv * ey[1], t[2] + su * ex[2] + sv * ey[2]])
    })
    .expect("positive dims")
}

/// Applies a small rotation `jitter` about the point where the slice center lands.
fn jittered(single: &TransformParams, jitter: &[[f64; 3]; 3]) -> TransformParams {
    let rot = single.rotation();
    let t = single.slice_translation(0).expect("single slice");
    let pivot = mat_vec(&rot, t);
    let new_rot = mat_mul(jitter, &rot);
    let (rx, ry, rz) = euler_from_matrix(&new_rot);
    let new_rot = rotation_matrix(rx, ry, rz);
    // keep the pivot fixed: R' t' = pivot
    let t_new = mat_t_vec(&new_rot, pivot);
    let idx = single.per_slice_offsets[0].index;
    TransformParams {
        rotation_x: rx,
        rotation_y: ry,
        rotation_z: rz,
        scaling: single.scaling,
        spacing: single.spacing,
        offset_z: t_new[2] - single.spacing * idx as f64,
        per_slice_offsets: vec![SliceOffset { index: idx, offset_x: t_new[0], offset_y: t_new[1] }],
    }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let theta = spec.nominal_theta();

    let occupancy = {
        let probe = BinaryVolume::filled(spec.dims, spec.voxel_size, 0)?;
        Volume::from_fn(spec.dims, spec.voxel_size, |x, y, z| {
            u8::from(spec.solid_contains(probe.index_to_centered([x as f64, y as f64, z as f64])))
        })?
    };
    let noise = Normal::new(0.0, spec.noise.intensity_sigma.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let volume = {
        let probe = &occupancy;
        let mut k = 0usize;
        let data: Vec<f32> = occupancy
            .data()
            .iter()
            .map(|&occ| {
                let (x, y, z) = (k % spec.dims[0], (k / spec.dims[0]) % spec.dims[1], k / (spec.dims[0] * spec.dims[1]));
                k += 1;
                let p = probe.index_to_centered([x as f64, y as f64, z as f64]);
                let base = if occ == 0 {
                    spec.background_intensity
                } else if spec.core_contains(p) {
                    spec.core.intensity
                } else {
                    spec.flesh_intensity
                };
                let n: f64 = if spec.noise.intensity_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (base + n) as f32
            })
            .collect();
        Volume::new(spec.dims, spec.voxel_size, data)?
    };

    let jitter_dist = Normal::new(0.0, spec.noise.rotation_jitter.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let slice_truth: Vec<TransformParams> = (0..spec.n_slices)
        .map(|k| {
            let single = theta.single_slice(k).expect("in range");
            if spec.noise.rotation_jitter > 0.0 {
                let j = rotation_matrix(jitter_dist.sample(&mut rng), jitter_dist.sample(&mut rng), jitter_dist.sample(&mut rng));
                jittered(&single, &j)
            } else {
                single
            }
        })
        .collect();

    let masks: Vec<Mask2> = slice_truth.iter().map(|t| slice_mask(spec, t)).collect();
    let empty: Vec<usize> = masks.iter().enumerate().filter(|(_, m)| m.area() == 0).map(|(k, _)| k).collect();
    if !empty.is_empty() {
        return Err(Error::SliceOutsideSolid(empty));
    }
    let mut stack = MaskStack::sequential(masks)?;
    if spec.noise.boundary_rate > 0.0 {
        stack = perturb_masks(&stack, &spec.noise, &mut rng);
    }

    let ordinal = spec.n_slices / 2;
    let truth = &slice_truth[ordinal];
    let origin = truth.transform_point([0.0, 0.0], 0)?;
    let normal = truth.plane_normal();
    let landmarks: Vec<Landmark> = (0..CORE_TIPS)
        .filter_map(|tip| {
            let ct = spec.core_tip_on_plane(tip, origin, normal)?;
            let photo = truth.project_to_slice(ct, 0).ok()?;
            Some(Landmark { tip, photo, ct })
        })
        .collect();
    if landmarks.is_empty() {
        return Err(Error::InvalidInput("annotated slice misses the core".into()));
    }

    Ok(Phantom {
        spec: spec.clone(),
        volume,
        occupancy,
        stack,
        landmarks: LandmarkSet { slice_ordinal: ordinal, slice_index: ordinal as i64, landmarks },
        theta,
        slice_truth,
    })
}

impl Phantom {
    /// Annotation pairs for the landmark slice under a registration result:
    /// each true photo landmark paired with the photo-frame position of the
    /// same core tip on the registered plane. The pixel size is the physical
    /// size of one photo pixel under `theta`.
    pub fn landmark_annotations(&self, theta: &TransformParams) -> Result<AnnotationSet> {
        let idx = self.landmarks.slice_index;
        let ord = theta
            .per_slice_offsets
            .iter()
            .position(|o| o.index == idx)
            .ok_or_else(|| Error::ParameterBinding(format!("theta has no slice with index {idx}")))?;
        theta.validate()?;
        let origin = theta.transform_point([0.0, 0.0], ord)?;
        let normal = theta.plane_normal();
        let mut pairs = Vec::new();
        for lm in &self.landmarks.landmarks {
            let Some(ct) = self.spec.core_tip_on_plane(lm.tip, origin, normal) else {
                return Err(Error::UndefinedMetric(format!("registered slice misses core tip {}", lm.tip)));
            };
            pairs.push(AnnotationPair { photo: lm.photo, ct: theta.project_to_slice(ct, ord)? });
        }
        AnnotationSet::new(self.landmarks.slice_ordinal, theta.scaling * self.spec.voxel_size, pairs)
    }

    /// Landmark distance in CT voxels.
    pub fn landmark_error_voxels(&self, theta: &TransformParams) -> Result<f64> {
        Ok(ipced(&self.landmark_annotations(theta)?)? / self.spec.voxel_size)
    }
}

/// City-block distance (capped at `cap + 1`) of every pixel to the nearest
/// pixel with the opposite value.
fn distance_to_other(mask: &Mask2, cap: usize) -> Vec<usize> {
    let (w, h) = (mask.width(), mask.height());
    let data = mask.data();
    let mut dist = vec![cap + 1; w * h];
    let mut frontier: Vec<usize> = Vec::new();
    for i in 0..w * h {
        let (c, r) = (i % w, i / w);
        let neighbors = [(c > 0).then(|| i - 1), (c + 1 < w).then(|| i + 1), (r > 0).then(|| i - w), (r + 1 < h).then(|| i + w)];
        if neighbors.iter().flatten().any(|&j| data[j] != data[i]) {
            dist[i] = 1;
            frontier.push(i);
        }
    }
    for d in 2..=cap {
        let mut next = Vec::new();
        for &i in &frontier {
            let (c, r) = (i % w, i / w);
            for j in [(c > 0).then(|| i - 1), (c + 1 < w).then(|| i + 1), (r > 0).then(|| i - w), (r + 1 < h).then(|| i + w)]
                .into_iter()
                .flatten()
            {
                if data[j] == data[i] && dist[j] > d {
                    dist[j] = d;
                    next.push(j);
                }
            }
        }
        frontier = next;
    }
    dist
}

/// Random boundary erosion/dilation: every pixel within `boundary_radius`
/// (city-block) of the edge flips with probability `boundary_rate`, restricted
/// to background pixels for dilation and foreground pixels for erosion. In
/// mixed mode each side flips with half the rate.
pub fn perturb_masks<R: Rng>(stack: &MaskStack, noise: &NoiseSpec, rng: &mut R) -> MaskStack {
    if noise.boundary_rate <= 0.0 || noise.boundary_radius == 0 {
        return stack.clone();
    }
    let masks = stack
        .masks()
        .iter()
        .map(|m| {
            let dist = distance_to_other(m, noise.boundary_radius);
            let data: Vec<u8> = m
                .data()
                .iter()
                .zip(&dist)
                .map(|(&v, &d)| {
                    if d > noise.boundary_radius {
                        return v;
                    }
                    let rate = match (noise.boundary_mode, v) {
                        (BoundaryMode::Mixed, _) => noise.boundary_rate / 2.0,
                        (BoundaryMode::Dilate, 0) | (BoundaryMode::Erode, 1) => noise.boundary_rate,
                        _ => 0.0,
                    };
                    if rate > 0.0 && rng.random_bool(rate) {
                        1 - v
                    } else {
                        v
                    }
                })
                .collect();
            Mask2::new(m.width(), m.height(), data).expect("same shape")
        })
        .collect();
    MaskStack::new(masks, stack.slice_indices().to_vec()).expect("same layout")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_section_is_disc() {
        let spec = PhantomSpec {
            semi_axes: [20.0, 20.0, 20.0],
            exponent: 2.0,
            top_scale: 1.0,
            dims: [64, 64, 64],
            n_slices: 1,
            photo_dims: [64, 64],
            truth: TruthSpec { offset_z: 8.0, ..Default::default() },
            core: CoreSpec { half_height: 30.0, ..Default::default() },
            ..Default::default()
        };
        let ph = generate_phantom(&spec).unwrap();
        let r = (20.0f64.powi(2) - 8.0f64.powi(2)).sqrt();
        let m = &ph.stack.masks()[0];
        for row in 0..64 {
            for col in 0..64 {
                let [u, v] = m.centered(col, row);
                let d = (u * u + v * v).sqrt();
                if (d - r).abs() > 1.0 {
                    assert_eq!(m.get(col, row) == 1, d < r, "pixel ({col},{row})");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_phantom() {
        let spec = PhantomSpec { dims: [64, 64, 64], semi_axes: [20.0, 18.0, 16.0], photo_dims: [64, 64], truth: TruthSpec { spacing: 2.8, offset_z: -12.6, ..Default::default() }, seed: 5, ..Default::default() };
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a.volume, b.volume);
        assert_eq!(a.stack, b.stack);
        assert_eq!(a.landmarks, b.landmarks);
    }

    #[test]
    fn slice_outside_solid_is_reported() {
        let spec = PhantomSpec { truth: TruthSpec { offset_z: 40.0, ..Default::default() }, n_slices: 2, ..Default::default() };
        match generate_phantom(&spec) {
            Err(Error::SliceOutsideSolid(v)) => assert_eq!(v, vec![0, 1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rate_zero_is_identity_and_dilation_grows() {
        let m = Mask2::from_fn(30, 30, |c, r| (c as f64 - 15.0).hypot(r as f64 - 15.0) < 8.0).unwrap();
        let stack = MaskStack::sequential(vec![m.clone()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let none = NoiseSpec { boundary_rate: 0.0, ..Default::default() };
        assert_eq!(perturb_masks(&stack, &none, &mut rng), stack);
        let dil = NoiseSpec { boundary_rate: 1.0, boundary_radius: 1, boundary_mode: BoundaryMode::Dilate, ..Default::default() };
        assert!(perturb_masks(&stack, &dil, &mut rng).masks()[0].area() > m.area());
    }

    #[test]
    fn landmarks_lie_on_core_tips() {
        let ph = generate_phantom(&PhantomSpec::random(3)).unwrap();
        assert_eq!(ph.landmarks.landmarks.len(), CORE_TIPS);
        let truth = &ph.slice_truth[ph.landmarks.slice_ordinal];
        for lm in &ph.landmarks.landmarks {
            let back = truth.transform_point(lm.photo, 0).unwrap();
            assert!(crate::geom::norm(sub(back, lm.ct)) < 1e-9);
        }
    }

    #[test]
    fn jittered_slice_keeps_pivot() {
        let spec = PhantomSpec::random(1);
        let theta = spec.nominal_theta();
        let single = theta.single_slice(4).unwrap();
        let j = rotation_matrix(0.01, -0.02, 0.005);
        let jt = jittered(&single, &j);
        let a = single.transform_point([0.0, 0.0], 0).unwrap();
        let b = jt.transform_point([0.0, 0.0], 0).unwrap();
        assert!(crate::geom::norm(sub(a, b)) < 1e-9);
    }
}
