//! Core geometry: voxel grids, slice masks, the parallel-slice transform and
//! trilinear sampling.
//!
//! Conventions used everywhere in the crate:
//!
//! * Volumes are stored x-fastest. A voxel index `(ix, iy, iz)` maps to the
//!   centered coordinate `ix - (nx - 1) / 2` (same for y and z), so the volume
//!   center is the origin. All CT-space quantities are in voxel units.
//! * Photo pixels `(col, row)` map to `(u, v) = (col - (w - 1) / 2, row - (h - 1) / 2)`,
//!   lifted to `(u, v, 0)` before transformation.
//! * Rotations compose as `R = Rz(rz) * Ry(ry) * Rx(rx)` with right-handed axis
//!   rotations about the CT axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
/// Row-major 3x3 matrix, `m[row][col]`.
pub type Mat3 = [[f64; 3]; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// `mᵀ v`
#[inline]
pub fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// Column `c` of `m`.
#[inline]
pub fn column(m: &Mat3, c: usize) -> Vec3 {
    [m[0][c], m[1][c], m[2][c]]
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn d_rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]]
}

fn d_rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]]
}

fn d_rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]
}

/// `R = Rz(rz) · Ry(ry) · Rx(rx)`.
pub fn rotation_matrix(rx: f64, ry: f64, rz: f64) -> Mat3 {
    mat_mul(&rot_z(rz), &mat_mul(&rot_y(ry), &rot_x(rx)))
}

/// Angles `(rx, ry, rz)` with `rotation_matrix(rx, ry, rz) == m`, taking
/// `ry` in `[-π/2, π/2]`.
pub fn euler_from_matrix(m: &Mat3) -> (f64, f64, f64) {
    let ry = (-m[2][0]).clamp(-1.0, 1.0).asin();
    let rx = m[2][1].atan2(m[2][2]);
    let rz = m[1][0].atan2(m[0][0]);
    (rx, ry, rz)
}

/// Partial derivatives of [`rotation_matrix`] with respect to `rx`, `ry`, `rz`.
pub fn rotation_partials(rx: f64, ry: f64, rz: f64) -> [Mat3; 3] {
    let (x, y, z) = (rot_x(rx), rot_y(ry), rot_z(rz));
    [
        mat_mul(&z, &mat_mul(&y, &d_rot_x(rx))),
        mat_mul(&z, &mat_mul(&d_rot_y(ry), &x)),
        mat_mul(&d_rot_z(rz), &mat_mul(&y, &x)),
    ]
}

/// Element types allowed in a [`Volume`].
pub trait Voxel: Copy + Send + Sync + PartialEq + 'static {
    fn to_f64(self) -> f64;
    fn is_valid(self) -> bool;
}

impl Voxel for u8 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn is_valid(self) -> bool {
        self <= 1
    }
}

impl Voxel for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn is_valid(self) -> bool {
        self.is_finite()
    }
}

/// Dense 3D voxel grid with isotropic voxel size (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    voxel_size: f64,
    data: Vec<T>,
}

/// CT reconstruction intensities.
pub type ScalarVolume = Volume<f32>;
/// Segmentation mask, every voxel 0 or 1.
pub type BinaryVolume = Volume<u8>;

impl<T: Voxel> Volume<T> {
    pub fn new(dims: [usize; 3], voxel_size: f64, data: Vec<T>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!("volume dims must be positive, got {dims:?}")));
        }
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidInput(format!("voxel size must be positive, got {voxel_size}")));
        }
        let len = dims[0] * dims[1] * dims[2];
        if data.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "volume data has {} elements, dims {dims:?} need {len}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::InvalidInput(format!("invalid voxel value at linear index {pos}")));
        }
        Ok(Self { dims, voxel_size, data })
    }

    pub fn filled(dims: [usize; 3], voxel_size: f64, value: T) -> Result<Self> {
        Self::new(dims, voxel_size, vec![value; dims[0] * dims[1] * dims[2]])
    }

    /// Builds a volume by evaluating `f(ix, iy, iz)` at every voxel.
    pub fn from_fn(dims: [usize; 3], voxel_size: f64, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    data.push(f(ix, iy, iz));
                }
            }
        }
        Self::new(dims, voxel_size, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn linear_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> T {
        self.data[self.linear_index(ix, iy, iz)]
    }

    /// Value at a possibly out-of-range index; `None` outside.
    #[inline]
    pub fn get_checked(&self, ix: isize, iy: isize, iz: isize) -> Option<T> {
        let [nx, ny, nz] = self.dims;
        if ix < 0 || iy < 0 || iz < 0 || ix as usize >= nx || iy as usize >= ny || iz as usize >= nz {
            None
        } else {
            Some(self.get(ix as usize, iy as usize, iz as usize))
        }
    }

    /// Offset added to a centered coordinate to obtain a (continuous) index.
    #[inline]
    pub fn center_offset(&self) -> Vec3 {
        [
            (self.dims[0] as f64 - 1.0) * 0.5,
            (self.dims[1] as f64 - 1.0) * 0.5,
            (self.dims[2] as f64 - 1.0) * 0.5,
        ]
    }

    pub fn index_to_centered(&self, idx: Vec3) -> Vec3 {
        sub(idx, self.center_offset())
    }

    pub fn centered_to_index(&self, p: Vec3) -> Vec3 {
        add(p, self.center_offset())
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Result<Volume<U>> {
        Volume::new(self.dims, self.voxel_size, self.data.iter().map(|&v| f(v)).collect())
    }
}

impl BinaryVolume {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_scalar(&self) -> ScalarVolume {
        Volume {
            dims: self.dims,
            voxel_size: self.voxel_size,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

impl ScalarVolume {
    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// 2D binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2 {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask2 {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!("mask size must be positive, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask data has {} elements, {width}x{height} needs {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(u8::from(f(col, row)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Centered photo coordinate of pixel `(col, row)`.
    #[inline]
    pub fn centered(&self, col: usize, row: usize) -> [f64; 2] {
        [
            col as f64 - (self.width as f64 - 1.0) * 0.5,
            row as f64 - (self.height as f64 - 1.0) * 0.5,
        ]
    }

    /// Centroid of the 1-pixels in centered coordinates, or `None` if empty.
    pub fn center_of_mass(&self) -> Option<[f64; 2]> {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for row in 0..self.height {
            for col in 0..self.width {
                if self.get(col, row) == 1 {
                    let [u, v] = self.centered(col, row);
                    su += u;
                    sv += v;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| [su / n as f64, sv / n as f64])
    }
}

/// Ordered stack of equally sized photo masks (stem end first).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    masks: Vec<Mask2>,
    slice_indices: Vec<i64>,
}

impl MaskStack {
    pub fn new(masks: Vec<Mask2>, slice_indices: Vec<i64>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::InvalidInput("mask stack must contain at least one slice".into()));
        }
        if masks.len() != slice_indices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} masks but {} slice indices",
                masks.len(),
                slice_indices.len()
            )));
        }
        let (w, h) = (masks[0].width, masks[0].height);
        if let Some(k) = masks.iter().position(|m| m.width != w || m.height != h) {
            return Err(Error::DimensionMismatch(format!(
                "mask {k} is {}x{}, expected {w}x{h}",
                masks[k].width, masks[k].height
            )));
        }
        if slice_indices.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidInput("slice indices must be strictly increasing".into()));
        }
        Ok(Self { masks, slice_indices })
    }

    /// Stack with slice indices `0..n`.
    pub fn sequential(masks: Vec<Mask2>) -> Result<Self> {
        let n = masks.len() as i64;
        Self::new(masks, (0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[Mask2] {
        &self.masks
    }

    pub fn slice_indices(&self) -> &[i64] {
        &self.slice_indices
    }

    pub fn width(&self) -> usize {
        self.masks[0].width
    }

    pub fn height(&self) -> usize {
        self.masks[0].height
    }

    /// Ordinals of `k` slices grown outward from `center`: center, +1, -1,
    /// +2, -2, ... skipping ordinals outside the stack. Returned sorted.
    pub fn subset_around(&self, center: usize, k: usize) -> Result<Vec<usize>> {
        let n = self.len();
        if center >= n {
            return Err(Error::ParameterBinding(format!("center ordinal {center} out of range")));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidInput(format!("subset size {k} not in 1..={n}")));
        }
        let mut out = vec![center];
        let mut step = 1;
        while out.len() < k {
            if center + step < n {
                out.push(center + step);
            }
            if out.len() < k && step <= center {
                out.push(center - step);
            }
            step += 1;
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Sub-stack made of the given ordinals (sorted, deduplicated).
    pub fn select(&self, ordinals: &[usize]) -> Result<Self> {
        let mut ords = ordinals.to_vec();
        ords.sort_unstable();
        ords.dedup();
        if let Some(&bad) = ords.iter().find(|&&k| k >= self.len()) {
            return Err(Error::ParameterBinding(format!("slice ordinal {bad} out of range")));
        }
        Self::new(
            ords.iter().map(|&k| self.masks[k].clone()).collect(),
            ords.iter().map(|&k| self.slice_indices[k]).collect(),
        )
    }
}

/// In-plane offset of one slice, tagged with the slice index used for its z position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceOffset {
    pub index: i64,
    pub offset_x: f64,
    pub offset_y: f64,
}

/// Parameters of the parallel-slice model
/// `T(c, i) = R · ([offset_x_i, offset_y_i, offset_z + spacing · i]ᵀ + scaling · c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub rotation_x: f64,
    pub rotation_y: f64,
    pub rotation_z: f64,
    pub scaling: f64,
    pub spacing: f64,
    pub offset_z: f64,
    pub per_slice_offsets: Vec<SliceOffset>,
}

impl TransformParams {
    /// Zero rotation and offsets, bound to the slice indices of `stack`.
    pub fn for_stack(stack: &MaskStack, scaling: f64, spacing: f64, offset_z: f64) -> Self {
        Self {
            rotation_x: 0.0,
            rotation_y: 0.0,
            rotation_z: 0.0,
            scaling,
            spacing,
            offset_z,
            per_slice_offsets: stack
                .slice_indices()
                .iter()
                .map(|&index| SliceOffset { index, offset_x: 0.0, offset_y: 0.0 })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shared = [
            self.rotation_x,
            self.rotation_y,
            self.rotation_z,
            self.scaling,
            self.spacing,
            self.offset_z,
        ];
        if shared.iter().any(|v| !v.is_finite())
            || self
                .per_slice_offsets
                .iter()
                .any(|o| !o.offset_x.is_finite() || !o.offset_y.is_finite())
        {
            return Err(Error::InvalidInput("transform parameters must be finite".into()));
        }
        if self.scaling <= 0.0 {
            return Err(Error::InvalidInput(format!("scaling must be positive, got {}", self.scaling)));
        }
        if self.spacing < 0.0 {
            return Err(Error::InvalidInput(format!("spacing must be non-negative, got {}", self.spacing)));
        }
        Ok(())
    }

    /// Checks that the per-slice entries match the stack's slice indices.
    pub fn check_bound(&self, stack: &MaskStack) -> Result<()> {
        if self.per_slice_offsets.len() != stack.len() {
            return Err(Error::ParameterBinding(format!(
                "parameters carry {} slice offsets, stack has {} slices",
                self.per_slice_offsets.len(),
                stack.len()
            )));
        }
        for (o, &idx) in self.per_slice_offsets.iter().zip(stack.slice_indices()) {
            if o.index != idx {
                return Err(Error::ParameterBinding(format!(
                    "slice offset for index {} bound to stack slice {idx}",
                    o.index
                )));
            }
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_matrix(self.rotation_x, self.rotation_y, self.rotation_z)
    }

    /// Common normal of all transformed slice planes.
    pub fn plane_normal(&self) -> Vec3 {
        column(&self.rotation(), 2)
    }

    /// Pre-rotation translation `[offset_x_i, offset_y_i, offset_z + spacing · i]` of slice `ordinal`.
    pub fn slice_translation(&self, ordinal: usize) -> Result<Vec3> {
        let o = self.per_slice_offsets.get(ordinal).ok_or_else(|| {
            Error::ParameterBinding(format!(
                "slice ordinal {ordinal} out of range for {} offsets",
                self.per_slice_offsets.len()
            ))
        })?;
        Ok([o.offset_x, o.offset_y, self.offset_z + self.spacing * o.index as f64])
    }

    /// Maps photo coordinate `c` (centered pixels) on slice `ordinal` to centered CT voxels.
    pub fn transform_point(&self, c: [f64; 2], ordinal: usize) -> Result<Vec3> {
        let t = self.slice_translation(ordinal)?;
        let q = [t[0] + self.scaling * c[0], t[1] + self.scaling * c[1], t[2]];
        Ok(mat_vec(&self.rotation(), q))
    }

    /// Inverse of [`transform_point`](Self::transform_point) restricted to the slice plane:
    /// the in-plane photo coordinate of the orthogonal projection of `p`.
    pub fn project_to_slice(&self, p: Vec3, ordinal: usize) -> Result<[f64; 2]> {
        let t = self.slice_translation(ordinal)?;
        let q = mat_t_vec(&self.rotation(), p);
        Ok([(q[0] - t[0]) / self.scaling, (q[1] - t[1]) / self.scaling])
    }

    /// Single-slice parameter set for slice `ordinal`.
    pub fn single_slice(&self, ordinal: usize) -> Result<TransformParams> {
        let o = *self.per_slice_offsets.get(ordinal).ok_or_else(|| {
            Error::ParameterBinding(format!("slice ordinal {ordinal} out of range"))
        })?;
        Ok(TransformParams { per_slice_offsets: vec![o], ..self.clone() })
    }
}

/// Trilinear interpolation at centered coordinate `p`; voxels outside the grid read as 0.
#[inline]
pub fn trilinear_sample<T: Voxel>(vol: &Volume<T>, p: Vec3) -> f64 {
    trilinear_sample_gradient(vol, p).0
}

#[inline]
fn fetch<T: Voxel>(vol: &Volume<T>, ix: isize, iy: isize, iz: isize) -> f64 {
    vol.get_checked(ix, iy, iz).map_or(0.0, Voxel::to_f64)
}

/// Trilinear value and its gradient with respect to `p`.
///
/// The cell is chosen with `floor`, so on a cell boundary the gradient is the
/// derivative of the cell on the upper side of that boundary.
#[inline]
pub fn trilinear_sample_gradient<T: Voxel>(vol: &Volume<T>, p: Vec3) -> (f64, Vec3) {
    let [nx, ny, nz] = vol.dims;
    let off = vol.center_offset();
    let (x, y, z) = (p[0] + off[0], p[1] + off[1], p[2] + off[2]);
    if !(x >= -1.0 && x < nx as f64 && y >= -1.0 && y < ny as f64 && z >= -1.0 && z < nz as f64) {
        return (0.0, [0.0; 3]);
    }
    let (x0, y0, z0) = (x.floor(), y.floor(), z.floor());
    let (fx, fy, fz) = (x - x0, y - y0, z - z0);
    let (ix, iy, iz) = (x0 as isize, y0 as isize, z0 as isize);

    let c = if ix >= 0 && iy >= 0 && iz >= 0 && (ix as usize) + 1 < nx && (iy as usize) + 1 < ny && (iz as usize) + 1 < nz {
        let base = vol.linear_index(ix as usize, iy as usize, iz as usize);
        let sy = nx;
        let sz = nx * ny;
        let d = &vol.data;
        [
            d[base].to_f64(),
            d[base + 1].to_f64(),
            d[base + sy].to_f64(),
            d[base + sy + 1].to_f64(),
            d[base + sz].to_f64(),
            d[base + sz + 1].to_f64(),
            d[base + sz + sy].to_f64(),
            d[base + sz + sy + 1].to_f64(),
        ]
    } else {
        [
            fetch(vol, ix, iy, iz),
            fetch(vol, ix + 1, iy, iz),
            fetch(vol, ix, iy + 1, iz),
            fetch(vol, ix + 1, iy + 1, iz),
            fetch(vol, ix, iy, iz + 1),
            fetch(vol, ix + 1, iy, iz + 1),
            fetch(vol, ix, iy + 1, iz + 1),
            fetch(vol, ix + 1, iy + 1, iz + 1),
        ]
    };
    let [c000, c100, c010, c110, c001, c101, c011, c111] = c;
    if c000 == c100 && c000 == c010 && c000 == c110 && c000 == c001 && c000 == c101 && c000 == c011 && c000 == c111 {
        return (c000, [0.0; 3]);
    }

    // interpolate along x first
    let c00 = c000 + fx * (c100 - c000);
    let c10 = c010 + fx * (c110 - c010);
    let c01 = c001 + fx * (c101 - c001);
    let c11 = c011 + fx * (c111 - c011);
    let c0 = c00 + fy * (c10 - c00);
    let c1 = c01 + fy * (c11 - c01);
    let value = c0 + fz * (c1 - c0);

    let dx00 = c100 - c000;
    let dx10 = c110 - c010;
    let dx01 = c101 - c001;
    let dx11 = c111 - c011;
    let dx0 = dx00 + fy * (dx10 - dx00);
    let dx1 = dx01 + fy * (dx11 - dx01);
    let gx = dx0 + fz * (dx1 - dx0);
    let gy = (c10 - c00) + fz * ((c11 - c01) - (c10 - c00));
    let gz = c1 - c0;
    (value, [gx, gy, gz])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (0..3).all(|k| (a[k] - b[k]).abs() < tol)
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = rotation_matrix(0.0, 0.0, 0.0);
        assert_eq!(r, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn half_turn_about_x() {
        let r = rotation_matrix(PI, 0.0, 0.0);
        let expect = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        for i in 0..3 {
            assert!(close(r[i], expect[i], 1e-15));
        }
    }

    #[test]
    fn euler_round_trip() {
        let (rx, ry, rz) = (0.3, -0.2, 1.1);
        let (a, b, c) = euler_from_matrix(&rotation_matrix(rx, ry, rz));
        assert!((a - rx).abs() < 1e-12 && (b - ry).abs() < 1e-12 && (c - rz).abs() < 1e-12);
    }

    #[test]
    fn identity_transform_arithmetic() {
        let stack = MaskStack::sequential(vec![Mask2::zeros(3, 3).unwrap(); 3]).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 4.0, 0.0);
        assert_eq!(theta.transform_point([10.0, 20.0], 2).unwrap(), [10.0, 20.0, 8.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let stack = MaskStack::sequential(vec![Mask2::zeros(3, 3).unwrap()]).unwrap();
        let mut theta = TransformParams::for_stack(&stack, 1.0, 0.0, 0.0);
        theta.rotation_z = FRAC_PI_2;
        assert!(close(theta.transform_point([1.0, 0.0], 0).unwrap(), [0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn out_of_range_ordinal_is_binding_error() {
        let stack = MaskStack::sequential(vec![Mask2::zeros(3, 3).unwrap()]).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 1.0, 0.0);
        assert!(matches!(theta.transform_point([0.0, 0.0], 1), Err(Error::ParameterBinding(_))));
    }

    #[test]
    fn project_inverts_transform() {
        let stack = MaskStack::sequential(vec![Mask2::zeros(3, 3).unwrap(); 4]).unwrap();
        let mut theta = TransformParams::for_stack(&stack, 1.3, 3.5, -2.0);
        theta.rotation_x = 0.2;
        theta.rotation_y = -0.1;
        theta.rotation_z = 0.7;
        theta.per_slice_offsets[2].offset_x = 1.5;
        let p = theta.transform_point([4.0, -7.0], 2).unwrap();
        let c = theta.project_to_slice(p, 2).unwrap();
        assert!((c[0] - 4.0).abs() < 1e-12 && (c[1] + 7.0).abs() < 1e-12);
    }

    #[test]
    fn sample_at_voxel_center_returns_voxel() {
        let vol = Volume::from_fn([4, 5, 6], 1.0, |x, y, z| (x + 10 * y + 100 * z) as f32).unwrap();
        let p = vol.index_to_centered([2.0, 3.0, 1.0]);
        assert_eq!(trilinear_sample(&vol, p), 132.0);
    }

    #[test]
    fn sample_midway_is_half() {
        let vol = Volume::from_fn([2, 1, 1], 1.0, |x, _, _| x as u8).unwrap();
        assert_eq!(trilinear_sample(&vol, [0.0, 0.0, 0.0]), 0.5);
    }

    #[test]
    fn far_outside_is_zero() {
        let vol = BinaryVolume::filled([3, 3, 3], 1.0, 1).unwrap();
        assert_eq!(trilinear_sample(&vol, [10.0, 0.0, 0.0]), 0.0);
        // half a voxel past the last center blends with the zero outside
        assert!((trilinear_sample(&vol, [1.5, 0.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_and_linear_gradients() {
        let c = ScalarVolume::filled([5, 5, 5], 1.0, 3.0).unwrap();
        assert_eq!(trilinear_sample_gradient(&c, [0.3, -0.2, 0.1]).1, [0.0; 3]);
        let lin = Volume::from_fn([6, 6, 6], 1.0, |x, _, _| x as f32).unwrap();
        let (_, g) = trilinear_sample_gradient(&lin, [0.37, -0.81, 0.44]);
        assert!(close(g, [1.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn binary_volume_rejects_non_binary() {
        assert!(BinaryVolume::new([1, 1, 2], 1.0, vec![0, 2]).is_err());
        assert!(ScalarVolume::new([1, 1, 2], 0.0, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn stack_requires_increasing_indices_and_equal_sizes() {
        let m = Mask2::zeros(2, 2).unwrap();
        assert!(MaskStack::new(vec![m.clone(), m.clone()], vec![1, 1]).is_err());
        assert!(MaskStack::new(vec![m, Mask2::zeros(3, 2).unwrap()], vec![0, 1]).is_err());
    }
}
