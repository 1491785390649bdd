//! CT segmentation: averaged Otsu thresholding followed by closing, largest
//! component selection and hole filling. The binary morphology here is shared
//! by 3D volumes and 2D masks through [`BinaryGrid`].

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BinaryVolume, Mask2, ScalarVolume, Volume};

pub const HISTOGRAM_BINS: usize = 256;

/// Neighborhood used for connected components and hole filling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// 6-connected in 3D, 4-connected in 2D.
    #[default]
    Face,
    /// 26-connected in 3D, 8-connected in 2D.
    Full,
}

/// Binary images that the morphology operators accept. 2D masks are treated
/// as grids with a single z layer.
pub trait BinaryGrid: Sized {
    fn grid_dims(&self) -> [usize; 3];
    fn grid_data(&self) -> &[u8];
    fn with_data(&self, data: Vec<u8>) -> Self;
}

impl BinaryGrid for BinaryVolume {
    fn grid_dims(&self) -> [usize; 3] {
        self.dims()
    }
    fn grid_data(&self) -> &[u8] {
        self.data()
    }
    fn with_data(&self, data: Vec<u8>) -> Self {
        Volume::new(self.dims(), self.voxel_size(), data).expect("morphology preserves shape and binarity")
    }
}

impl BinaryGrid for Mask2 {
    fn grid_dims(&self) -> [usize; 3] {
        [self.width(), self.height(), 1]
    }
    fn grid_data(&self) -> &[u8] {
        self.data()
    }
    fn with_data(&self, data: Vec<u8>) -> Self {
        Mask2::new(self.width(), self.height(), data).expect("morphology preserves shape and binarity")
    }
}

/// Otsu threshold on a histogram. Returns the level `t` maximizing the
/// between-class variance of `{levels <= t}` vs `{levels > t}`; the lowest
/// maximizing level wins ties.
pub fn otsu_threshold(histogram: &[u64]) -> Result<usize> {
    if histogram.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::NoBimodalStructure);
    }
    let total: f64 = histogram.iter().map(|&c| c as f64).sum();
    let total_mean: f64 = histogram.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &c) in histogram.iter().enumerate().take(histogram.len() - 1) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (total_mean - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best.0 {
            best = (var, t);
        }
    }
    Ok(best.1)
}

/// 256-bin histogram over the volume's own min..max range, with the bin width.
pub fn intensity_histogram(vol: &ScalarVolume) -> (Vec<u64>, f64, f64) {
    let (lo, hi) = vol.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut hist = vec![0u64; HISTOGRAM_BINS];
    for &v in vol.data() {
        let bin = if width > 0.0 {
            (((v as f64 - lo) / width) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        hist[bin] += 1;
    }
    (hist, lo, width)
}

/// Otsu threshold of one volume in intensity units: the upper edge of the
/// winning bin, so `binarize` keeps exactly the bins above it.
pub fn volume_otsu(vol: &ScalarVolume) -> Result<f64> {
    let (hist, lo, width) = intensity_histogram(vol);
    let level = otsu_threshold(&hist)?;
    Ok(lo + (level + 1) as f64 * width)
}

/// Mean of the per-volume Otsu thresholds.
pub fn average_otsu(volumes: &[ScalarVolume]) -> Result<f64> {
    if volumes.is_empty() {
        return Err(Error::InvalidInput("average Otsu needs at least one volume".into()));
    }
    let thresholds = volumes.iter().map(volume_otsu).collect::<Result<Vec<_>>>()?;
    Ok(thresholds.iter().sum::<f64>() / thresholds.len() as f64)
}

pub fn binarize(vol: &ScalarVolume, threshold: f64) -> BinaryVolume {
    vol.map(|v| u8::from(v as f64 >= threshold)).expect("same shape")
}

/// Box dilation (`dilate = true`) or erosion along one axis, radius `r`,
/// reading `outside` beyond the data.
fn box_pass_axis(dims: [usize; 3], src: &[u8], axis: usize, r: usize, dilate: bool) -> Vec<u8> {
    if r == 0 {
        return src.to_vec();
    }
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let n = dims[axis];
    let mut out = vec![0u8; src.len()];
    // lines along `axis` are independent
    let line_starts: Vec<usize> = (0..src.len()).filter(|&i| (i / stride) % n == 0).collect();
    let lines: Vec<(usize, Vec<u8>)> = line_starts
        .par_iter()
        .map(|&start| {
            let mut line = vec![0u8; n];
            // prefix count of ones for O(1) window queries
            let mut prefix = vec![0usize; n + 1];
            for k in 0..n {
                prefix[k + 1] = prefix[k] + src[start + k * stride] as usize;
            }
            for (k, cell) in line.iter_mut().enumerate() {
                let lo = k.saturating_sub(r);
                let hi = (k + r + 1).min(n);
                let ones = prefix[hi] - prefix[lo];
                *cell = if dilate {
                    u8::from(ones > 0)
                } else {
                    // window positions outside the grid count as zeros
                    u8::from(ones == 2 * r + 1)
                };
            }
            (start, line)
        })
        .collect();
    for (start, line) in lines {
        for (k, v) in line.into_iter().enumerate() {
            out[start + k * stride] = v;
        }
    }
    out
}

fn radii_for(dims: [usize; 3], radius: usize) -> [usize; 3] {
    [radius, radius, if dims[2] == 1 { 0 } else { radius }]
}

fn pad(dims: [usize; 3], data: &[u8], r: [usize; 3]) -> ([usize; 3], Vec<u8>) {
    let pd = [dims[0] + 2 * r[0], dims[1] + 2 * r[1], dims[2] + 2 * r[2]];
    let mut out = vec![0u8; pd[0] * pd[1] * pd[2]];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            let src = dims[0] * (y + dims[1] * z);
            let dst = r[0] + pd[0] * ((y + r[1]) + pd[1] * (z + r[2]));
            out[dst..dst + dims[0]].copy_from_slice(&data[src..src + dims[0]]);
        }
    }
    (pd, out)
}

fn crop(pd: [usize; 3], data: &[u8], dims: [usize; 3], r: [usize; 3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            let src = r[0] + pd[0] * ((y + r[1]) + pd[1] * (z + r[2]));
            out.extend_from_slice(&data[src..src + dims[0]]);
        }
    }
    out
}

/// Morphological closing (box dilation then box erosion) with a cubic/square
/// structuring element of side `2 * radius + 1`. The result equals closing on
/// an unbounded zero background, restricted to the grid.
pub fn morph_close<G: BinaryGrid>(mask: &G, radius: usize) -> Result<G> {
    if radius == 0 {
        return Err(Error::InvalidInput("closing radius must be at least 1".into()));
    }
    let dims = mask.grid_dims();
    let r = radii_for(dims, radius);
    // pad by 2r: dilation output needs r beyond the data, erosion reads r beyond that
    let r2 = [2 * r[0], 2 * r[1], 2 * r[2]];
    let (pd, mut work) = pad(dims, mask.grid_data(), r2);
    for axis in 0..3 {
        work = box_pass_axis(pd, &work, axis, r[axis], true);
    }
    for axis in 0..3 {
        work = box_pass_axis(pd, &work, axis, r[axis], false);
    }
    Ok(mask.with_data(crop(pd, &work, dims, r2)))
}

fn neighbor_offsets(dims: [usize; 3], conn: Connectivity) -> Vec<[isize; 3]> {
    let zr: isize = if dims[2] == 1 { 0 } else { 1 };
    let mut out = Vec::new();
    for dz in -zr..=zr {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let nonzero = (dx != 0) as u8 + (dy != 0) as u8 + (dz != 0) as u8;
                let keep = match conn {
                    Connectivity::Face => nonzero == 1,
                    Connectivity::Full => nonzero >= 1,
                };
                if keep {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Breadth-first flood fill over voxels whose value equals `value`, starting
/// from `seeds`. Marks visited voxels in `visited` and returns how many were reached.
fn flood(dims: [usize; 3], data: &[u8], value: u8, seeds: &[usize], offsets: &[[isize; 3]], visited: &mut [bool]) -> usize {
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if data[s] == value && !visited[s] {
            visited[s] = true;
            queue.push_back(s);
        }
    }
    let mut count = 0;
    let (nx, ny) = (dims[0], dims[1]);
    while let Some(i) = queue.pop_front() {
        count += 1;
        let x = (i % nx) as isize;
        let y = ((i / nx) % ny) as isize;
        let z = (i / (nx * ny)) as isize;
        for o in offsets {
            let (xx, yy, zz) = (x + o[0], y + o[1], z + o[2]);
            if xx < 0 || yy < 0 || zz < 0 || xx as usize >= nx || yy as usize >= ny || zz as usize >= dims[2] {
                continue;
            }
            let j = xx as usize + nx * (yy as usize + ny * zz as usize);
            if !visited[j] && data[j] == value {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    count
}

/// Sizes of the connected components of 1-voxels, as `(seed linear index, size)`
/// in scan order of their first voxel.
pub fn component_sizes<G: BinaryGrid>(mask: &G, conn: Connectivity) -> Vec<(usize, usize)> {
    let dims = mask.grid_dims();
    let data = mask.grid_data();
    let offsets = neighbor_offsets(dims, conn);
    let mut visited = vec![false; data.len()];
    let mut out = Vec::new();
    for i in 0..data.len() {
        if data[i] == 1 && !visited[i] {
            let size = flood(dims, data, 1, &[i], &offsets, &mut visited);
            out.push((i, size));
        }
    }
    out
}

/// Keeps only the largest connected component; ties go to the component whose
/// first voxel has the lowest linear index.
pub fn largest_component<G: BinaryGrid>(mask: &G, conn: Connectivity) -> G {
    let comps = component_sizes(mask, conn);
    let Some(&(seed, _)) = comps.iter().fold(None, |best: Option<&(usize, usize)>, c| match best {
        Some(b) if b.1 >= c.1 => Some(b),
        _ => Some(c),
    }) else {
        return mask.with_data(mask.grid_data().to_vec());
    };
    let dims = mask.grid_dims();
    let data = mask.grid_data();
    let mut visited = vec![false; data.len()];
    flood(dims, data, 1, &[seed], &neighbor_offsets(dims, conn), &mut visited);
    mask.with_data(visited.iter().map(|&v| u8::from(v)).collect())
}

fn border_indices(dims: [usize; 3]) -> Vec<usize> {
    let [nx, ny, nz] = dims;
    let flat = nz == 1;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let on_border = x == 0 || y == 0 || x == nx - 1 || y == ny - 1 || (!flat && (z == 0 || z == nz - 1));
                if on_border {
                    out.push(x + nx * (y + ny * z));
                }
            }
        }
    }
    out
}

/// Sets every 0-region that is not connected to the grid border to 1.
pub fn fill_holes<G: BinaryGrid>(mask: &G, conn: Connectivity) -> G {
    let dims = mask.grid_dims();
    let data = mask.grid_data();
    let mut reached = vec![false; data.len()];
    flood(dims, data, 0, &border_indices(dims), &neighbor_offsets(dims, conn), &mut reached);
    mask.with_data(data.iter().zip(&reached).map(|(&v, &r)| u8::from(v == 1 || !r)).collect())
}

/// Post-processing parameters of the CT segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub close_radius: usize,
    pub connectivity: Connectivity,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { close_radius: 1, connectivity: Connectivity::Face }
    }
}

/// binarize → close → largest component → fill holes.
pub fn segment_ct(vol: &ScalarVolume, threshold: f64, cfg: &SegmentConfig) -> Result<BinaryVolume> {
    let bin = binarize(vol, threshold);
    let closed = morph_close(&bin, cfg.close_radius)?;
    let largest = largest_component(&closed, cfg.connectivity);
    Ok(fill_holes(&largest, cfg.connectivity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive between-class variance scan, computed from scratch per level.
    fn otsu_oracle(hist: &[u64]) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for t in 0..hist.len() - 1 {
            let w0: f64 = hist[..=t].iter().map(|&c| c as f64).sum();
            let w1: f64 = hist[t + 1..].iter().map(|&c| c as f64).sum();
            if w0 == 0.0 || w1 == 0.0 {
                continue;
            }
            let m0 = hist[..=t].iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / w0;
            let m1 = hist[t + 1..].iter().enumerate().map(|(k, &c)| (k + t + 1) as f64 * c as f64).sum::<f64>() / w1;
            let var = w0 * w1 * (m0 - m1).powi(2);
            if var > best.0 * (1.0 + 1e-12) {
                best = (var, t);
            }
        }
        best.1
    }

    #[test]
    fn otsu_two_spikes() {
        let mut h = vec![0u64; 256];
        h[10] = 50;
        h[200] = 50;
        let t = otsu_threshold(&h).unwrap();
        assert!((10..200).contains(&t));
        assert_eq!(t, otsu_oracle(&h));
    }

    #[test]
    fn otsu_single_level_is_error() {
        let mut h = vec![0u64; 256];
        h[42] = 1000;
        assert!(matches!(otsu_threshold(&h), Err(Error::NoBimodalStructure)));
    }

    #[test]
    fn otsu_matches_sweep_on_random_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h: Vec<u64> = (0..256).map(|_| if rng.random_bool(0.3) { rng.random_range(0..1000) } else { 0 }).collect();
            if h.iter().filter(|&&c| c > 0).count() < 2 {
                continue;
            }
            assert_eq!(otsu_threshold(&h).unwrap(), otsu_oracle(&h));
        }
    }

    #[test]
    fn average_of_one_and_two() {
        let a = Volume::from_fn([8, 8, 2], 1.0, |x, _, _| if x < 4 { 0.0 } else { 10.0 }).unwrap();
        let b = Volume::from_fn([8, 8, 2], 1.0, |x, _, _| if x < 3 { 5.0 } else { 25.0 }).unwrap();
        let ta = volume_otsu(&a).unwrap();
        let tb = volume_otsu(&b).unwrap();
        assert_eq!(average_otsu(std::slice::from_ref(&a)).unwrap(), ta);
        assert!((average_otsu(&[a, b]).unwrap() - (ta + tb) / 2.0).abs() < 1e-12);
        assert!(average_otsu(&[]).is_err());
    }

    #[test]
    fn binarize_extremes() {
        let v = Volume::from_fn([3, 3, 3], 1.0, |x, y, z| (x + y + z) as f32).unwrap();
        assert!(binarize(&v, -1.0).data().iter().all(|&b| b == 1));
        assert!(binarize(&v, 100.0).data().iter().all(|&b| b == 0));
    }

    #[test]
    fn closing_fills_single_pit() {
        let mut cube = BinaryVolume::from_fn([7, 7, 7], 1.0, |x, y, z| u8::from((1..6).contains(&x) && (1..6).contains(&y) && (1..6).contains(&z))).unwrap();
        let mut d = cube.clone().into_data();
        d[cube.linear_index(3, 3, 3)] = 0;
        let pitted = BinaryVolume::new([7, 7, 7], 1.0, d).unwrap();
        let closed = morph_close(&pitted, 1).unwrap();
        assert_eq!(closed, cube);
        cube = BinaryVolume::filled([4, 4, 4], 1.0, 0).unwrap();
        assert_eq!(morph_close(&cube, 1).unwrap(), cube);
    }

    #[test]
    fn closing_rejects_zero_radius() {
        assert!(morph_close(&Mask2::zeros(3, 3).unwrap(), 0).is_err());
    }

    #[test]
    fn largest_of_two_blobs() {
        let m = Mask2::from_fn(30, 12, |c, r| (c < 10 && r < 10) || (c >= 25 && r < 5 && c < 26)).unwrap();
        let kept = largest_component(&m, Connectivity::Face);
        assert_eq!(kept.area(), 100);
        assert_eq!(largest_component(&kept, Connectivity::Face), kept);
    }

    #[test]
    fn largest_tie_prefers_first_seed() {
        let m = Mask2::from_fn(9, 1, |c, _| c == 1 || c == 7).unwrap();
        let kept = largest_component(&m, Connectivity::Face);
        assert_eq!(kept.data(), &[0, 1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn hollow_shell_becomes_ball() {
        let c = 6.0;
        let shell = BinaryVolume::from_fn([13, 13, 13], 1.0, |x, y, z| {
            let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
            u8::from((3.0..=5.0).contains(&r))
        })
        .unwrap();
        let filled = fill_holes(&shell, Connectivity::Face);
        let ball = BinaryVolume::from_fn([13, 13, 13], 1.0, |x, y, z| {
            let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
            u8::from(r <= 5.0)
        })
        .unwrap();
        assert_eq!(filled, ball);
    }

    #[test]
    fn fill_holes_keeps_open_background() {
        let m = Mask2::from_fn(8, 8, |c, r| (2..6).contains(&c) && (2..6).contains(&r)).unwrap();
        assert_eq!(fill_holes(&m, Connectivity::Face), m);
    }

    #[test]
    fn connectivity_full_joins_diagonals() {
        let m = Mask2::from_fn(4, 4, |c, r| c == r).unwrap();
        assert_eq!(component_sizes(&m, Connectivity::Face).len(), 4);
        assert_eq!(component_sizes(&m, Connectivity::Full).len(), 1);
    }

    #[test]
    fn segment_clean_solid_is_unchanged() {
        let v = Volume::from_fn([10, 10, 10], 1.0, |x, y, z| if (2..8).contains(&x) && (2..8).contains(&y) && (2..8).contains(&z) { 1.0 } else { 0.0 }).unwrap();
        let seg = segment_ct(&v, 0.5, &SegmentConfig::default()).unwrap();
        assert_eq!(seg, binarize(&v, 0.5));
    }

    #[test]
    fn binarize_is_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = Volume::from_fn([6, 6, 6], 1.0, |_, _, _| rng.random::<f32>()).unwrap();
        let lo = binarize(&v, 0.3);
        let hi = binarize(&v, 0.6);
        assert!(lo.data().iter().zip(hi.data()).all(|(&a, &b)| b <= a));
    }
}
