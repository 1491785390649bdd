//! Joint registration: mean squared error between the photo masks and the
//! trilinearly sampled CT mask, its exact gradient, and momentum descent with
//! a windowed stopping rule. Also the per-slice ("separate") variant.
//!
//! Parameter vector layout used by [`ParamLayout`]:
//! `[rotation_x, rotation_y, rotation_z, scaling, spacing, offset_z, x_0, y_0, x_1, y_1, ...]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    column, dot, rotation_partials, trilinear_sample_gradient, BinaryVolume, MaskStack, ScalarVolume, TransformParams, Volume, Voxel,
};

/// Sampled rows per reduction chunk. Fixed so the summation tree never depends
/// on the thread count.
const ROWS_PER_CHUNK: usize = 8;

pub const N_SHARED: usize = 6;

/// Flattening of [`TransformParams`] to a parameter vector and back.
pub struct ParamLayout;

impl ParamLayout {
    pub fn to_vec(theta: &TransformParams) -> Vec<f64> {
        let mut v = vec![
            theta.rotation_x,
            theta.rotation_y,
            theta.rotation_z,
            theta.scaling,
            theta.spacing,
            theta.offset_z,
        ];
        for o in &theta.per_slice_offsets {
            v.push(o.offset_x);
            v.push(o.offset_y);
        }
        v
    }

    /// Writes `v` into a copy of `template` (slice indices come from the template).
    pub fn from_vec(template: &TransformParams, v: &[f64]) -> TransformParams {
        let mut out = template.clone();
        out.rotation_x = v[0];
        out.rotation_y = v[1];
        out.rotation_z = v[2];
        out.scaling = v[3];
        out.spacing = v[4];
        out.offset_z = v[5];
        for (k, o) in out.per_slice_offsets.iter_mut().enumerate() {
            o.offset_x = v[N_SHARED + 2 * k];
            o.offset_y = v[N_SHARED + 2 * k + 1];
        }
        out
    }

    pub fn name(k: usize) -> String {
        match k {
            0 => "rotation_x".into(),
            1 => "rotation_y".into(),
            2 => "rotation_z".into(),
            3 => "scaling".into(),
            4 => "spacing".into(),
            5 => "offset_z".into(),
            _ => {
                let s = (k - N_SHARED) / 2;
                if (k - N_SHARED) % 2 == 0 {
                    format!("offset_x[{s}]")
                } else {
                    format!("offset_y[{s}]")
                }
            }
        }
    }
}

/// Per-group learning rates. The offset rate applies to the gradient of a
/// single slice's own mean error, i.e. it is multiplied by the slice count
/// internally because the joint cost averages over all slices.
///
/// Defaults are about 0.3 over the cost curvature of each group on a
/// 128³ phantom, so a step lands near the bottom of a quadratic well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub rotation: f64,
    pub scaling: f64,
    pub spacing: f64,
    pub offset_z: f64,
    pub offset_xy: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            rotation: 0.3,
            scaling: 0.008,
            spacing: 0.45,
            offset_z: 21.0,
            offset_xy: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rates: LearningRates,
    pub momentum: f64,
    pub stop_window: usize,
    pub stop_tol: f64,
    pub max_iterations: usize,
    /// Sample every `stride`-th pixel in both directions, identically on all slices.
    pub stride: usize,
    /// Box-blur radius applied to the CT mask before sampling; 0 disables it.
    pub smoothing_radius: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rates: LearningRates::default(),
            momentum: 0.75,
            stop_window: 1000,
            stop_tol: 1e-5,
            max_iterations: 200_000,
            stride: 1,
            smoothing_radius: 0,
        }
    }
}

impl OptimConfig {
    /// Defaults for single-slice registration. A single slice's cost is
    /// rougher than a stack average, so full joint rates keep it cycling
    /// above the stop tolerance; half rates settle.
    pub fn separate_default() -> Self {
        let mut cfg = Self::default();
        let lr = &mut cfg.learning_rates;
        for r in [&mut lr.rotation, &mut lr.scaling, &mut lr.spacing, &mut lr.offset_z, &mut lr.offset_xy] {
            *r *= 0.5;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let lr = &self.learning_rates;
        let lrs = [lr.rotation, lr.scaling, lr.spacing, lr.offset_z, lr.offset_xy];
        if lrs.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("learning rates must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.stop_window == 0 || self.stride == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidInput("stop_window, stride and max_iterations must be at least 1".into()));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidInput("stop_tol must be positive".into()));
        }
        Ok(())
    }

    /// Per-parameter learning rates for a stack of `n_slices`.
    pub fn rate_vector(&self, n_slices: usize) -> Vec<f64> {
        let lr = &self.learning_rates;
        let mut v = vec![lr.rotation, lr.rotation, lr.rotation, lr.scaling, lr.spacing, lr.offset_z];
        v.extend(std::iter::repeat_n(lr.offset_xy * n_slices as f64, 2 * n_slices));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    /// Cost at the start of every executed iteration.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub final_theta: TransformParams,
    /// Iteration at which a non-finite value appeared.
    pub diverged_at: Option<usize>,
}

impl OptimTrace {
    pub fn final_cost(&self) -> Option<f64> {
        self.costs.last().copied()
    }

    /// CSV with header `iteration,cost`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,cost\n");
        for (i, c) in self.costs.iter().enumerate() {
            s.push_str(&format!("{i},{c:e}\n"));
        }
        s
    }
}

/// A differentiable objective over a flat parameter vector.
pub trait Objective {
    fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>);
}

/// Outcome of [`momentum_descent`].
#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub params: Vec<f64>,
    pub costs: Vec<f64>,
    pub stop_reason: StopReason,
    pub diverged_at: Option<(usize, usize)>,
}

fn window_range(costs: &[f64], window: usize) -> Option<f64> {
    if costs.len() < window {
        return None;
    }
    let tail = &costs[costs.len() - window..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    Some(hi - lo)
}

/// Velocity-form momentum descent `v ← m·v − lr ⊙ ∇f`, `x ← x + v`.
///
/// Stops once the costs of the last `stop_window` iterations lie within
/// `stop_tol` of each other (returning the parameters at which the last cost
/// was evaluated), or after `max_iterations` evaluations. A non-finite value
/// returns the last finite parameters and reports `(iteration, parameter)`;
/// parameter `usize::MAX` stands for the cost itself.
pub fn momentum_descent<O: Objective>(obj: &O, start: &[f64], rates: &[f64], cfg: &OptimConfig) -> DescentResult {
    let mut x = start.to_vec();
    let mut vel = vec![0.0; x.len()];
    let mut costs = Vec::new();
    for iter in 0..cfg.max_iterations {
        let (cost, grad) = obj.value_and_gradient(&x);
        if !cost.is_finite() {
            return DescentResult { params: x, costs, stop_reason: StopReason::Diverged, diverged_at: Some((iter, usize::MAX)) };
        }
        if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
            return DescentResult { params: x, costs, stop_reason: StopReason::Diverged, diverged_at: Some((iter, k)) };
        }
        costs.push(cost);
        if window_range(&costs, cfg.stop_window).is_some_and(|r| r < cfg.stop_tol) {
            return DescentResult { params: x, costs, stop_reason: StopReason::Converged, diverged_at: None };
        }
        let mut next = x.clone();
        for k in 0..x.len() {
            vel[k] = cfg.momentum * vel[k] - rates[k] * grad[k];
            next[k] += vel[k];
        }
        if let Some(k) = next.iter().position(|v| !v.is_finite()) {
            return DescentResult { params: x, costs, stop_reason: StopReason::Diverged, diverged_at: Some((iter, k)) };
        }
        x = next;
    }
    DescentResult { params: x, costs, stop_reason: StopReason::MaxIter, diverged_at: None }
}

/// Separable box blur with zero padding, repeated `passes` times.
fn box_blur(vol: &ScalarVolume, radius: usize, passes: usize) -> ScalarVolume {
    let dims = vol.dims();
    let mut data: Vec<f32> = vol.data().to_vec();
    let norm = 1.0 / (2 * radius + 1) as f32;
    for _ in 0..passes {
        for axis in 0..3 {
            let stride = [1, dims[0], dims[0] * dims[1]][axis];
            let n = dims[axis];
            let mut out = vec![0f32; data.len()];
            for start in (0..data.len()).filter(|&i| (i / stride) % n == 0) {
                for k in 0..n {
                    let lo = k.saturating_sub(radius);
                    let hi = (k + radius).min(n - 1);
                    let s: f32 = (lo..=hi).map(|j| data[start + j * stride]).sum();
                    out[start + k * stride] = s * norm;
                }
            }
            data = out;
        }
    }
    Volume::new(dims, vol.voxel_size(), data).expect("blur keeps shape")
}

/// Running sums for one chunk of pixels.
#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    sq: f64,
    // Σ w·∇f, Σ w·∇f·u, Σ w·∇f·v with w = −2·residual
    g: [f64; 3],
    gu: [f64; 3],
    gv: [f64; 3],
}

impl Partial {
    fn add(&mut self, o: &Partial) {
        self.sq += o.sq;
        for k in 0..3 {
            self.g[k] += o.g[k];
            self.gu[k] += o.gu[k];
            self.gv[k] += o.gv[k];
        }
    }
}

/// Sampled CT values: the binary mask itself, or its blurred version.
enum Field {
    Binary(BinaryVolume),
    Smooth(ScalarVolume),
}

/// MSE cost between a mask stack and a CT field, ready for repeated evaluation.
pub struct MseObjective<'a> {
    stack: &'a MaskStack,
    field: Field,
    template: TransformParams,
    stride: usize,
    sample_cols: Vec<usize>,
    sample_rows: Vec<usize>,
}

impl<'a> MseObjective<'a> {
    pub fn new(stack: &'a MaskStack, ct_mask: &BinaryVolume, template: &TransformParams, stride: usize, smoothing_radius: usize) -> Result<Self> {
        template.check_bound(stack)?;
        if stride == 0 {
            return Err(Error::InvalidInput("stride must be at least 1".into()));
        }
        let field = if smoothing_radius > 0 {
            Field::Smooth(box_blur(&ct_mask.to_scalar(), smoothing_radius, 2))
        } else {
            Field::Binary(ct_mask.clone())
        };
        Ok(Self {
            stack,
            field,
            template: template.clone(),
            stride,
            sample_cols: (0..stack.width()).step_by(stride).collect(),
            sample_rows: (0..stack.height()).step_by(stride).collect(),
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn sample_count(&self) -> usize {
        self.sample_cols.len() * self.sample_rows.len() * self.stack.len()
    }

    fn chunk(&self, theta: &TransformParams, rot: &[[f64; 3]; 3], slice: usize, rows: &[usize], with_grad: bool) -> Partial {
        match &self.field {
            Field::Binary(v) => self.chunk_in(v, theta, rot, slice, rows, with_grad),
            Field::Smooth(v) => self.chunk_in(v, theta, rot, slice, rows, with_grad),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn chunk_in<T: Voxel>(&self, field: &Volume<T>, theta: &TransformParams, rot: &[[f64; 3]; 3], slice: usize, rows: &[usize], with_grad: bool) -> Partial {
        let mask = &self.stack.masks()[slice];
        let t = theta.slice_translation(slice).expect("bound");
        let s = theta.scaling;
        let ex = column(rot, 0);
        let ey = column(rot, 1);
        let base = [
            rot[0][0] * t[0] + rot[0][1] * t[1] + rot[0][2] * t[2],
            rot[1][0] * t[0] + rot[1][1] * t[1] + rot[1][2] * t[2],
            rot[2][0] * t[0] + rot[2][1] * t[1] + rot[2][2] * t[2],
        ];
        let mut acc = Partial::default();
        for &row in rows {
            for &col in &self.sample_cols {
                let [u, v] = mask.centered(col, row);
                let (su, sv) = (s * u, s * v);
                let p = [
                    base[0] + su * ex[0] + sv * ey[0],
                    base[1] + su * ex[1] + sv * ey[1],
                    base[2] + su * ex[2] + sv * ey[2],
                ];
                let (f, grad) = trilinear_sample_gradient(field, p);
                let r = mask.get(col, row) as f64 - f;
                acc.sq += r * r;
                if with_grad && r != 0.0 && grad != [0.0; 3] {
                    let w = -2.0 * r;
                    for k in 0..3 {
                        let wg = w * grad[k];
                        acc.g[k] += wg;
                        acc.gu[k] += wg * u;
                        acc.gv[k] += wg * v;
                    }
                }
            }
        }
        acc
    }

    /// Per-slice partial sums, reduced in a fixed order.
    fn partials(&self, theta: &TransformParams, with_grad: bool) -> Vec<Partial> {
        let rot = theta.rotation();
        let chunks: Vec<(usize, &[usize])> = (0..self.stack.len())
            .flat_map(|k| self.sample_rows.chunks(ROWS_PER_CHUNK).map(move |rows| (k, rows)))
            .collect();
        let parts: Vec<(usize, Partial)> = chunks
            .par_iter()
            .map(|&(k, rows)| (k, self.chunk(theta, &rot, k, rows, with_grad)))
            .collect();
        let mut per_slice = vec![Partial::default(); self.stack.len()];
        for (k, p) in &parts {
            per_slice[*k].add(p);
        }
        per_slice
    }

    pub fn cost(&self, theta: &TransformParams) -> f64 {
        let total: f64 = self.partials(theta, false).iter().map(|p| p.sq).sum();
        total / self.sample_count() as f64
    }

    /// Cost and gradient in [`ParamLayout`] order.
    pub fn cost_gradient(&self, theta: &TransformParams) -> (f64, Vec<f64>) {
        let parts = self.partials(theta, true);
        let n = self.sample_count() as f64;
        let rot = theta.rotation();
        let d_rot = rotation_partials(theta.rotation_x, theta.rotation_y, theta.rotation_z);
        let (ex, ey, ez) = (column(&rot, 0), column(&rot, 1), column(&rot, 2));
        let s = theta.scaling;
        let mut grad = vec![0.0; N_SHARED + 2 * self.stack.len()];
        let mut sq = 0.0;
        for (k, p) in parts.iter().enumerate() {
            sq += p.sq;
            let t = theta.slice_translation(k).expect("bound");
            // M = Σ w ∇f qᵀ with q = t + s·(u, v, 0)
            let mut m = [[0.0; 3]; 3];
            for r in 0..3 {
                m[r][0] = p.g[r] * t[0] + s * p.gu[r];
                m[r][1] = p.g[r] * t[1] + s * p.gv[r];
                m[r][2] = p.g[r] * t[2];
            }
            for a in 0..3 {
                grad[a] += (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| d_rot[a][r][c] * m[r][c]).sum::<f64>();
            }
            grad[3] += dot(ex, p.gu) + dot(ey, p.gv);
            let gz = dot(ez, p.g);
            grad[4] += gz * theta.per_slice_offsets[k].index as f64;
            grad[5] += gz;
            grad[N_SHARED + 2 * k] = dot(ex, p.g) / n;
            grad[N_SHARED + 2 * k + 1] = dot(ey, p.g) / n;
        }
        for g in grad.iter_mut().take(N_SHARED) {
            *g /= n;
        }
        (sq / n, grad)
    }
}

impl Objective for MseObjective<'_> {
    fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let theta = ParamLayout::from_vec(&self.template, params);
        if theta.validate().is_err() {
            return (f64::NAN, vec![f64::NAN; params.len()]);
        }
        self.cost_gradient(&theta)
    }
}

/// Mean over all (strided) photo pixels of `(mask − CT(T(p)))²`.
pub fn mse_cost(stack: &MaskStack, ct_mask: &BinaryVolume, theta: &TransformParams, stride: usize) -> Result<f64> {
    Ok(MseObjective::new(stack, ct_mask, theta, stride, 0)?.cost(theta))
}

pub fn mse_cost_gradient(stack: &MaskStack, ct_mask: &BinaryVolume, theta: &TransformParams, stride: usize) -> Result<(f64, Vec<f64>)> {
    Ok(MseObjective::new(stack, ct_mask, theta, stride, 0)?.cost_gradient(theta))
}

fn run(stack: &MaskStack, ct_mask: &BinaryVolume, theta0: &TransformParams, cfg: &OptimConfig) -> Result<OptimTrace> {
    cfg.validate()?;
    theta0.validate()?;
    let obj = MseObjective::new(stack, ct_mask, theta0, cfg.stride, cfg.smoothing_radius)?;
    let res = momentum_descent(&obj, &ParamLayout::to_vec(theta0), &cfg.rate_vector(stack.len()), cfg);
    let iterations = res.costs.len();
    let diverged_at = res.diverged_at.map(|(it, k)| {
        let what = if k == usize::MAX { "cost".to_string() } else { ParamLayout::name(k) };
        log::warn!("registration diverged at iteration {it}: non-finite {what}");
        it
    });
    Ok(OptimTrace {
        costs: res.costs,
        iterations,
        stop_reason: res.stop_reason,
        final_theta: ParamLayout::from_vec(theta0, &res.params),
        diverged_at,
    })
}

/// Joint optimization of the shared parameters and all per-slice offsets.
pub fn optimize_joint(stack: &MaskStack, ct_mask: &BinaryVolume, theta0: &TransformParams, cfg: &OptimConfig) -> Result<OptimTrace> {
    run(stack, ct_mask, theta0, cfg)
}

/// Converts a diverged trace into an error.
pub fn require_finite(trace: &OptimTrace) -> Result<()> {
    match trace.diverged_at {
        Some(iteration) => Err(Error::Diverged { iteration, what: "cost or parameter".into() }),
        None => Ok(()),
    }
}

/// Registers every slice on its own: rotations, scaling, offset_z and the
/// in-plane offsets are free per slice, spacing stays at `theta0.spacing`.
/// Returns one single-slice trace per slice, in stack order.
pub fn optimize_separate(stack: &MaskStack, ct_mask: &BinaryVolume, theta0: &TransformParams, cfg: &OptimConfig) -> Result<Vec<OptimTrace>> {
    theta0.check_bound(stack)?;
    let mut frozen = cfg.clone();
    frozen.learning_rates.spacing = 0.0;
    (0..stack.len())
        .map(|k| {
            let sub = stack.select(&[k])?;
            run(&sub, ct_mask, &theta0.single_slice(k)?, &frozen)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mask2;

    struct Quadratic {
        center: Vec<f64>,
        weights: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let mut c = 0.0;
            let mut g = vec![0.0; x.len()];
            for k in 0..x.len() {
                let d = x[k] - self.center[k];
                c += self.weights[k] * d * d;
                g[k] = 2.0 * self.weights[k] * d;
            }
            (c, g)
        }
    }

    struct Constant;

    impl Objective for Constant {
        fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
            (0.25, vec![0.0; x.len()])
        }
    }

    #[test]
    fn quadratic_surrogate_converges() {
        let q = Quadratic { center: vec![1.0, -2.0, 0.5], weights: vec![1.0, 3.0, 0.5] };
        let cfg = OptimConfig { stop_window: 50, stop_tol: 1e-16, ..Default::default() };
        let res = momentum_descent(&q, &[0.0, 0.0, 0.0], &[0.1, 0.1, 0.1], &cfg);
        assert_eq!(res.stop_reason, StopReason::Converged);
        for k in 0..3 {
            assert!((res.params[k] - q.center[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_cost_stops_at_window() {
        let cfg = OptimConfig { stop_window: 37, ..Default::default() };
        let res = momentum_descent(&Constant, &[1.0], &[0.1], &cfg);
        assert_eq!(res.stop_reason, StopReason::Converged);
        assert_eq!(res.costs.len(), 37);
    }

    #[test]
    fn exploding_rates_report_divergence() {
        let q = Quadratic { center: vec![0.0], weights: vec![1.0] };
        let cfg = OptimConfig { max_iterations: 100_000, ..Default::default() };
        let res = momentum_descent(&q, &[1.0], &[1e3], &cfg);
        assert_eq!(res.stop_reason, StopReason::Diverged);
        assert!(res.diverged_at.is_some());
    }

    #[test]
    fn layout_round_trip() {
        let stack = MaskStack::new(vec![Mask2::zeros(2, 2).unwrap(); 2], vec![3, 7]).unwrap();
        let mut theta = TransformParams::for_stack(&stack, 1.5, 2.5, -3.0);
        theta.rotation_y = 0.1;
        theta.per_slice_offsets[1].offset_y = 4.0;
        let v = ParamLayout::to_vec(&theta);
        assert_eq!(v.len(), 10);
        assert_eq!(ParamLayout::from_vec(&theta, &v), theta);
        assert_eq!(ParamLayout::name(9), "offset_y[1]");
    }

    #[test]
    fn all_zero_is_zero_cost_and_gradient() {
        let stack = MaskStack::sequential(vec![Mask2::zeros(6, 6).unwrap(); 2]).unwrap();
        let ct = BinaryVolume::filled([8, 8, 8], 1.0, 0).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 1.0, 0.0);
        let (c, g) = mse_cost_gradient(&stack, &ct, &theta, 1).unwrap();
        assert_eq!(c, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_one_pixel_on_empty_ct_costs_one() {
        let stack = MaskStack::sequential(vec![Mask2::new(1, 1, vec![1]).unwrap()]).unwrap();
        let ct = BinaryVolume::filled([4, 4, 4], 1.0, 0).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 1.0, 0.0);
        assert_eq!(mse_cost(&stack, &ct, &theta, 1).unwrap(), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig { stride: 0, ..Default::default() }.validate().is_err());
        assert!(OptimConfig { stop_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(OptimConfig { momentum: -0.1, ..Default::default() }.validate().is_err());
        assert!(OptimConfig::default().validate().is_ok());
    }

    #[test]
    fn blur_preserves_mass_in_interior() {
        let vol = ScalarVolume::filled([9, 9, 9], 1.0, 1.0).unwrap();
        let b = box_blur(&vol, 1, 2);
        assert!((b.get(4, 4, 4) - 1.0).abs() < 1e-6);
        assert!(b.get(0, 0, 0) < 1.0);
    }
}
