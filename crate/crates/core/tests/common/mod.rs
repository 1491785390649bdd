//! Reference implementations shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use slicereg::geom::{Mask2, ScalarVolume, Vec3};

/// Weighted sum over the 8 cell corners, zero outside the grid.
pub fn trilinear_oracle(vol: &ScalarVolume, p: Vec3) -> f64 {
    let off = vol.center_offset();
    let q = [p[0] + off[0], p[1] + off[1], p[2] + off[2]];
    let base = q.map(f64::floor);
    let mut sum = 0.0;
    for corner in 0..8 {
        let d = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = 1.0;
        let mut idx = [0isize; 3];
        for a in 0..3 {
            let f = q[a] - base[a];
            w *= if d[a] == 1 { f } else { 1.0 - f };
            idx[a] = base[a] as isize + d[a] as isize;
        }
        if let Some(v) = vol.get_checked(idx[0], idx[1], idx[2]) {
            sum += w * v as f64;
        }
    }
    sum
}

/// Exhaustive between-class variance sweep.
pub fn otsu_oracle(hist: &[u64]) -> usize {
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    let mut best = (f64::NEG_INFINITY, 0);
    for t in 0..hist.len() - 1 {
        let w0: f64 = hist[..=t].iter().map(|&c| c as f64).sum();
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = hist[..=t].iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / w0;
        let m1 = hist[t + 1..].iter().enumerate().map(|(k, &c)| (k + t + 1) as f64 * c as f64).sum::<f64>() / w1;
        let v = w0 * w1 * (m0 - m1) * (m0 - m1);
        if v > best.0 {
            best = (v, t);
        }
    }
    best.1
}

/// Convex-combination feasibility: is there λ ≥ 0, Σλ = 1, Σλ·v = p?
pub fn lp_contains(points: &[Vec3], p: Vec3) -> bool {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = points.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(vars.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
    for a in 0..3 {
        let expr: Vec<_> = vars.iter().zip(points).map(|(&v, q)| (v, q[a])).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, p[a]);
    }
    lp.solve().is_ok()
}

/// Per-pixel confusion counts.
pub fn counts_oracle(pred: &Mask2, truth: &Mask2) -> [u64; 4] {
    let mut c = [0u64; 4];
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        c[match (p, t) {
            (1, 1) => 0,
            (0, 0) => 1,
            (1, 0) => 2,
            _ => 3,
        }] += 1;
    }
    c
}
