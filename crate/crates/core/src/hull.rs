//! Convex hulls and the slice-intersection test.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{cross, dot, norm, scale, sub, Mask2, MaskStack, TransformParams, Vec3};

/// Relative tolerance; absolute ε is this times the bounding-box diagonal.
pub const HULL_REL_EPS: f64 = 1e-9;

/// Points `p` with `normal · p <= offset + eps` are admitted. `normal` is unit length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HullKind {
    Solid,
    /// Coplanar generators: a polygon thickened to ±ε along its plane normal.
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexHull {
    pub facets: Vec<HalfSpace>,
    pub eps: f64,
    pub kind: HullKind,
}

impl ConvexHull {
    pub fn contains(&self, p: Vec3) -> bool {
        point_in_hull(p, self)
    }
}

pub fn point_in_hull(p: Vec3, hull: &ConvexHull) -> bool {
    hull.facets.iter().all(|f| dot(f.normal, p) <= f.offset + hull.eps)
}

fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    norm(sub(hi, lo))
}

struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[Vec3], v: [usize; 3]) -> Self {
        let n = cross(sub(points[v[1]], points[v[0]]), sub(points[v[2]], points[v[0]]));
        let len = norm(n);
        let normal = if len > 0.0 { scale(n, 1.0 / len) } else { [0.0; 3] };
        Face { v, normal, offset: dot(normal, points[v[0]]), outside: Vec::new(), alive: true }
    }

    fn distance(&self, p: Vec3) -> f64 {
        dot(self.normal, p) - self.offset
    }
}

/// Indices of four points spanning a tetrahedron, or how far the input got.
enum Simplex {
    Tetra([usize; 4]),
    Planar([usize; 3]),
    Degenerate,
}

fn initial_simplex(points: &[Vec3], eps: f64) -> Simplex {
    let mut best = (0, 0, -1.0);
    for axis in 0..3 {
        let (mut lo, mut hi) = (0, 0);
        for (i, p) in points.iter().enumerate() {
            if p[axis] < points[lo][axis] {
                lo = i;
            }
            if p[axis] > points[hi][axis] {
                hi = i;
            }
        }
        let d = norm(sub(points[hi], points[lo]));
        if d > best.2 {
            best = (lo, hi, d);
        }
    }
    let (a, b, d) = best;
    if d <= eps {
        return Simplex::Degenerate;
    }
    let ab = sub(points[b], points[a]);
    let (c, dc) = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, norm(cross(ab, sub(*p, points[a]))) / d))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if dc <= eps {
        return Simplex::Degenerate;
    }
    let plane = Face::new(points, [a, b, c]);
    let (e, de) = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, plane.distance(*p).abs()))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if de <= eps {
        return Simplex::Planar([a, b, c]);
    }
    Simplex::Tetra([a, b, c, e])
}

/// Outward half-spaces of the convex hull of `points` (quickhull).
///
/// Fewer than four points, or points without volume, give `DegenerateHull`.
pub fn convex_hull_3d(points: &[Vec3]) -> Result<ConvexHull> {
    if points.len() < 4 {
        return Err(Error::DegenerateHull(format!("{} points, need at least 4", points.len())));
    }
    if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::InvalidInput("hull points must be finite".into()));
    }
    let eps = HULL_REL_EPS * bbox_diagonal(points);
    let [a, b, c, d] = match initial_simplex(points, eps) {
        Simplex::Tetra(t) => t,
        Simplex::Planar(_) => return Err(Error::DegenerateHull("points are coplanar".into())),
        Simplex::Degenerate => return Err(Error::DegenerateHull("points are collinear".into())),
    };

    let mut faces: Vec<Face> = Vec::new();
    let base = Face::new(points, [a, b, c]);
    let tri = if base.distance(points[d]) > 0.0 { [[a, c, b], [a, b, d], [b, c, d], [c, a, d]] } else { [[a, b, c], [a, d, b], [b, d, c], [c, d, a]] };
    for v in tri {
        faces.push(Face::new(points, v));
    }
    // directed edge (from, to) -> face owning it
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for k in 0..3 {
            edges.insert((face.v[k], face.v[(k + 1) % 3]), f);
        }
    }
    for (i, p) in points.iter().enumerate() {
        if [a, b, c, d].contains(&i) {
            continue;
        }
        if let Some(f) = faces.iter().position(|face| face.distance(*p) > eps) {
            faces[f].outside.push(i);
        }
    }

    let mut stack: Vec<usize> = (0..faces.len()).collect();
    while let Some(f0) = stack.pop() {
        if !faces[f0].alive || faces[f0].outside.is_empty() {
            continue;
        }
        let apex = *faces[f0]
            .outside
            .iter()
            .max_by(|&&i, &&j| faces[f0].distance(points[i]).total_cmp(&faces[f0].distance(points[j])))
            .expect("nonempty");
        let p = points[apex];

        // visible faces, connected to f0
        let mut visible = vec![f0];
        let mut seen = vec![f0];
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for e in 0..3 {
                let (u, w) = (faces[f].v[e], faces[f].v[(e + 1) % 3]);
                let g = edges[&(w, u)];
                if !seen.contains(&g) {
                    seen.push(g);
                    if faces[g].distance(p) > eps {
                        visible.push(g);
                    }
                }
            }
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for &f in &visible {
            for e in 0..3 {
                let (u, w) = (faces[f].v[e], faces[f].v[(e + 1) % 3]);
                if !visible.contains(&edges[&(w, u)]) {
                    horizon.push((u, w));
                }
            }
        }
        let mut orphans: Vec<usize> = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
            for e in 0..3 {
                edges.remove(&(faces[f].v[e], faces[f].v[(e + 1) % 3]));
            }
        }
        let first_new = faces.len();
        for (u, w) in horizon {
            let id = faces.len();
            let face = Face::new(points, [u, w, apex]);
            for k in 0..3 {
                edges.insert((face.v[k], face.v[(k + 1) % 3]), id);
            }
            faces.push(face);
        }
        for i in orphans {
            if i == apex {
                continue;
            }
            if let Some(f) = (first_new..faces.len()).find(|&f| faces[f].distance(points[i]) > eps) {
                faces[f].outside.push(i);
            }
        }
        stack.extend(first_new..faces.len());
    }

    let facets = faces.iter().filter(|f| f.alive).map(|f| HalfSpace { normal: f.normal, offset: f.offset }).collect();
    Ok(ConvexHull { facets, eps, kind: HullKind::Solid })
}

/// Hull of `points`, falling back to a ±ε slab around the planar convex
/// polygon when the points are coplanar. Collinear input stays an error.
pub fn hull_or_slab(points: &[Vec3]) -> Result<ConvexHull> {
    match convex_hull_3d(points) {
        Err(Error::DegenerateHull(_)) if points.len() >= 3 => planar_hull(points),
        other => other,
    }
}

fn planar_hull(points: &[Vec3]) -> Result<ConvexHull> {
    let eps = HULL_REL_EPS * bbox_diagonal(points);
    let [a, b, c] = match initial_simplex(points, eps) {
        Simplex::Planar(t) => t,
        Simplex::Tetra(_) => unreachable!("non-planar input reaches the planar fallback"),
        Simplex::Degenerate => return Err(Error::DegenerateHull("points are collinear".into())),
    };
    let n = Face::new(points, [a, b, c]).normal;
    let e1 = {
        let t = sub(points[b], points[a]);
        scale(t, 1.0 / norm(t))
    };
    let e2 = cross(n, e1);
    let origin = points[a];
    let flat: Vec<[f64; 2]> = points.iter().map(|p| {
        let d = sub(*p, origin);
        [dot(d, e1), dot(d, e2)]
    }).collect();
    let poly = convex_polygon(&flat);

    let offset = dot(n, origin);
    let mut facets = vec![HalfSpace { normal: n, offset }, HalfSpace { normal: scale(n, -1.0), offset: -offset }];
    let m = poly.len();
    for k in 0..m {
        let (p, q) = (poly[k], poly[(k + 1) % m]);
        // counter-clockwise polygon: outward normal is the edge rotated clockwise
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = (dx * dx + dy * dy).sqrt();
        let (nx, ny) = (dy / len, -dx / len);
        let normal = [nx * e1[0] + ny * e2[0], nx * e1[1] + ny * e2[1], nx * e1[2] + ny * e2[2]];
        let anchor = [origin[0] + p[0] * e1[0] + p[1] * e2[0], origin[1] + p[0] * e1[1] + p[1] * e2[1], origin[2] + p[0] * e1[2] + p[1] * e2[2]];
        facets.push(HalfSpace { normal, offset: dot(normal, anchor) });
    }
    Ok(ConvexHull { facets, eps, kind: HullKind::Planar })
}

/// Counter-clockwise convex polygon (monotone chain), collinear points dropped.
fn convex_polygon(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    let turn = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    NoIntersections,
    AtMost3Adjacent,
    More,
}

impl Classification {
    pub fn from_flags(flags: &[bool]) -> Self {
        let hits: Vec<usize> = flags.iter().enumerate().filter(|(_, &f)| f).map(|(k, _)| k).collect();
        match (hits.first(), hits.last()) {
            (None, _) => Classification::NoIntersections,
            (Some(&lo), Some(&hi)) if hi - lo + 1 == hits.len() && hits.len() <= 3 => Classification::AtMost3Adjacent,
            _ => Classification::More,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Classification::NoIntersections => "NoIntersections",
            Classification::AtMost3Adjacent => "AtMost3Adjacent",
            Classification::More => "More",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub slice_indices: Vec<i64>,
    pub intersecting: Vec<bool>,
    pub classification: Classification,
    pub warnings: Vec<String>,
}

impl IntersectionReport {
    pub fn flagged(&self) -> usize {
        self.intersecting.iter().filter(|&&f| f).count()
    }

    /// `slice,intersecting` rows followed by a `classification,<name>` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice,intersecting\n");
        for (idx, flag) in self.slice_indices.iter().zip(&self.intersecting) {
            out.push_str(&format!("{idx},{}\n", u8::from(*flag)));
        }
        out.push_str(&format!("classification,{}\n", self.classification.name()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectConfig {
    /// Interior pixels on every `interior_step`-th row and column are used
    /// alongside all contour pixels.
    pub interior_step: usize,
}

impl Default for IntersectConfig {
    fn default() -> Self {
        IntersectConfig { interior_step: 8 }
    }
}

/// Contour pixels (1-pixels touching a 0-pixel or the border, 4-adjacency)
/// plus a sparse grid of interior 1-pixels.
pub fn sample_mask_points(mask: &Mask2, step: usize) -> Vec<[usize; 2]> {
    let (w, h) = (mask.width(), mask.height());
    let step = step.max(1);
    let mut out = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if mask.get(col, row) == 0 {
                continue;
            }
            let contour = col == 0
                || row == 0
                || col + 1 == w
                || row + 1 == h
                || mask.get(col - 1, row) == 0
                || mask.get(col + 1, row) == 0
                || mask.get(col, row - 1) == 0
                || mask.get(col, row + 1) == 0;
            if contour || (col % step == 0 && row % step == 0) {
                out.push([col, row]);
            }
        }
    }
    out
}

/// Splits a joint θ into one single-slice transform per slice.
pub fn per_slice_transforms(theta: &TransformParams) -> Vec<TransformParams> {
    (0..theta.per_slice_offsets.len()).map(|k| theta.single_slice(k).expect("ordinal in range")).collect()
}

/// Flags every slice with a sampled point inside the hull of all slices
/// before it or all slices after it. `transforms[k]` maps slice `k` and is
/// bound to exactly that slice.
pub fn intersection_test(stack: &MaskStack, transforms: &[TransformParams], cfg: &IntersectConfig) -> Result<IntersectionReport> {
    let n = stack.len();
    if n < 2 {
        return Err(Error::InvalidInput("intersection test needs at least 2 slices".into()));
    }
    if transforms.len() != n {
        return Err(Error::ParameterBinding(format!("{} transforms for {} slices", transforms.len(), n)));
    }
    let mut clouds: Vec<Vec<Vec3>> = Vec::with_capacity(n);
    for (k, (mask, t)) in stack.masks().iter().zip(transforms).enumerate() {
        t.validate()?;
        if t.per_slice_offsets.len() != 1 || t.per_slice_offsets[0].index != stack.slice_indices()[k] {
            return Err(Error::ParameterBinding(format!("transform {k} is not bound to slice index {}", stack.slice_indices()[k])));
        }
        let pts = sample_mask_points(mask, cfg.interior_step)
            .into_iter()
            .map(|[c, r]| t.transform_point(mask.centered(c, r), 0))
            .collect::<Result<Vec<_>>>()?;
        clouds.push(pts);
    }

    let side = |range: std::ops::Range<usize>| -> std::result::Result<Option<ConvexHull>, String> {
        let pts: Vec<Vec3> = clouds[range.clone()].iter().flatten().copied().collect();
        if pts.is_empty() {
            return Ok(None);
        }
        match hull_or_slab(&pts) {
            Ok(h) => Ok(Some(h)),
            Err(e) => Err(format!("slices {}..{}: {e}", range.start, range.end)),
        }
    };
    let results: Vec<(bool, Vec<String>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut warnings = Vec::new();
            let mut hit = false;
            for range in [0..i, i + 1..n] {
                match side(range) {
                    Ok(Some(h)) => hit |= clouds[i].iter().any(|&p| h.contains(p)),
                    Ok(None) => {}
                    Err(msg) => warnings.push(format!("slice {i}: hull skipped ({msg})")),
                }
            }
            (hit, warnings)
        })
        .collect();
    let intersecting: Vec<bool> = results.iter().map(|r| r.0).collect();
    let warnings: Vec<String> = results.into_iter().flat_map(|r| r.1).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(IntersectionReport {
        slice_indices: stack.slice_indices().to_vec(),
        classification: Classification::from_flags(&intersecting),
        intersecting,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Vec<Vec3> {
        let mut v = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push([x, y, z]);
                }
            }
        }
        v
    }

    #[test]
    fn cube_hull_admits_exactly_the_cube() {
        let h = convex_hull_3d(&cube()).unwrap();
        assert!(h.contains([0.5, 0.5, 0.5]));
        assert!(h.contains([1.0, 1.0, 0.0]));
        assert!(!h.contains([1.01, 0.5, 0.5]));
        assert!(!h.contains([0.5, -0.01, 0.5]));
        assert!(!h.contains([0.5, 0.5, 1.01]));
        for f in &h.facets {
            assert!(f.normal.iter().filter(|c| c.abs() > 1e-12).count() == 1, "axis-aligned facet {f:?}");
        }
    }

    #[test]
    fn interior_points_do_not_change_the_cube() {
        let mut pts = cube();
        pts.extend([[0.5, 0.5, 0.5], [0.2, 0.7, 0.1], [0.9, 0.9, 0.9]]);
        let h = convex_hull_3d(&pts).unwrap();
        for p in [[0.5, 0.5, 0.5], [0.999, 0.001, 0.5]] {
            assert!(h.contains(p));
        }
        for p in [[1.001, 0.5, 0.5], [-0.001, 0.5, 0.5], [0.5, 0.5, -0.001]] {
            assert!(!h.contains(p));
        }
    }

    #[test]
    fn coplanar_and_tiny_inputs_are_degenerate() {
        assert!(matches!(convex_hull_3d(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), Err(Error::DegenerateHull(_))));
        let square = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(matches!(convex_hull_3d(&square), Err(Error::DegenerateHull(_))));
        let slab = hull_or_slab(&square).unwrap();
        assert_eq!(slab.kind, HullKind::Planar);
        assert!(slab.contains([0.5, 0.5, 0.0]));
        assert!(!slab.contains([0.5, 0.5, 0.01]));
        assert!(!slab.contains([1.2, 0.5, 0.0]));
    }

    #[test]
    fn classification_rule() {
        let c = Classification::from_flags;
        assert_eq!(c(&[false; 5]), Classification::NoIntersections);
        assert_eq!(c(&[false, true, true, false, false]), Classification::AtMost3Adjacent);
        assert_eq!(c(&[true, true, true, false]), Classification::AtMost3Adjacent);
        assert_eq!(c(&[true, true, true, true]), Classification::More);
        assert_eq!(c(&[true, false, true, false]), Classification::More);
    }

    fn disc(w: usize, r: f64) -> Mask2 {
        let c = (w as f64 - 1.0) / 2.0;
        Mask2::from_fn(w, w, |x, y| (x as f64 - c).hypot(y as f64 - c) <= r).unwrap()
    }

    #[test]
    fn parallel_slices_do_not_intersect() {
        let stack = MaskStack::sequential(vec![disc(21, 8.0), disc(21, 9.0), disc(21, 7.0), disc(21, 5.0)]).unwrap();
        let theta = TransformParams { rotation_x: 0.1, rotation_y: -0.2, rotation_z: 0.3, ..TransformParams::for_stack(&stack, 1.0, 3.0, -4.0) };
        let report = intersection_test(&stack, &per_slice_transforms(&theta), &IntersectConfig::default()).unwrap();
        assert_eq!(report.intersecting, vec![false; 4]);
        assert_eq!(report.classification, Classification::NoIntersections);
        assert!(report.to_csv().ends_with("classification,NoIntersections\n"));
    }

    #[test]
    fn slice_pushed_past_its_neighbor_is_flagged() {
        let stack = MaskStack::sequential(vec![disc(21, 8.0), disc(21, 8.0), disc(21, 8.0)]).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 3.0, 0.0);
        let mut ts = per_slice_transforms(&theta);
        // slice 1 moves from z = 3 to z = 7, beyond slice 2 at z = 6, so
        // slice 2 now lies inside the hull of slices 0 and 1
        ts[1].offset_z += 4.0;
        let report = intersection_test(&stack, &ts, &IntersectConfig::default()).unwrap();
        assert_eq!(report.intersecting, vec![false, false, true]);
        assert_eq!(report.classification, Classification::AtMost3Adjacent);
    }
}
