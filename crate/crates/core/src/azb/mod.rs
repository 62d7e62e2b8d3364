//! Angular Z-buffer rectangles and the rectangle-shrinkage procedures.
//!
//! A reflection beam is described by a φ–θ window around an (image) source
//! frame. A diffraction beam is described by a φ–t window around an (image)
//! edge frame, where `t` is the normalized position along the edge.
//!
//! The three shrinkage procedures live here:
//! - multiple reflection: [`facet_rect`], [`refl_rect_intersect`],
//!   [`shrink_after_reflection`]
//! - reflection followed by diffraction: [`clip_edge_to_rect`]
//! - diffraction followed by reflection: [`facet_phi_range_from_edge`],
//!   [`bounding_region`], [`region_t_range`], [`diff_rect_intersect`]

mod edge_clip;
mod wedge;

use std::f64::consts::{PI, TAU};

pub use edge_clip::{
    clip_edge_to_rect, t_of_phi, t_of_theta, t_phi_min_max, t_theta_min_max, theta_of_t,
    EdgeClip, PhiRoot, ThetaRoot, TInterval,
};
pub use wedge::{
    bounding_region, diff_rect_initial, diff_rect_intersect, facet_diff_rect,
    facet_phi_range_from_edge, mirror_edge, region_t_range, t_arc, t_arc_local, BoundingRegion,
    DiffAzbRect,
};

use crate::error::{Error, Result};
use crate::geom::{azimuth, local_angles, wrap_angle, Facet, Frame, Vec3};

/// Outward padding applied to computed angular margins, radians.
pub const ANGLE_PAD: f64 = 1e-10;
/// Tolerance for angle equality in the clipping procedures, radians.
pub const ANGLE_TOL: f64 = 1e-9;
/// Probe offset (in normalized edge units) used to decide which side of a
/// crossing lies inside a window.
pub const PROBE_OFFSET: f64 = 1e-3;

/// φ–θ window. `phi_width == 2π` encodes full azimuth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflAzbRect {
    pub phi_start: f64,
    pub phi_width: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl ReflAzbRect {
    /// The whole direction sphere.
    pub fn full() -> Self {
        ReflAzbRect {
            phi_start: 0.0,
            phi_width: TAU,
            theta_min: 0.0,
            theta_max: PI,
        }
    }

    /// Builds a rect from `[phi_min, phi_max]` (wrapping when `phi_max < phi_min`).
    pub fn from_bounds(phi_min: f64, phi_max: f64, theta_min: f64, theta_max: f64) -> Self {
        let start = wrap_angle(phi_min);
        let width = wrap_angle(phi_max - start);
        ReflAzbRect {
            phi_start: start,
            phi_width: width,
            theta_min,
            theta_max,
        }
    }

    #[inline]
    pub fn is_full_azimuth(&self) -> bool {
        self.phi_width >= TAU
    }

    #[inline]
    pub fn phi_min(&self) -> f64 {
        self.phi_start
    }

    #[inline]
    pub fn phi_max(&self) -> f64 {
        wrap_angle(self.phi_start + self.phi_width)
    }

    /// Wrap-aware azimuth membership with an absolute tolerance.
    #[inline]
    pub fn contains_phi(&self, phi: f64, tol: f64) -> bool {
        if self.is_full_azimuth() {
            return true;
        }
        let d = wrap_angle(phi - self.phi_start);
        d <= self.phi_width + tol || d >= TAU - tol
    }

    #[inline]
    pub fn contains_theta(&self, theta: f64, tol: f64) -> bool {
        theta >= self.theta_min - tol && theta <= self.theta_max + tol
    }

    /// Membership of a local direction vector.
    pub fn contains_dir(&self, v: &Vec3, tol: f64) -> bool {
        let (phi, theta) = local_angles(v);
        let rho = v.x.hypot(v.y);
        self.contains_theta(theta, tol) && (rho == 0.0 || self.contains_phi(phi, tol))
    }

    /// Solid-angle-like size used for statistics: `phi_width · (θmax − θmin)`.
    pub fn area(&self) -> f64 {
        self.phi_width * (self.theta_max - self.theta_min)
    }
}

/// Minimal φ–θ rectangle containing the directions of every point of `fac`
/// seen from `f.origin`.
///
/// θ extrema are taken over the vertices, the (at most one) stationary point
/// of θ along each side, and the polar axis when a ray along ±`ez` hits the
/// facet. In the latter case the azimuth range is full.
pub fn facet_rect(f: &Frame, fac: &Facet) -> Result<ReflAzbRect> {
    let verts = fac.vertices().map(|v| f.to_local(&v));
    let n_local = f.dir_to_local(&fac.n);
    let plane_d = n_local.dot(&verts[0]);
    let scale = verts.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if plane_d.abs() <= 1e-12 * scale.max(1.0) {
        return Err(Error::Degenerate(format!(
            "frame origin lies on the plane of facet {}",
            fac.id
        )));
    }

    let axis_hit = projection_contains_origin(&verts);

    let mut theta_min = f64::INFINITY;
    let mut theta_max = f64::NEG_INFINITY;
    let mut take = |th: f64| {
        theta_min = theta_min.min(th);
        theta_max = theta_max.max(th);
    };
    for v in &verts {
        take(local_angles(v).1);
    }
    for i in 0..3 {
        let a = verts[i];
        let b = verts[(i + 1) % 3] - a;
        if let Some(t) = side_stationary_t(&a, &b) {
            if t > 0.0 && t < 1.0 {
                take(local_angles(&(a + b * t)).1);
            }
        }
    }

    if axis_hit {
        // Where the facet plane crosses the local z-axis.
        if n_local.z.abs() > 0.0 {
            let z0 = plane_d / n_local.z;
            if z0 > 0.0 {
                take(0.0);
            } else {
                take(PI);
            }
        }
        return Ok(ReflAzbRect {
            phi_start: 0.0,
            phi_width: TAU,
            theta_min: (theta_min - ANGLE_PAD).max(0.0),
            theta_max: (theta_max + ANGLE_PAD).min(PI),
        });
    }

    let (start, width) = azimuth_arc(&verts.map(|v| azimuth(&v)));
    Ok(ReflAzbRect {
        phi_start: wrap_angle(start - ANGLE_PAD),
        phi_width: (width + 2.0 * ANGLE_PAD).min(TAU),
        theta_min: (theta_min - ANGLE_PAD).max(0.0),
        theta_max: (theta_max + ANGLE_PAD).min(PI),
    })
}

/// Stationary point of `cot θ(t)` along `a + t b`: the root of the linear
/// equation left after the quadratic terms of `d(cot θ)/dt = 0` cancel.
fn side_stationary_t(a: &Vec3, b: &Vec3) -> Option<f64> {
    let ab = a.x * b.x + a.y * b.y;
    let aa = a.x * a.x + a.y * a.y;
    let bb = b.x * b.x + b.y * b.y;
    let den = b.z * ab - a.z * bb;
    let num = a.z * ab - b.z * aa;
    if den == 0.0 {
        return None;
    }
    let t = num / den;
    t.is_finite().then_some(t)
}

/// True when the xy-projection of the triangle contains the origin
/// (boundary inclusive).
pub(crate) fn projection_contains_origin(v: &[Vec3; 3]) -> bool {
    let scale = v
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = 1e-12 * scale * scale;
    let mut pos = false;
    let mut neg = false;
    for i in 0..3 {
        let p = v[i];
        let q = v[(i + 1) % 3];
        // z-component of (q − p) × (0 − p)
        let c = (q.x - p.x) * (-p.y) - (q.y - p.y) * (-p.x);
        if c > tol {
            pos = true;
        } else if c < -tol {
            neg = true;
        }
    }
    !(pos && neg)
}

/// Smallest arc covering a set of azimuths: the complement of the largest
/// gap between consecutive sorted angles. Returns `(start, width)`.
pub(crate) fn azimuth_arc(angles: &[f64]) -> (f64, f64) {
    let mut a: Vec<f64> = angles.to_vec();
    a.sort_by(f64::total_cmp);
    let k = a.len();
    let mut best_gap = a[0] + TAU - a[k - 1];
    let mut start = a[0];
    for i in 1..k {
        let gap = a[i] - a[i - 1];
        if gap > best_gap {
            best_gap = gap;
            start = a[i];
        }
    }
    (start, TAU - best_gap)
}

/// Overlap of two azimuth arcs given as `(start, width)`. When the overlap
/// has two pieces the smallest arc covering both is returned.
fn arc_intersect(s1: f64, w1: f64, s2: f64, w2: f64, tol: f64) -> Option<(f64, f64)> {
    if w1 >= TAU {
        return Some((s2, w2));
    }
    if w2 >= TAU {
        return Some((s1, w1));
    }
    let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(2);
    let d = wrap_angle(s2 - s1);
    if d <= w1 + tol {
        pieces.push((s2, (w1 - d).min(w2).max(0.0)));
    } else if TAU - d <= tol {
        // s2 sits a hair before s1
        pieces.push((s1, w2.min(w1).max(0.0)));
    }
    let d2 = wrap_angle(s1 - s2);
    if d2 <= w2 + tol && d2 > tol {
        let piece = (s1, (w2 - d2).min(w1).max(0.0));
        if !pieces.iter().any(|p| wrap_angle(p.0 - piece.0) <= tol) {
            pieces.push(piece);
        }
    }
    match pieces.as_slice() {
        [] => None,
        [p] => Some(*p),
        [p, q, ..] => {
            // cover both pieces with the shorter of the two spanning arcs
            let span_pq = wrap_angle(q.0 + q.1 - p.0);
            let span_qp = wrap_angle(p.0 + p.1 - q.0);
            Some(if span_pq <= span_qp {
                (p.0, span_pq)
            } else {
                (q.0, span_qp)
            })
        }
    }
}

/// Wrap-aware intersection; θ ranges intersect as plain intervals.
pub fn refl_rect_intersect(a: &ReflAzbRect, b: &ReflAzbRect) -> Option<ReflAzbRect> {
    let theta_min = a.theta_min.max(b.theta_min);
    let theta_max = a.theta_max.min(b.theta_max);
    if theta_min > theta_max + ANGLE_TOL {
        return None;
    }
    let (phi_start, phi_width) =
        arc_intersect(a.phi_start, a.phi_width, b.phi_start, b.phi_width, ANGLE_TOL)?;
    Some(ReflAzbRect {
        phi_start,
        phi_width,
        theta_min,
        theta_max: theta_max.max(theta_min),
    })
}

/// Re-expresses a window in the frame mirrored across the reflecting facet:
/// φ is preserved and θ maps to π − θ.
pub fn shrink_after_reflection(r: &ReflAzbRect) -> ReflAzbRect {
    ReflAzbRect {
        phi_start: r.phi_start,
        phi_width: r.phi_width,
        theta_min: PI - r.theta_max,
        theta_max: PI - r.theta_min,
    }
}
