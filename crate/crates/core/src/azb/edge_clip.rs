//! Reflection followed by diffraction: clipping an edge line against a φ–θ
//! window seen from an image source.
//!
//! All vectors are expressed in the image-source frame, so the source sits
//! at the origin, `A = P1 − S` and `B = P2 − P1`.

use std::f64::consts::{PI, TAU};

use super::{ReflAzbRect, ANGLE_TOL, PROBE_OFFSET};
use crate::geom::{Edge, Frame, Vec3};

/// Extra slack added around the composed clip range, normalized edge units.
pub const CLIP_PAD: f64 = 1e-9;

/// Root of `tan φ = (Ay + t By)/(Ax + t Bx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiRoot {
    pub t: f64,
    /// `A + tB` points along `φ` rather than `φ + π`.
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaRoot {
    pub t: f64,
    /// θ(t) reproduces θ rather than π − θ.
    pub valid: bool,
}

/// A t-interval that may be unbounded or empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TInterval {
    Empty,
    Range(f64, f64),
}

impl TInterval {
    pub const ALL: TInterval = TInterval::Range(f64::NEG_INFINITY, f64::INFINITY);

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            TInterval::Empty => (f64::NAN, f64::NAN),
            TInterval::Range(a, b) => (a, b),
        }
    }
}

/// Result of clipping an edge against a window. Invalid entries are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeClip {
    pub t_phi_min: f64,
    pub t_phi_max: f64,
    pub t_theta_min: f64,
    pub t_theta_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl EdgeClip {
    pub fn is_empty(&self) -> bool {
        !(self.t_min <= self.t_max)
    }

    /// The clipped range padded by [`CLIP_PAD`] and kept inside `[0, 1]`.
    pub fn range(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        Some((
            (self.t_min - CLIP_PAD).max(0.0),
            (self.t_max + CLIP_PAD).min(1.0),
        ))
    }
}

#[inline]
fn xy_norm(v: &Vec3) -> f64 {
    v.x.hypot(v.y)
}

/// θ of `A + tB` as seen from the origin. Returns the polar angle in `[0, π]`.
#[inline]
pub fn theta_of_t(a: &Vec3, b: &Vec3, t: f64) -> f64 {
    let d = if t.is_infinite() { *b * t.signum() } else { a + b * t };
    xy_norm(&d).atan2(d.z)
}

pub fn t_of_phi(a: &Vec3, b: &Vec3, phi: f64) -> PhiRoot {
    let (s, c) = phi.sin_cos();
    let num = -a.x * s + a.y * c;
    let den = b.x * s - b.y * c;
    if den.abs() <= 1e-14 * xy_norm(b) {
        // Line parallel to the margin direction: the margin is reached only
        // in the limit, at +∞ when B points along φ and at −∞ otherwise.
        let along = b.x * c + b.y * s;
        return PhiRoot {
            t: if along >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
            valid: true,
        };
    }
    let t = num / den;
    let d = a + b * t;
    PhiRoot {
        t,
        valid: d.x * c + d.y * s > 0.0,
    }
}

/// Up to two roots of `α t² + β t + γ = 0` for the θ level set, each tagged
/// with whether it lies on θ or on its mirror π − θ.
pub fn t_of_theta(a: &Vec3, b: &Vec3, theta: f64) -> Vec<ThetaRoot> {
    let (s, c) = theta.sin_cos();
    let mut roots: Vec<f64> = Vec::with_capacity(2);
    if c.abs() < 1e-12 {
        // θ = π/2: the level set is the plane z = 0, a single crossing.
        if b.z != 0.0 {
            roots.push(-a.z / b.z);
        }
    } else {
        // The cot² form multiplied through by sin² θ stays finite at the poles.
        let c2 = c * c;
        let s2 = s * s;
        let alpha = (b.x * b.x + b.y * b.y) * c2 - b.z * b.z * s2;
        let beta = 2.0 * ((a.x * b.x + a.y * b.y) * c2 - a.z * b.z * s2);
        let gamma = (a.x * a.x + a.y * a.y) * c2 - a.z * a.z * s2;
        let scale = alpha.abs() + beta.abs() + gamma.abs();
        if scale == 0.0 {
            return Vec::new();
        }
        let mut disc = beta * beta - 4.0 * alpha * gamma;
        if disc < 0.0 {
            if disc >= -1e-12 * (beta * beta + (4.0 * alpha * gamma).abs()) {
                disc = 0.0;
            } else {
                return Vec::new();
            }
        }
        let sq = disc.sqrt();
        if alpha.abs() <= 1e-15 * scale {
            if beta != 0.0 {
                roots.push(-gamma / beta);
            }
        } else {
            let q = -0.5 * (beta + beta.signum() * sq);
            if q == 0.0 {
                roots.push(0.0);
                roots.push(0.0);
            } else {
                roots.push(q / alpha);
                roots.push(gamma / q);
            }
        }
    }
    roots
        .into_iter()
        .filter(|t| t.is_finite())
        .map(|t| {
            let th = theta_of_t(a, b, t);
            ThetaRoot {
                t,
                valid: (th - theta).abs() <= (th - (PI - theta)).abs(),
            }
        })
        .collect()
}

fn line_through_origin(a: &Vec3, b: &Vec3) -> bool {
    a.cross(b).norm() <= 1e-12 * a.norm() * b.norm()
}

/// Direction `d` falls in the window's φ range (boundary inclusive).
#[inline]
fn phi_inside(rect: &ReflAzbRect, d: &Vec3) -> bool {
    rect.contains_phi(d.y.atan2(d.x), ANGLE_TOL)
}

/// The t-range over which the edge line's azimuth lies in the
/// window. The caller handles the full-azimuth window.
pub fn t_phi_min_max(rect: &ReflAzbRect, a: &Vec3, b: &Vec3) -> TInterval {
    if rect.is_full_azimuth() || rect.phi_width == PI {
        return TInterval::ALL;
    }
    if rect.phi_width > PI {
        // the complement window is narrower than π, so its preimage is a
        // single interval that gets cut out of the line
        let comp = ReflAzbRect {
            phi_start: rect.phi_max(),
            phi_width: TAU - rect.phi_width,
            ..*rect
        };
        return match t_phi_min_max(&comp, a, b) {
            TInterval::Empty => TInterval::ALL,
            TInterval::Range(c0, c1) if c0 == f64::NEG_INFINITY && c1 == f64::INFINITY => TInterval::Empty,
            TInterval::Range(c0, c1) if c0 < 0.0 => TInterval::Range(c1, f64::INFINITY),
            TInterval::Range(c0, c1) if c1 > 1.0 => TInterval::Range(f64::NEG_INFINITY, c0),
            // two pieces inside the edge: keep the hull
            TInterval::Range(..) => TInterval::ALL,
        };
    }
    let bxy = xy_norm(b);
    if bxy <= 1e-12 * b.norm() {
        // edge parallel to the polar axis
        return if xy_norm(a) == 0.0 || phi_inside(rect, a) {
            TInterval::ALL
        } else {
            TInterval::Empty
        };
    }

    let axy = xy_norm(a);
    let cross = a.x * b.y - a.y * b.x;
    if cross.abs() <= 1e-12 * axy * bxy {
        // projected line through the origin: both margins map to one t
        let t0 = -(a.x * b.x + a.y * b.y) / (bxy * bxy);
        let probe = a + b * (t0 + PROBE_OFFSET);
        if phi_inside(rect, &probe) {
            return TInterval::Range(t0, f64::INFINITY);
        }
        if phi_inside(rect, &(-probe)) {
            return TInterval::Range(f64::NEG_INFINITY, t0);
        }
        return TInterval::Empty;
    }

    let r1 = t_of_phi(a, b, rect.phi_min());
    let r2 = t_of_phi(a, b, rect.phi_max());
    match (r1.t.is_finite(), r2.t.is_finite()) {
        (true, true) => match (r1.valid, r2.valid) {
            // both crossings proper
            (true, true) => TInterval::Range(r1.t.min(r2.t), r1.t.max(r2.t)),
            // one proper crossing, one on the far branch
            (true, false) | (false, true) => {
                let (proper, improper) = if r1.valid { (r1.t, r2.t) } else { (r2.t, r1.t) };
                if proper - improper > 0.0 {
                    TInterval::Range(proper, f64::INFINITY)
                } else {
                    TInterval::Range(f64::NEG_INFINITY, proper)
                }
            }
            (false, false) => TInterval::Empty,
        },
        // one margin parallel to the line
        (true, false) | (false, true) => {
            let fin = if r1.t.is_finite() { r1 } else { r2 };
            if !fin.valid {
                return TInterval::Empty;
            }
            let probe = a + b * (fin.t + PROBE_OFFSET);
            if phi_inside(rect, &probe) {
                TInterval::Range(fin.t, f64::INFINITY)
            } else {
                TInterval::Range(f64::NEG_INFINITY, fin.t)
            }
        }
        (false, false) => TInterval::Empty,
    }
}

/// Signed depth of θ inside `[θmin, θmax]`; non-negative means inside.
#[inline]
fn theta_depth(rect: &ReflAzbRect, th: f64) -> f64 {
    (th - rect.theta_min).min(rect.theta_max - th)
}

#[inline]
fn theta_inside(rect: &ReflAzbRect, th: f64) -> bool {
    theta_depth(rect, th) >= -ANGLE_TOL
}

/// The t-range over which the edge line's polar angle lies in the window.
/// Pieces of the preimage that miss `[0, 1]` are dropped and the rest are
/// merged into their hull.
pub fn t_theta_min_max(rect: &ReflAzbRect, a: &Vec3, b: &Vec3) -> TInterval {
    if rect.theta_min <= 0.0 && rect.theta_max >= PI {
        return TInterval::ALL;
    }
    if line_through_origin(a, b) {
        // θ is constant on each side of the origin crossing.
        let t0 = if b.norm_squared() > 0.0 {
            -a.dot(b) / b.norm_squared()
        } else {
            0.0
        };
        let plus = theta_inside(rect, theta_of_t(a, b, t0 + PROBE_OFFSET));
        let minus = theta_inside(rect, theta_of_t(a, b, t0 - PROBE_OFFSET));
        return match (plus, minus) {
            (true, true) => TInterval::ALL,
            (true, false) => TInterval::Range(t0, f64::INFINITY),
            (false, true) => TInterval::Range(f64::NEG_INFINITY, t0),
            (false, false) => TInterval::Empty,
        };
    }

    // Every valid crossing of either level set splits the line into pieces
    // that lie wholly inside or wholly outside the band.
    let mut cuts: Vec<f64> = [rect.theta_min, rect.theta_max]
        .iter()
        .flat_map(|&th| t_of_theta(a, b, th))
        .filter(|r| r.valid)
        .map(|r| r.t)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if cuts.is_empty() {
        return if theta_inside(rect, theta_of_t(a, b, 0.0)) {
            TInterval::ALL
        } else {
            TInterval::Empty
        };
    }
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(f64::NEG_INFINITY);
    bounds.extend(&cuts);
    bounds.push(f64::INFINITY);
    let probe = |lo: f64, hi: f64| match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (false, true) => hi - hi.abs().max(1.0),
        (true, false) => lo + lo.abs().max(1.0),
        (false, false) => 0.0,
    };
    // hull of the inside pieces that reach the edge segment
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi < -CLIP_PAD || lo > 1.0 + CLIP_PAD {
            continue;
        }
        if theta_inside(rect, theta_of_t(a, b, probe(lo, hi))) {
            t_lo = t_lo.min(lo);
            t_hi = t_hi.max(hi);
        }
    }
    // a crossing point itself is inside even when both neighbours are not
    for &c in &cuts {
        if (-CLIP_PAD..=1.0 + CLIP_PAD).contains(&c) {
            t_lo = t_lo.min(c);
            t_hi = t_hi.max(c);
        }
    }
    if t_lo <= t_hi {
        TInterval::Range(t_lo, t_hi)
    } else {
        TInterval::Empty
    }
}

/// Clips edge `e` against `rect` seen from the origin of `frame`, the image
/// source. The result is a superset of `{t ∈ [0,1] : e(t) ∈ rect}`.
pub fn clip_edge_to_rect(rect: &ReflAzbRect, e: &Edge, frame: &Frame) -> EdgeClip {
    let a = frame.to_local(&e.p1);
    let b = frame.dir_to_local(&e.vector());
    let phi = if rect.is_full_azimuth() {
        TInterval::ALL
    } else {
        t_phi_min_max(rect, &a, &b)
    };
    let theta = t_theta_min_max(rect, &a, &b);
    compose(phi, theta)
}

pub(crate) fn compose(phi: TInterval, theta: TInterval) -> EdgeClip {
    let (t_phi_min, t_phi_max) = phi.bounds();
    let (t_theta_min, t_theta_max) = theta.bounds();
    let (t_min, t_max) = match (phi, theta) {
        (TInterval::Range(..), TInterval::Range(..)) => (
            t_phi_min.max(t_theta_min).max(0.0),
            t_phi_max.min(t_theta_max).min(1.0),
        ),
        _ => (f64::NAN, f64::NAN),
    };
    // A range that misses [0, 1] by less than the pad is kept as a point.
    let (t_min, t_max) = if t_min > t_max && t_min - t_max <= 2.0 * CLIP_PAD {
        let m = 0.5 * (t_min + t_max);
        (m, m)
    } else {
        (t_min, t_max)
    };
    EdgeClip {
        t_phi_min,
        t_phi_max,
        t_theta_min,
        t_theta_max,
        t_min,
        t_max,
    }
}
