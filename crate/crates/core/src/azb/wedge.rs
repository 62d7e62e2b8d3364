//! Diffraction followed by reflection: φ–t windows around an (image) edge.
//!
//! Coordinates are taken in an edge frame whose z-axis is the edge line.
//! For image edges the frame is the mirrored basis of the parent edge frame,
//! which keeps φ and reverses z, so `P2z` may be negative.

use super::{azimuth_arc, projection_contains_origin, ANGLE_PAD};
use crate::error::{Error, Result};
use crate::geom::{mirror_point, Edge, Facet, Frame, Plane, Point3, Vec3};
use std::f64::consts::{PI, TAU};

/// φ–t window of a diffraction beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffAzbRect {
    pub phi_min: f64,
    pub phi_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl DiffAzbRect {
    pub fn area(&self) -> f64 {
        (self.phi_max - self.phi_min) * (self.t_max - self.t_min)
    }
}

/// Column-shaped region around the edge axis containing a facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingRegion {
    pub r_inner: f64,
    pub r_outer: f64,
    pub z_min: f64,
    pub z_max: f64,
}

pub fn diff_rect_initial(e: &Edge) -> DiffAzbRect {
    DiffAzbRect {
        phi_min: 0.0,
        phi_max: e.nwedge * PI,
        t_min: 0.0,
        t_max: 1.0,
    }
}

/// Component-wise intersection. Touching intervals give a degenerate rect.
pub fn diff_rect_intersect(a: &DiffAzbRect, b: &DiffAzbRect) -> Option<DiffAzbRect> {
    let r = DiffAzbRect {
        phi_min: a.phi_min.max(b.phi_min),
        phi_max: a.phi_max.min(b.phi_max),
        t_min: a.t_min.max(b.t_min),
        t_max: a.t_max.min(b.t_max),
    };
    (r.phi_min <= r.phi_max && r.t_min <= r.t_max).then_some(r)
}

/// Azimuth range of a facet around the edge axis, clamped to the exterior
/// sector `[0, nπ]`. `None` when the facet lies wholly in the wedge interior.
///
/// When the facet's azimuth arc crosses φ = 0 the result is the hull of its
/// pieces inside the sector.
pub fn facet_phi_range_from_edge(ef: &Frame, fac: &Facet, n: f64) -> Result<Option<(f64, f64)>> {
    let verts = fac.vertices().map(|v| ef.to_local(&v));
    if projection_contains_origin(&verts) {
        return Err(Error::Degenerate(format!(
            "facet {} meets the edge line",
            fac.id
        )));
    }
    let sector = n * PI;
    let (start, width) = azimuth_arc(&verts.map(|v| crate::geom::azimuth(&v)));
    let start = start - ANGLE_PAD;
    let end = start + width + 2.0 * ANGLE_PAD;
    if start >= 0.0 && end <= TAU {
        if start > sector {
            return Ok(None);
        }
        return Ok(Some((start, end.min(sector))));
    }
    // The arc wraps through φ = 0: pieces [start mod 2π, 2π) and [0, end mod 2π].
    let (hi_start, lo_end) = if start < 0.0 {
        (start + TAU, end)
    } else {
        (start, end - TAU)
    };
    if hi_start <= sector {
        Ok(Some((0.0, sector)))
    } else {
        Ok(Some((0.0, lo_end.min(sector))))
    }
}

/// Horizontal distance from the z-axis to segment `p`–`q` projected on xy.
fn segment_axis_distance(p: &Vec3, q: &Vec3) -> f64 {
    let (px, py) = (p.x, p.y);
    let (dx, dy) = (q.x - p.x, q.y - p.y);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        ((-px * dx - py * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (px + s * dx).hypot(py + s * dy)
}

pub fn bounding_region(ef: &Frame, fac: &Facet) -> Result<BoundingRegion> {
    let v = fac.vertices().map(|p| ef.to_local(&p));
    if projection_contains_origin(&v) {
        return Err(Error::Degenerate(format!(
            "facet {} meets the edge line",
            fac.id
        )));
    }
    let r_inner = (0..3)
        .map(|i| segment_axis_distance(&v[i], &v[(i + 1) % 3]))
        .fold(f64::INFINITY, f64::min);
    let r_outer = v.iter().map(|p| p.x.hypot(p.y)).fold(0.0, f64::max);
    let z_min = v.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let z_max = v.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundingRegion {
        r_inner,
        r_outer,
        z_min,
        z_max,
    })
}

/// Edge parameter of the diffraction point shared by every point of an arc
/// of radius `r_arc` at height `z_arc`, for a source at `t_world`.
pub fn t_arc(ef: &Frame, t_world: &Point3, r_arc: f64, z_arc: f64, p1z: f64, p2z: f64) -> Result<f64> {
    let tl = ef.to_local(t_world);
    t_arc_local(tl.x.hypot(tl.y), tl.z, r_arc, z_arc, p1z, p2z)
}

pub fn t_arc_local(r_t: f64, t_z: f64, r_arc: f64, z_arc: f64, p1z: f64, p2z: f64) -> Result<f64> {
    let w = r_t + r_arc;
    if !(w > 0.0) {
        return Err(Error::Degenerate(
            "source and arc both lie on the edge axis".into(),
        ));
    }
    if p2z == p1z {
        return Err(Error::Degenerate("edge has zero axial extent".into()));
    }
    let dz = (r_t * z_arc + r_arc * t_z) / w;
    Ok((dz - p1z) / (p2z - p1z))
}

/// t-range spanned by the bounding region. Only two of the four boundary
/// arcs can be extremal, chosen by where the source sits relative to
/// `[z_min, z_max]`.
pub fn region_t_range(
    ef: &Frame,
    t_world: &Point3,
    reg: &BoundingRegion,
    p1z: f64,
    p2z: f64,
) -> Result<(f64, f64)> {
    let tl = ef.to_local(t_world);
    let r_t = tl.x.hypot(tl.y);
    let (lower_r, upper_r) = if tl.z > reg.z_max {
        (reg.r_inner, reg.r_outer)
    } else if tl.z >= reg.z_min {
        (reg.r_inner, reg.r_inner)
    } else {
        (reg.r_outer, reg.r_inner)
    };
    let a = t_arc_local(r_t, tl.z, lower_r, reg.z_min, p1z, p2z)?;
    let b = t_arc_local(r_t, tl.z, upper_r, reg.z_max, p1z, p2z)?;
    Ok((a.min(b), a.max(b)))
}

/// φ–t rectangle of a facet seen from edge frame `ef` with the (image)
/// source at `source`. `None` when the facet is outside the exterior sector.
pub fn facet_diff_rect(
    ef: &Frame,
    source: &Point3,
    fac: &Facet,
    n: f64,
    p1z: f64,
    p2z: f64,
) -> Result<Option<DiffAzbRect>> {
    let Some((phi_min, phi_max)) = facet_phi_range_from_edge(ef, fac, n)? else {
        return Ok(None);
    };
    let reg = bounding_region(ef, fac)?;
    let (t_min, t_max) = region_t_range(ef, source, &reg, p1z, p2z)?;
    Ok(Some(DiffAzbRect {
        phi_min,
        phi_max,
        t_min: t_min - ANGLE_PAD,
        t_max: t_max + ANGLE_PAD,
    }))
}

/// Image of an edge in a reflecting plane; `t` parameterization is kept.
pub fn mirror_edge(e: &Edge, pl: &Plane) -> Edge {
    Edge {
        p1: mirror_point(&e.p1, pl),
        p2: mirror_point(&e.p2, pl),
        face0_dir: pl.mirror_dir(&e.face0_dir),
        normal_a: pl.mirror_dir(&e.normal_a),
        normal_b: pl.mirror_dir(&e.normal_b),
        ..*e
    }
}
