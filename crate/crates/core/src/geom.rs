//! Points, frames, planes and the two scene primitives (triangular facets
//! and diffracting wedge edges).
//!
//! Angles follow the usual physics convention: `theta` is measured from the
//! frame's `ez` axis and `phi` is the azimuth from `ex` toward `ey`,
//! normalized to `[0, 2π)`.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Facets with a smaller area are rejected when a scene is loaded.
pub const DEGENERATE_AREA: f64 = 1e-9;
/// Edges shorter than this are rejected.
pub const DEGENERATE_LENGTH: f64 = 1e-9;
/// Inclusive barycentric tolerance used by [`point_in_facet`].
pub const EPS_BARY: f64 = 1e-9;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Origin plus a right-handed orthonormal basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Point3,
    pub ex: Vec3,
    pub ey: Vec3,
    pub ez: Vec3,
}

impl Frame {
    pub fn identity(origin: Point3) -> Self {
        Frame {
            origin,
            ex: Vec3::x(),
            ey: Vec3::y(),
            ez: Vec3::z(),
        }
    }

    /// Coordinates of a world point in this frame.
    #[inline]
    pub fn to_local(&self, p: &Point3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(&self.ex), d.dot(&self.ey), d.dot(&self.ez))
    }

    /// Components of a world direction in this frame.
    #[inline]
    pub fn dir_to_local(&self, v: &Vec3) -> Vec3 {
        Vec3::new(v.dot(&self.ex), v.dot(&self.ey), v.dot(&self.ez))
    }

    #[inline]
    pub fn to_world(&self, local: &Vec3) -> Point3 {
        self.origin + self.ex * local.x + self.ey * local.y + self.ez * local.z
    }

    /// Largest deviation from orthonormality and right-handedness.
    pub fn orthonormality_error(&self) -> f64 {
        let errs = [
            self.ex.dot(&self.ey).abs(),
            self.ey.dot(&self.ez).abs(),
            self.ez.dot(&self.ex).abs(),
            (self.ex.norm() - 1.0).abs(),
            (self.ey.norm() - 1.0).abs(),
            (self.ez.norm() - 1.0).abs(),
            (self.ex.cross(&self.ey) - self.ez).norm(),
        ];
        errs.into_iter().fold(0.0, f64::max)
    }

    pub fn determinant(&self) -> f64 {
        self.ex.cross(&self.ey).dot(&self.ez)
    }
}

/// Plane `n·p = d` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub n: Vec3,
    pub d: f64,
}

impl Plane {
    pub fn new(n: Vec3, d: f64) -> Result<Self> {
        let len = n.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::Degenerate("plane normal has zero length".into()));
        }
        Ok(Plane { n: n / len, d: d / len })
    }

    pub fn through(point: &Point3, n: Vec3) -> Result<Self> {
        let len = n.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::Degenerate("plane normal has zero length".into()));
        }
        let n = n / len;
        Ok(Plane { n, d: n.dot(&point.coords) })
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.n.dot(&p.coords) - self.d
    }

    #[inline]
    pub fn mirror_dir(&self, v: &Vec3) -> Vec3 {
        v - self.n * (2.0 * self.n.dot(v))
    }
}

/// Reflects `p` across the plane.
#[inline]
pub fn mirror_point(p: &Point3, pl: &Plane) -> Point3 {
    p - pl.n * (2.0 * pl.signed_distance(p))
}

/// Mirrors a frame: origin and the two tangential axes are reflected, and
/// `ez` is rebuilt as `ex′ × ey′` so the result stays right-handed.
pub fn mirror_basis(f: &Frame, pl: &Plane) -> Frame {
    let ex = pl.mirror_dir(&f.ex);
    let ey = pl.mirror_dir(&f.ey);
    Frame {
        origin: mirror_point(&f.origin, pl),
        ex,
        ey,
        ez: ex.cross(&ey),
    }
}

/// `(phi, theta)` of a local direction. On the polar axis phi is 0.
#[inline]
pub fn local_angles(v: &Vec3) -> (f64, f64) {
    let rho = v.x.hypot(v.y);
    let theta = rho.atan2(v.z);
    let phi = if rho == 0.0 { 0.0 } else { wrap_angle(v.y.atan2(v.x)) };
    (phi, theta)
}

pub fn spherical_angles(f: &Frame, p: &Point3) -> Result<(f64, f64)> {
    let v = f.to_local(p);
    if v.norm() == 0.0 {
        return Err(Error::Degenerate("point coincides with frame origin".into()));
    }
    Ok(local_angles(&v))
}

/// Unit direction with the given angles in a frame, in world coordinates.
pub fn direction(f: &Frame, phi: f64, theta: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    f.ex * (st * cp) + f.ey * (st * sp) + f.ez * ct
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub id: usize,
    pub v0: Point3,
    pub v1: Point3,
    pub v2: Point3,
    /// Outward normal (right-hand rule on v0, v1, v2).
    pub n: Vec3,
}

impl Facet {
    pub fn new(id: usize, v0: Point3, v1: Point3, v2: Point3) -> Result<Self> {
        let c = (v1 - v0).cross(&(v2 - v0));
        let area = 0.5 * c.norm();
        if !(area >= DEGENERATE_AREA) {
            return Err(Error::Degenerate(format!(
                "facet {id} has area {area:e} m² below {DEGENERATE_AREA:e}"
            )));
        }
        Ok(Facet {
            id,
            v0,
            v1,
            v2,
            n: c / c.norm(),
        })
    }

    #[inline]
    pub fn vertices(&self) -> [Point3; 3] {
        [self.v0, self.v1, self.v2]
    }

    #[inline]
    pub fn plane(&self) -> Plane {
        Plane {
            n: self.n,
            d: self.n.dot(&self.v0.coords),
        }
    }

    pub fn centroid(&self) -> Point3 {
        Point3::from((self.v0.coords + self.v1.coords + self.v2.coords) / 3.0)
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.v1 - self.v0).cross(&(self.v2 - self.v0)).norm()
    }

    /// Barycentric coordinates `(w0, w1, w2)` of the projection of `p`.
    pub fn barycentric(&self, p: &Point3) -> (f64, f64, f64) {
        let e1 = self.v1 - self.v0;
        let e2 = self.v2 - self.v0;
        let w = p - self.v0;
        let d11 = e1.dot(&e1);
        let d12 = e1.dot(&e2);
        let d22 = e2.dot(&e2);
        let dw1 = w.dot(&e1);
        let dw2 = w.dot(&e2);
        let den = d11 * d22 - d12 * d12;
        let b1 = (d22 * dw1 - d12 * dw2) / den;
        let b2 = (d11 * dw2 - d12 * dw1) / den;
        (1.0 - b1 - b2, b1, b2)
    }
}

/// True when `p` lies within `eps` of the facet plane and inside the
/// triangle (boundary inclusive).
pub fn point_in_facet(f: &Facet, p: &Point3, eps: f64) -> bool {
    if f.plane().signed_distance(p).abs() > eps {
        return false;
    }
    let (a, b, c) = f.barycentric(p);
    a >= -EPS_BARY && b >= -EPS_BARY && c >= -EPS_BARY
}

/// A diffracting wedge edge.
///
/// The edge is oriented so that, in [`edge_frame`], face A lies at `phi = 0`
/// and the exterior (air) sector is `phi ∈ [0, nπ]` with face B at `nπ`.
/// A half-plane (open mesh boundary) has `nwedge = 2`, `face_b == face_a`
/// and `normal_b == -normal_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub p1: Point3,
    pub p2: Point3,
    pub nwedge: f64,
    pub face_a: usize,
    pub face_b: usize,
    /// Unit tangent of face A, perpendicular to the edge, pointing into A.
    pub face0_dir: Vec3,
    pub normal_a: Vec3,
    pub normal_b: Vec3,
}

impl Edge {
    #[inline]
    pub fn vector(&self) -> Vec3 {
        self.p2 - self.p1
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.vector().norm()
    }

    #[inline]
    pub fn point_at(&self, t: f64) -> Point3 {
        self.p1 + self.vector() * t
    }

    pub fn is_half_plane(&self) -> bool {
        self.face_a == self.face_b
    }

    /// Exterior-sector test for a point seen from the edge line: strictly in
    /// front of at least one of the two faces.
    #[inline]
    pub fn exterior_contains(&self, p: &Point3, eps: f64) -> bool {
        let d = p - self.p1;
        d.dot(&self.normal_a) > eps || d.dot(&self.normal_b) > eps
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length() > DEGENERATE_LENGTH) {
            return Err(Error::Degenerate(format!("edge {} has zero length", self.id)));
        }
        if !(self.nwedge > 1.0 && self.nwedge <= 2.0) {
            return Err(Error::Degenerate(format!(
                "edge {} has wedge parameter {} outside (1, 2]",
                self.id, self.nwedge
            )));
        }
        Ok(())
    }
}

/// Edge-aligned frame: origin at `p1`, `ez` along the edge, `ex` on face A.
pub fn edge_frame(e: &Edge) -> Result<Frame> {
    let axis = e.vector();
    let len = axis.norm();
    if !(len > DEGENERATE_LENGTH) {
        return Err(Error::Degenerate(format!("edge {} has zero length", e.id)));
    }
    let ez = axis / len;
    let proj = e.face0_dir - ez * e.face0_dir.dot(&ez);
    let plen = proj.norm();
    if !(plen > 1e-12 * e.face0_dir.norm().max(1.0)) {
        return Err(Error::Degenerate(format!(
            "edge {}: reference face direction is parallel to the edge",
            e.id
        )));
    }
    let ex = proj / plen;
    Ok(Frame {
        origin: e.p1,
        ex,
        ey: ez.cross(&ex),
        ez,
    })
}

/// Azimuth of a local vector in `[0, 2π)`, ignoring its z component.
#[inline]
pub fn azimuth(v: &Vec3) -> f64 {
    wrap_angle(v.y.atan2(v.x))
}

#[inline]
pub fn horizontal_distance(v: &Vec3) -> f64 {
    v.x.hypot(v.y)
}
