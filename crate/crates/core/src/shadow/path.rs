//! Image-method backtracing of tree nodes into concrete ray paths, and the
//! occlusion test of those paths.

use crate::azb::{t_arc_local, ANGLE_TOL};
use crate::engine::Scene;
use crate::geom::{azimuth, edge_frame, horizontal_distance, mirror_point, point_in_facet, Point3};
use crate::visibility::side_eps;
use crate::vistree::{Beam, NodeKind, VisTree, ROOT};

use super::Accel;

/// Relative offset used to pull tested segments off their end primitives.
pub const SURFACE_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub kind: NodeKind,
    pub prim: u32,
    pub point: Point3,
}

/// A geometrically valid path from Tx to one FOP.
#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    pub tx: Point3,
    pub fop: Point3,
    pub fop_index: u32,
    /// Tree node the path came from, [`ROOT`] for the direct path.
    pub node: u32,
    pub hops: Vec<Hop>,
}

impl RayPath {
    pub fn direct(tx: Point3, fop: Point3, fop_index: u32) -> Self {
        RayPath {
            tx,
            fop,
            fop_index,
            node: ROOT,
            hops: Vec::new(),
        }
    }

    /// Tx, every hop point, then the FOP.
    pub fn points(&self) -> Vec<Point3> {
        let mut v = Vec::with_capacity(self.hops.len() + 2);
        v.push(self.tx);
        v.extend(self.hops.iter().map(|h| h.point));
        v.push(self.fop);
        v
    }

    pub fn sequence(&self) -> Vec<(NodeKind, u32)> {
        self.hops.iter().map(|h| (h.kind, h.prim)).collect()
    }

    /// Sort key giving the canonical accumulation order.
    pub fn key(&self) -> Vec<u32> {
        path_key(&self.sequence())
    }

    /// Geometric length of the whole path.
    pub fn length(&self) -> f64 {
        self.points().windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Encodes a primitive sequence so that plain `Vec` ordering is
/// lexicographic over (kind, id) pairs.
pub fn path_key(seq: &[(NodeKind, u32)]) -> Vec<u32> {
    seq.iter()
        .flat_map(|&(k, p)| [u32::from(k == NodeKind::Diffract), p])
        .collect()
}

/// Backtracing and shadow testing against one scene.
pub struct Tracer<'a> {
    pub scene: &'a Scene,
    pub accel: &'a Accel,
    /// Plane-side tolerance, twice the visibility tolerance.
    pub eps: f64,
    /// Distance trimmed from both ends of each tested segment.
    pub offset: f64,
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a Scene, accel: &'a Accel) -> Self {
        Tracer {
            scene,
            accel,
            eps: 2.0 * side_eps(scene),
            offset: SURFACE_OFFSET * scene.diameter(),
        }
    }

    /// Concrete path of `node` towards `fop`, or `None` when any geometric
    /// check fails.
    pub fn backtrace(&self, tree: &VisTree, node: u32, tx: &Point3, fop: &Point3, fop_index: u32) -> Option<RayPath> {
        if node == ROOT {
            return Some(RayPath::direct(*tx, *fop, fop_index));
        }
        let last = &tree.nodes[node as usize];
        // cheap rejections before any allocation
        match &last.beam {
            Beam::Refl { frame, .. } => {
                self.last_hop(frame.origin, last.prim, fop)?;
            }
            // rays leaving an edge keep their azimuth, so the FOP must sit
            // in the window's φ range
            Beam::Diff { frame, window, .. } if last.kind == NodeKind::Reflect => {
                let phi = azimuth(&frame.to_local(fop));
                let wraps = window.phi_min <= ANGLE_TOL && phi >= std::f64::consts::TAU - ANGLE_TOL;
                if !wraps && (phi < window.phi_min - ANGLE_TOL || phi > window.phi_max + ANGLE_TOL) {
                    return None;
                }
            }
            Beam::Diff { .. } => {}
        }
        let chain = tree.chain(node);
        let nodes: Vec<_> = chain.iter().map(|&i| &tree.nodes[i as usize]).collect();
        let split = nodes.iter().position(|n| n.kind == NodeKind::Diffract);
        let mut hops = Vec::with_capacity(nodes.len());
        match split {
            None => {
                let facets: Vec<u32> = nodes.iter().map(|n| n.prim).collect();
                let images: Vec<Point3> = nodes.iter().map(|n| n.beam.frame().origin).collect();
                let pts = self.reflect_back(tx, &images, &facets, fop)?;
                hops.extend(facets.iter().zip(pts).map(|(&f, p)| Hop {
                    kind: NodeKind::Reflect,
                    prim: f,
                    point: p,
                }));
            }
            Some(a) => {
                let Beam::Diff { source, .. } = nodes[a].beam else {
                    return None;
                };
                let pre: Vec<u32> = nodes[..a].iter().map(|n| n.prim).collect();
                let pre_images: Vec<Point3> = nodes[..a].iter().map(|n| n.beam.frame().origin).collect();
                let post: Vec<u32> = nodes[a + 1..].iter().map(|n| n.prim).collect();
                let eid = nodes[a].prim;
                let d = self.diffraction_point(eid, &source, &post, fop)?;
                let pre_pts = self.reflect_back(tx, &pre_images, &pre, &d)?;
                let mut img = d;
                let post_images: Vec<Point3> = post
                    .iter()
                    .map(|&f| {
                        img = mirror_point(&img, &self.scene.facets[f as usize].plane());
                        img
                    })
                    .collect();
                let post_pts = self.reflect_back(&d, &post_images, &post, fop)?;
                let before = pre_pts.last().copied().unwrap_or(*tx);
                let after = post_pts.first().copied().unwrap_or(*fop);
                if !self.in_exterior(eid, &d, &before) || !self.in_exterior(eid, &d, &after) {
                    return None;
                }
                hops.extend(pre.iter().zip(pre_pts).map(|(&f, p)| Hop {
                    kind: NodeKind::Reflect,
                    prim: f,
                    point: p,
                }));
                hops.push(Hop {
                    kind: NodeKind::Diffract,
                    prim: eid,
                    point: d,
                });
                hops.extend(post.iter().zip(post_pts).map(|(&f, p)| Hop {
                    kind: NodeKind::Reflect,
                    prim: f,
                    point: p,
                }));
            }
        }
        Some(RayPath {
            tx: *tx,
            fop: *fop,
            fop_index,
            node,
            hops,
        })
    }

    /// Keller point on edge `eid` for a source image `source` and the FOP
    /// unfolded back through the `post` facets.
    pub fn diffraction_point(&self, eid: u32, source: &Point3, post: &[u32], fop: &Point3) -> Option<Point3> {
        let e = &self.scene.edges[eid as usize];
        let mut u = *fop;
        for &f in post.iter().rev() {
            u = mirror_point(&u, &self.scene.facets[f as usize].plane());
        }
        let ef = edge_frame(e).ok()?;
        let s = ef.to_local(source);
        let r = ef.to_local(&u);
        let t = t_arc_local(horizontal_distance(&s), s.z, horizontal_distance(&r), r.z, 0.0, e.length()).ok()?;
        if !(0.0..=1.0).contains(&t) {
            return None;
        }
        Some(e.point_at(t))
    }

    /// Whether `p` is seen from `d` on edge `eid` inside the closed
    /// exterior sector `[0, nπ]`.
    fn in_exterior(&self, eid: u32, d: &Point3, p: &Point3) -> bool {
        let e = &self.scene.edges[eid as usize];
        let Ok(ef) = edge_frame(e) else {
            return false;
        };
        let v = ef.dir_to_local(&(p - d));
        if horizontal_distance(&v) <= self.eps {
            return false;
        }
        let phi = azimuth(&v);
        let top = e.nwedge * std::f64::consts::PI;
        phi <= top + ANGLE_TOL || phi >= std::f64::consts::TAU - ANGLE_TOL
    }

    /// Reflection point on `facet` of the segment from image `a` to `next`.
    #[inline]
    fn last_hop(&self, a: Point3, facet: u32, next: &Point3) -> Option<Point3> {
        let f = &self.scene.facets[facet as usize];
        let d = next - a;
        let den = f.n.dot(&d);
        if den.abs() <= f64::EPSILON * d.norm() {
            return None;
        }
        let s = f.n.dot(&(f.v0 - a)) / den;
        if !(0.0..=1.0).contains(&s) {
            return None;
        }
        let p = a + d * s;
        point_in_facet(f, &p, self.eps).then_some(p)
    }

    /// Walks backward from `end` through `facets` with `images[i]` the image
    /// of `src` after `facets[..=i]`; returns the reflection points in
    /// forward order.
    fn reflect_back(&self, src: &Point3, images: &[Point3], facets: &[u32], end: &Point3) -> Option<Vec<Point3>> {
        let k = facets.len();
        let mut pts = vec![Point3::origin(); k];
        let mut next = *end;
        for i in (0..k).rev() {
            let p = self.last_hop(images[i], facets[i], &next)?;
            pts[i] = p;
            next = p;
        }
        for i in 0..k {
            let f = &self.scene.facets[facets[i] as usize];
            let prev = if i == 0 { *src } else { pts[i - 1] };
            let nxt = if i + 1 < k { pts[i + 1] } else { *end };
            if (prev - f.v0).dot(&f.n) <= self.eps || (nxt - f.v0).dot(&f.n) <= self.eps {
                return None;
            }
        }
        Some(pts)
    }

    fn hop_prims(&self, h: &Hop) -> [usize; 2] {
        match h.kind {
            NodeKind::Reflect => [h.prim as usize; 2],
            NodeKind::Diffract => {
                let e = &self.scene.edges[h.prim as usize];
                [e.face_a, e.face_b]
            }
        }
    }

    /// True when every segment of `path` is unoccluded.
    pub fn shadow_test(&self, path: &RayPath) -> bool {
        let pts = path.points();
        let n = pts.len();
        (0..n - 1).all(|i| {
            let mut ignore = Vec::with_capacity(4);
            if i > 0 {
                ignore.extend(self.hop_prims(&path.hops[i - 1]));
            }
            if i + 1 < n - 1 {
                ignore.extend(self.hop_prims(&path.hops[i]));
            }
            let (a, b) = (pts[i], pts[i + 1]);
            let d = b - a;
            let len = d.norm();
            if len <= 2.0 * self.offset {
                return true;
            }
            let u = d * (self.offset / len);
            !self.accel.occluded(&(a + u), &(b - u), &ignore)
        })
    }
}
