//! Binary BVH over scene facets with segment any-hit queries.

use crate::geom::{Facet, Point3, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.lo[k] <= o.lo[k] && self.hi[k] >= o.hi[k])
    }

    /// Slab test of the segment `o + t d`, `t ∈ [0, 1]`.
    #[inline]
    fn hits_segment(&self, o: &Point3, inv_d: &Vec3) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for k in 0..3 {
            if inv_d[k].is_infinite() {
                if o[k] < self.lo[k] || o[k] > self.hi[k] {
                    return false;
                }
                continue;
            }
            let a = (self.lo[k] - o[k]) * inv_d[k];
            let b = (self.hi[k] - o[k]) * inv_d[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy)]
enum NodeKind {
    Inner { left: u32, right: u32 },
    Leaf { start: u32, count: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bb: Aabb,
    kind: NodeKind,
}

/// Bounding-volume hierarchy; immutable after [`build_accel`].
#[derive(Debug, Clone)]
pub struct Accel {
    nodes: Vec<Node>,
    /// Facet ids in leaf order.
    order: Vec<u32>,
    tris: Vec<[Point3; 3]>,
}

pub fn build_accel(facets: &[Facet]) -> Accel {
    let tris: Vec<[Point3; 3]> = facets.iter().map(|f| f.vertices()).collect();
    let mut order: Vec<u32> = (0..facets.len() as u32).collect();
    let boxes: Vec<Aabb> = tris
        .iter()
        .map(|t| {
            let mut b = Aabb::empty();
            t.iter().for_each(|p| b.grow(p));
            b
        })
        .collect();
    let cents: Vec<Point3> = boxes.iter().map(|b| nalgebra::center(&b.lo, &b.hi)).collect();
    let mut nodes = Vec::with_capacity(2 * facets.len().max(1));
    if !facets.is_empty() {
        build_rec(&mut nodes, &mut order, 0, facets.len(), &boxes, &cents);
    }
    Accel { nodes, order, tris }
}

fn build_rec(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    cents: &[Point3],
) -> u32 {
    let mut bb = Aabb::empty();
    let mut cb = Aabb::empty();
    for &i in &order[start..end] {
        bb = bb.merge(&boxes[i as usize]);
        cb.grow(&cents[i as usize]);
    }
    let idx = nodes.len() as u32;
    let count = end - start;
    nodes.push(Node {
        bb,
        kind: NodeKind::Leaf {
            start: start as u32,
            count: count as u32,
        },
    });
    if count <= LEAF_SIZE {
        return idx;
    }
    let ext = cb.hi - cb.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |a, b| {
        cents[*a as usize][axis]
            .total_cmp(&cents[*b as usize][axis])
            .then(a.cmp(b))
    });
    let left = build_rec(nodes, order, start, mid, boxes, cents);
    let right = build_rec(nodes, order, mid, end, boxes, cents);
    nodes[idx as usize].kind = NodeKind::Inner { left, right };
    idx
}

/// Möller–Trumbore segment/triangle test, boundaries inclusive. The
/// segment is `o + t d` with `t ∈ [0, 1]`.
#[inline]
pub fn segment_hits_triangle(o: &Point3, d: &Vec3, tri: &[Point3; 3]) -> bool {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm() * d.norm();
    if det.abs() <= 1e-14 * scale {
        return false;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = e2.dot(&q) * inv;
    (0.0..=1.0).contains(&t)
}

impl Accel {
    pub fn facet_count(&self) -> usize {
        self.tris.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// True when segment `a`→`b` hits any facet not listed in `ignore`.
    pub fn occluded(&self, a: &Point3, b: &Point3, ignore: &[usize]) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let d = b - a;
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if !node.bb.hits_segment(a, &inv) {
                continue;
            }
            match node.kind {
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
                NodeKind::Leaf { start, count } => {
                    for &fid in &self.order[start as usize..(start + count) as usize] {
                        let fid = fid as usize;
                        if ignore.contains(&fid) {
                            continue;
                        }
                        if segment_hits_triangle(a, &d, &self.tris[fid]) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Structural check: every facet in exactly one leaf and every parent
    /// box contains its children.
    pub fn validate(&self) -> bool {
        let mut seen = vec![0u32; self.tris.len()];
        for n in &self.nodes {
            match n.kind {
                NodeKind::Inner { left, right } => {
                    if !n.bb.contains(&self.nodes[left as usize].bb)
                        || !n.bb.contains(&self.nodes[right as usize].bb)
                    {
                        return false;
                    }
                }
                NodeKind::Leaf { start, count } => {
                    for &f in &self.order[start as usize..(start + count) as usize] {
                        seen[f as usize] += 1;
                    }
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }
}
