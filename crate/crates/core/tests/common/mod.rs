//! Reference implementations used by the integration tests. Nothing here
//! calls the crate's geometry or tracing code; scenes are built through
//! `Scene::from_triangles` and read directly.
#![allow(dead_code)]

use std::collections::BTreeMap;

use itrace::engine::Scene;
use itrace::geom::{Point3, Vec3};
use num_complex::Complex64;

pub type CVec3 = nalgebra::Vector3<Complex64>;

pub fn quad(v: [Point3; 4]) -> (Vec<Point3>, Vec<[usize; 3]>) {
    (v.to_vec(), vec![[0, 1, 2], [0, 2, 3]])
}

pub fn merge(parts: &[(Vec<Point3>, Vec<[usize; 3]>)]) -> Scene {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (v, t) in parts {
        let base = verts.len();
        verts.extend_from_slice(v);
        tris.extend(t.iter().map(|t| t.map(|i| i + base)));
    }
    Scene::from_triangles(&verts, &tris).expect("scene")
}

/// Three small scenes with their transmitters: a ground with a lifted
/// screen, a square pyramid and two facing walls.
pub fn small_scenes() -> Vec<(&'static str, Scene, Point3)> {
    let p = Point3::new;
    let ground = quad([p(-30.0, -30.0, 0.0), p(30.0, -30.0, 0.0), p(30.0, 30.0, 0.0), p(-30.0, 30.0, 0.0)]);
    // screen facing -x, lifted off the ground
    let screen = quad([p(10.0, -8.0, 2.0), p(10.0, -8.0, 12.0), p(10.0, 8.0, 12.0), p(10.0, 8.0, 2.0)]);
    let apex = p(0.0, 0.0, 8.0);
    let base = [p(-6.0, -6.0, 0.0), p(6.0, -6.0, 0.0), p(6.0, 6.0, 0.0), p(-6.0, 6.0, 0.0)];
    let mut pyr_v = base.to_vec();
    pyr_v.push(apex);
    let pyr_t = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4], [0, 2, 1], [0, 3, 2]];
    let wall_a = quad([p(-20.0, -6.0, 0.0), p(20.0, -6.0, 0.0), p(20.0, -6.0, 15.0), p(-20.0, -6.0, 15.0)]);
    let wall_b = quad([p(-20.0, 6.0, 0.0), p(-20.0, 6.0, 15.0), p(20.0, 6.0, 15.0), p(20.0, 6.0, 0.0)]);
    vec![
        ("ground+screen", merge(&[ground, screen]), p(-5.0, 3.0, 6.0)),
        ("pyramid", merge(&[(pyr_v, pyr_t)]), p(-15.0, -4.0, 5.0)),
        ("walls", merge(&[wall_a, wall_b]), p(-12.0, 1.0, 5.0)),
    ]
}

/// Primitive reference in a brute-force path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prim {
    Facet(u32),
    Edge(u32),
}

impl Prim {
    pub fn tag(&self) -> String {
        match self {
            Prim::Facet(i) => format!("R{i}"),
            Prim::Edge(i) => format!("D{i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BrutePath {
    pub fop: u32,
    pub seq: Vec<Prim>,
    /// Tx, hop points, FOP.
    pub points: Vec<Point3>,
}

impl BrutePath {
    pub fn seq_string(&self) -> String {
        self.seq.iter().map(|p| p.tag()).collect::<Vec<_>>().join(",")
    }
}

fn plane_dist(scene: &Scene, f: u32, p: &Point3) -> f64 {
    let fc = &scene.facets[f as usize];
    (p - fc.v0).dot(&fc.n)
}

fn mirror(scene: &Scene, f: u32, p: &Point3) -> Point3 {
    let fc = &scene.facets[f as usize];
    p - fc.n * (2.0 * plane_dist(scene, f, p))
}

fn in_triangle(scene: &Scene, f: u32, p: &Point3, tol: f64) -> bool {
    let v = scene.facets[f as usize].vertices();
    let n = (v[1] - v[0]).cross(&(v[2] - v[0]));
    let area2 = n.norm_squared();
    (0..3).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % 3];
        (b - a).cross(&(p - a)).dot(&n) / area2 >= -tol
    })
}

/// Crossing of segment `a`→`b` with the plane of `f`, as a point when `a`
/// is in front, `b` behind and the crossing lies on the triangle.
fn cross_facet(scene: &Scene, f: u32, a: &Point3, b: &Point3, tol: f64) -> Option<Point3> {
    let da = plane_dist(scene, f, a);
    let db = plane_dist(scene, f, b);
    if !(da > tol && db < -tol) {
        return None;
    }
    let s = da / (da - db);
    let p = a + (b - a) * s;
    in_triangle(scene, f, &p, 1e-9).then_some(p)
}

/// Point on edge `e` minimizing `|D − s| + |D − f|`, by bisection on the
/// derivative; `None` when it falls outside the edge.
pub fn fermat_point(scene: &Scene, e: u32, s: &Point3, f: &Point3) -> Option<Point3> {
    let ed = &scene.edges[e as usize];
    let v = ed.p2 - ed.p1;
    let g = |t: f64| {
        let d = ed.p1 + v * t;
        v.dot(&(d - s)) / (d - s).norm() + v.dot(&(d - f)) / (d - f).norm()
    };
    let (mut lo, mut hi) = (-0.5, 1.5);
    if g(lo) > 0.0 || g(hi) < 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    (-1e-12..=1.0 + 1e-12).contains(&t).then(|| ed.p1 + v * t)
}

/// Concrete geometry of one primitive sequence, or `None`.
pub fn build_path(scene: &Scene, tx: &Point3, fop: &Point3, seq: &[Prim], tol: f64) -> Option<Vec<Point3>> {
    let diff = seq.iter().position(|p| matches!(p, Prim::Edge(_)));
    let facets_of = |s: &[Prim]| -> Vec<u32> {
        s.iter()
            .map(|p| match p {
                Prim::Facet(f) => *f,
                Prim::Edge(_) => unreachable!(),
            })
            .collect()
    };
    // backward reflection chain from `end` towards the images of `start`
    let back = |start: &Point3, end: &Point3, fs: &[u32]| -> Option<Vec<Point3>> {
        let mut imgs = vec![*start];
        for &f in fs {
            imgs.push(mirror(scene, f, imgs.last().unwrap()));
        }
        let mut pts = Vec::with_capacity(fs.len());
        let mut target = *end;
        for i in (0..fs.len()).rev() {
            let p = cross_facet(scene, fs[i], &target, &imgs[i + 1], tol)?;
            pts.push(p);
            target = p;
        }
        pts.reverse();
        Some(pts)
    };
    let mut pts = vec![*tx];
    match diff {
        None => pts.extend(back(tx, fop, &facets_of(seq))?),
        Some(j) => {
            let Prim::Edge(e) = seq[j] else { unreachable!() };
            let pre = facets_of(&seq[..j]);
            let post = facets_of(&seq[j + 1..]);
            let mut s_img = *tx;
            for &f in &pre {
                s_img = mirror(scene, f, &s_img);
            }
            let mut f_img = *fop;
            for &f in post.iter().rev() {
                f_img = mirror(scene, f, &f_img);
            }
            let d = fermat_point(scene, e, &s_img, &f_img)?;
            pts.extend(back(tx, &d, &pre)?);
            pts.push(d);
            // forward chain: fold the FOP images back one facet at a time
            let mut cur = d;
            for (i, &f) in post.iter().enumerate() {
                let mut img = *fop;
                for &g in post[i..].iter().rev() {
                    img = mirror(scene, g, &img);
                }
                let p = cross_facet(scene, f, &cur, &img, tol)?;
                pts.push(p);
                cur = p;
            }
        }
    }
    pts.push(*fop);

    // physical checks on the unfolded geometry
    for w in pts.windows(2) {
        if (w[1] - w[0]).norm() <= tol {
            return None;
        }
    }
    for (i, p) in seq.iter().enumerate() {
        let (prev, here, next) = (pts[i], pts[i + 1], pts[i + 2]);
        match *p {
            Prim::Facet(f) => {
                if !(plane_dist(scene, f, &prev) > tol && plane_dist(scene, f, &next) > tol) {
                    return None;
                }
            }
            Prim::Edge(e) => {
                let ed = &scene.edges[e as usize];
                let outside = |q: &Point3| {
                    let v = q - here;
                    v.dot(&ed.normal_a) >= -tol || v.dot(&ed.normal_b) >= -tol
                };
                if !(outside(&prev) && outside(&next)) {
                    return None;
                }
            }
        }
    }
    Some(pts)
}

fn hits_triangle(o: &Point3, d: &Vec3, v: &[Point3; 3]) -> bool {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let n = e1.cross(&e2);
    let den = d.dot(&n);
    if den.abs() < 1e-15 * n.norm() * d.norm() {
        return false;
    }
    let t = (v[0] - o).dot(&n) / den;
    if !(0.0..=1.0).contains(&t) {
        return false;
    }
    let p = o + d * t;
    let area2 = n.norm_squared();
    (0..3).all(|i| (v[(i + 1) % 3] - v[i]).cross(&(p - v[i])).dot(&n) / area2 >= 0.0)
}

/// Linear-scan occlusion of every segment, ignoring the primitives at each
/// segment's ends and trimming `offset` from both ends.
pub fn unoccluded(scene: &Scene, pts: &[Point3], seq: &[Prim], offset: f64) -> bool {
    let owners = |p: &Prim| -> Vec<usize> {
        match *p {
            Prim::Facet(f) => vec![f as usize],
            Prim::Edge(e) => {
                let ed = &scene.edges[e as usize];
                vec![ed.face_a, ed.face_b]
            }
        }
    };
    (0..pts.len() - 1).all(|i| {
        let mut ignore = Vec::new();
        if i > 0 {
            ignore.extend(owners(&seq[i - 1]));
        }
        if i < seq.len() {
            ignore.extend(owners(&seq[i]));
        }
        let d = pts[i + 1] - pts[i];
        let len = d.norm();
        if len <= 2.0 * offset {
            return true;
        }
        let u = d * (offset / len);
        let (a, b) = (pts[i] + u, pts[i + 1] - u);
        !scene
            .facets
            .iter()
            .enumerate()
            .any(|(k, f)| !ignore.contains(&k) && hits_triangle(&a, &(b - a), &f.vertices()))
    })
}

/// Every unoccluded path with at most `max_refl` reflections and
/// `max_diff` diffractions, from an exhaustive walk over all sequences.
pub fn enumerate_paths(scene: &Scene, tx: &Point3, fops: &[Point3], max_refl: usize, max_diff: usize) -> Vec<BrutePath> {
    let tol = 2e-9 * scene.diameter().max(1.0);
    let offset = 1e-6 * scene.diameter();
    let mut seqs: Vec<Vec<Prim>> = vec![vec![]];
    let mut frontier: Vec<Vec<Prim>> = vec![vec![]];
    while let Some(cur) = frontier.pop() {
        let nr = cur.iter().filter(|p| matches!(p, Prim::Facet(_))).count();
        let nd = cur.len() - nr;
        let mut next = Vec::new();
        if nr < max_refl {
            for f in 0..scene.facets.len() as u32 {
                if cur.last() != Some(&Prim::Facet(f)) {
                    next.push(Prim::Facet(f));
                }
            }
        }
        if nd < max_diff {
            for e in 0..scene.edges.len() as u32 {
                next.push(Prim::Edge(e));
            }
        }
        for p in next {
            let mut s = cur.clone();
            s.push(p);
            seqs.push(s.clone());
            frontier.push(s);
        }
    }
    let mut out = Vec::new();
    for (fi, fop) in fops.iter().enumerate() {
        for s in &seqs {
            if let Some(pts) = build_path(scene, tx, fop, s, tol) {
                if unoccluded(scene, &pts, s, offset) {
                    out.push(BrutePath {
                        fop: fi as u32,
                        seq: s.clone(),
                        points: pts,
                    });
                }
            }
        }
    }
    out
}

/// Canonical ordering key matching the engine's: facets before edges.
pub fn seq_key(seq: &[Prim]) -> Vec<(u8, u32)> {
    seq.iter()
        .map(|p| match *p {
            Prim::Facet(f) => (0, f),
            Prim::Edge(e) => (1, e),
        })
        .collect()
}

pub fn group_by_fop(paths: &[BrutePath]) -> BTreeMap<u32, Vec<&BrutePath>> {
    let mut m: BTreeMap<u32, Vec<&BrutePath>> = BTreeMap::new();
    for p in paths {
        m.entry(p.fop).or_default().push(p);
    }
    for v in m.values_mut() {
        v.sort_by_key(|p| seq_key(&p.seq));
    }
    m
}

pub const ETA0: f64 = 376.730313668;
pub const C0: f64 = 299792458.0;

/// Amplitude at 1 m broadside of a short dipole radiating `power`.
pub fn dipole_e0(power: f64) -> f64 {
    (3.0 * ETA0 * power / (4.0 * std::f64::consts::PI)).sqrt()
}

/// z-directed dipole at `src`: `E0 sinθ θ̂ e^{−jkr}/r`.
pub fn vertical_dipole(e0: f64, k: f64, src: &Point3, p: &Point3) -> CVec3 {
    let v = p - src;
    let r = v.norm();
    let rho = v.x.hypot(v.y);
    let (st, ct) = (rho / r, v.z / r);
    let (cp, sp) = if rho > 0.0 { (v.x / rho, v.y / rho) } else { (1.0, 0.0) };
    let theta_hat = Vec3::new(ct * cp, ct * sp, -st);
    let ph = Complex64::from_polar(e0 * st / r, -k * r);
    theta_hat.map(|c| ph * c)
}

/// Direct plus image-dipole field of a vertical dipole at height `h`
/// above a PEC plane z = 0.
pub fn two_ray(e0: f64, k: f64, tx: &Point3, p: &Point3) -> CVec3 {
    let img = Point3::new(tx.x, tx.y, -tx.z);
    vertical_dipole(e0, k, tx, p) + vertical_dipole(e0, k, &img, p)
}

/// `∫_0^a e^{−jτ²} dτ` by composite Simpson.
pub fn fresnel_integral(a: f64) -> Complex64 {
    let n = ((a.abs() * 4000.0).ceil() as usize).max(200) * 2;
    let h = a / n as f64;
    let f = |t: f64| Complex64::from_polar(1.0, -t * t);
    let mut s = f(0.0) + f(a);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += f(i as f64 * h) * w;
    }
    s * (h / 3.0)
}

/// Exact total field of a unit plane wave on a soft (Dirichlet)
/// half-plane. Angles are measured from the illuminated face, the wave
/// arrives from `phi_inc`, and `rho` is the distance to the edge.
pub fn sommerfeld_soft(k: f64, rho: f64, phi: f64, phi_inc: f64) -> Complex64 {
    let pi = std::f64::consts::PI;
    let half = Complex64::from_polar(pi.sqrt() / 2.0, -pi / 4.0);
    let pre = Complex64::from_polar(1.0 / pi.sqrt(), pi / 4.0);
    let u = |psi: f64| {
        let a = (2.0 * k * rho).sqrt() * (psi / 2.0).cos();
        Complex64::from_polar(1.0, k * rho * psi.cos()) * pre * (half + fresnel_integral(a))
    };
    u(phi - phi_inc) - u(phi + phi_inc)
}

pub fn cnorm(v: &CVec3) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}
