//! Scene container, plain-text mesh I/O and wedge extraction.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{Edge, Facet, Point3, Vec3};

/// Relative tolerance under which two adjacent facets count as coplanar.
const COPLANAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Scene {
    pub facets: Vec<Facet>,
    pub edges: Vec<Edge>,
    pub bounds: (Point3, Point3),
}

impl Scene {
    /// Builds facets from indexed triangles and extracts diffracting edges.
    pub fn from_triangles(vertices: &[Point3], triangles: &[[usize; 3]]) -> Result<Scene> {
        let mut facets = Vec::with_capacity(triangles.len());
        for (id, t) in triangles.iter().enumerate() {
            for &i in t {
                if i >= vertices.len() {
                    return Err(Error::Degenerate(format!(
                        "triangle {id} references vertex {i} of {}",
                        vertices.len()
                    )));
                }
            }
            facets.push(Facet::new(id, vertices[t[0]], vertices[t[1]], vertices[t[2]])?);
        }
        let edges = extract_edges(&facets)?;
        Ok(Scene::new(facets, edges))
    }

    pub fn new(facets: Vec<Facet>, edges: Vec<Edge>) -> Scene {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for f in &facets {
            for v in f.vertices() {
                lo = lo.inf(&v);
                hi = hi.sup(&v);
            }
        }
        if facets.is_empty() {
            lo = Point3::origin();
            hi = Point3::origin();
        }
        Scene {
            facets,
            edges,
            bounds: (lo, hi),
        }
    }

    pub fn empty() -> Scene {
        Scene::new(Vec::new(), Vec::new())
    }

    pub fn diameter(&self) -> f64 {
        (self.bounds.1 - self.bounds.0).norm()
    }

    /// SHA-256 over facet vertex bits and edge parameters, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.facets.len() as u64).to_le_bytes());
        for f in &self.facets {
            for v in f.vertices() {
                for c in v.iter() {
                    h.update(c.to_bits().to_le_bytes());
                }
            }
        }
        h.update((self.edges.len() as u64).to_le_bytes());
        for e in &self.edges {
            for c in e.p1.iter().chain(e.p2.iter()) {
                h.update(c.to_bits().to_le_bytes());
            }
            h.update(e.nwedge.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let mut s = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    /// Welded vertex list and triangle indices of the scene's facets.
    pub fn indexed(&self) -> (Vec<Point3>, Vec<[usize; 3]>) {
        let mut verts = Vec::new();
        let mut index: HashMap<[u64; 3], usize> = HashMap::new();
        let mut tris = Vec::with_capacity(self.facets.len());
        for f in &self.facets {
            let mut tri = [0; 3];
            for (k, v) in f.vertices().iter().enumerate() {
                let key = point_key(v);
                tri[k] = *index.entry(key).or_insert_with(|| {
                    verts.push(*v);
                    verts.len() - 1
                });
            }
            tris.push(tri);
        }
        (verts, tris)
    }
}

fn point_key(p: &Point3) -> [u64; 3] {
    // +0.0 and -0.0 must weld together
    [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits)
}

/// Reads the `v x y z` / `f i j k` mesh format (one-based indices).
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text, path)
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Scene> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    let mut tri_lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" => {
                let xs: Vec<f64> = it
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| perr(lineno, format!("bad vertex coordinate: {e}")))?;
                if xs.len() < 3 || xs.iter().take(3).any(|x| !x.is_finite()) {
                    return Err(perr(lineno, "vertex needs three finite coordinates".into()));
                }
                verts.push(Point3::new(xs[0], xs[1], xs[2]));
            }
            "f" => {
                let idx: Vec<usize> = it
                    .map(|s| {
                        s.split('/')
                            .next()
                            .unwrap_or("")
                            .parse::<usize>()
                            .map_err(|e| perr(lineno, format!("bad face index `{s}`: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(perr(lineno, format!("face has {} indices, expected 3", idx.len())));
                }
                let mut tri = [0usize; 3];
                for (k, &j) in idx.iter().enumerate() {
                    if j == 0 || j > verts.len() {
                        return Err(perr(
                            lineno,
                            format!("vertex index {j} out of range (1..={})", verts.len()),
                        ));
                    }
                    tri[k] = j - 1;
                }
                tris.push(tri);
                tri_lines.push(lineno);
            }
            _ => log::debug!("{}:{lineno}: ignoring `{tag}` line", path.display()),
        }
    }
    let mut facets = Vec::with_capacity(tris.len());
    for (id, t) in tris.iter().enumerate() {
        let f = Facet::new(id, verts[t[0]], verts[t[1]], verts[t[2]])
            .map_err(|e| perr(tri_lines[id], e.to_string()))?;
        facets.push(f);
    }
    let edges = extract_edges(&facets)?;
    Ok(Scene::new(facets, edges))
}

pub fn write_mesh(scene: &Scene, path: &Path) -> Result<()> {
    let (verts, tris) = scene.indexed();
    let mut s = String::new();
    let _ = writeln!(s, "# {} vertices, {} facets", verts.len(), tris.len());
    for v in &verts {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &tris {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Unit vector in the facet plane, perpendicular to segment `a`–`b`,
/// pointing from the segment toward the facet interior.
fn inward_dir(a: &Point3, b: &Point3, third: &Point3) -> Vec3 {
    let ez = (b - a).normalize();
    let w = third - a;
    (w - ez * w.dot(&ez)).normalize()
}

/// Extracts wedges from shared segments. Convex junctions become wedges
/// with `n = 1 + angle(nA, nB)/π`; flat and concave junctions are skipped;
/// segments on a single facet become half-planes.
pub fn extract_edges(facets: &[Facet]) -> Result<Vec<Edge>> {
    let mut ids: HashMap<[u64; 3], usize> = HashMap::new();
    let mut pts: Vec<Point3> = Vec::new();
    let mut vid = |p: &Point3| {
        *ids.entry(point_key(p)).or_insert_with(|| {
            pts.push(*p);
            pts.len() - 1
        })
    };
    // segment (lo, hi) -> [(facet, third vertex id)]
    let mut segs: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    let mut order: Vec<(usize, usize)> = Vec::new();
    for f in facets {
        let v = [vid(&f.v0), vid(&f.v1), vid(&f.v2)];
        for k in 0..3 {
            let (a, b, c) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
            let key = (a.min(b), a.max(b));
            let entry = segs.entry(key).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push((f.id, c));
        }
    }

    let offenders: Vec<String> = order
        .iter()
        .filter(|k| segs[k].len() > 2)
        .map(|k| {
            let fs: Vec<String> = segs[k].iter().map(|x| x.0.to_string()).collect();
            format!("{:?}-{:?} (facets {})", pts[k.0], pts[k.1], fs.join(","))
        })
        .collect();
    if !offenders.is_empty() {
        return Err(Error::NonManifold(offenders.join("; ")));
    }

    let mut edges = Vec::new();
    for key in order {
        let users = &segs[&key];
        let (a, b) = (pts[key.0], pts[key.1]);
        let edge = match users.as_slice() {
            [(fa, ca)] => {
                let f = &facets[*fa];
                let u = inward_dir(&a, &b, &pts[*ca]);
                Some(oriented_edge(a, b, 2.0, f, f, u, f.n, -f.n))
            }
            [(fa, ca), (fb, cb)] => {
                let (fa, ca, fb, cb) = if fa <= fb { (fa, ca, fb, cb) } else { (fb, cb, fa, ca) };
                let f = &facets[*fa];
                let g = &facets[*fb];
                let ua = inward_dir(&a, &b, &pts[*ca]);
                let ub = inward_dir(&a, &b, &pts[*cb]);
                // Height of g's interior direction over f's plane: negative
                // means the junction is convex, zero means flat.
                let h = f.n.dot(&ub);
                if h.abs() <= COPLANAR_TOL || h > 0.0 {
                    None
                } else {
                    let ang = f.n.dot(&g.n).clamp(-1.0, 1.0).acos();
                    Some(oriented_edge(a, b, 1.0 + ang / std::f64::consts::PI, f, g, ua, f.n, g.n))
                }
            }
            _ => None,
        };
        if let Some(mut e) = edge {
            if e.validate().is_ok() {
                e.id = edges.len();
                edges.push(e);
            }
        }
    }
    Ok(edges)
}

#[allow(clippy::too_many_arguments)]
fn oriented_edge(
    a: Point3,
    b: Point3,
    n: f64,
    fa: &Facet,
    fb: &Facet,
    face0_dir: Vec3,
    normal_a: Vec3,
    normal_b: Vec3,
) -> Edge {
    // Orient so that ey = ez × ex points to the front of face A; the
    // exterior sector then sweeps from A at φ = 0 to B at φ = nπ.
    let ez = b - a;
    let (p1, p2) = if ez.cross(&face0_dir).dot(&normal_a) >= 0.0 {
        (a, b)
    } else {
        (b, a)
    };
    Edge {
        id: 0,
        p1,
        p2,
        nwedge: n,
        face_a: fa.id,
        face_b: fb.id,
        face0_dir,
        normal_a,
        normal_b,
    }
}

/// Closed axis-aligned box as 12 outward-facing triangles.
pub fn box_triangles(lo: Point3, hi: Point3) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let c = |x: bool, y: bool, z: bool| {
        Point3::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    let verts = vec![
        c(false, false, false),
        c(true, false, false),
        c(true, true, false),
        c(false, true, false),
        c(false, false, true),
        c(true, false, true),
        c(true, true, true),
        c(false, true, true),
    ];
    let quads = [
        [0, 3, 2, 1], // bottom, -z
        [4, 5, 6, 7], // top, +z
        [0, 1, 5, 4], // -y
        [1, 2, 6, 5], // +x
        [2, 3, 7, 6], // +y
        [3, 0, 4, 7], // -x
    ];
    let mut tris = Vec::with_capacity(12);
    for q in quads {
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    (verts, tris)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{edge_frame, azimuth};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn unit_square_has_four_half_planes() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n";
        let s = parse_mesh(text, Path::new("sq.obj")).unwrap();
        assert_eq!(s.facets.len(), 2);
        assert_eq!(s.edges.len(), 4);
        assert!(s.edges.iter().all(|e| e.nwedge == 2.0 && e.is_half_plane()));
    }

    #[test]
    fn box_has_twelve_right_angle_wedges() {
        let (v, t) = box_triangles(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, 3.0));
        let s = Scene::from_triangles(&v, &t).unwrap();
        assert_eq!(s.facets.len(), 12);
        assert_eq!(s.edges.len(), 12);
        for e in &s.edges {
            assert_abs_diff_eq!(e.nwedge, 1.5, epsilon = 1e-12);
            // face B sits at φ = nπ in the wedge frame
            let ef = edge_frame(e).unwrap();
            let fb = &s.facets[e.face_b];
            let third = fb
                .vertices()
                .into_iter()
                .max_by(|a, b| {
                    let da = ef.to_local(a).x.hypot(ef.to_local(a).y);
                    let db = ef.to_local(b).x.hypot(ef.to_local(b).y);
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_abs_diff_eq!(azimuth(&ef.to_local(&third)), e.nwedge * PI, epsilon = 1e-9);
            // outward normals: the box centre is behind every face
            let c = Point3::new(0.5, 1.0, 1.5);
            assert!((c - e.p1).dot(&e.normal_a) < 0.0 && (c - e.p1).dot(&e.normal_b) < 0.0);
        }
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n", Path::new("m.obj")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("{e}"),
        }
        assert!(matches!(
            parse_mesh("v 0 0 x\n", Path::new("m.obj")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn non_manifold_segment_is_reported() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\n\
                    f 1 2 3\nf 2 1 4\nf 1 2 5\n";
        assert!(matches!(
            parse_mesh(text, Path::new("nm.obj")),
            Err(Error::NonManifold(_))
        ));
    }

    #[test]
    fn mesh_round_trip_preserves_hash() {
        let (v, t) = box_triangles(Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 2.0, 3.5));
        let s = Scene::from_triangles(&v, &t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("box.obj");
        write_mesh(&s, &p).unwrap();
        let back = load_scene(&p).unwrap();
        assert_eq!(back.content_hash(), s.content_hash());
        assert_eq!(back.edges.len(), 12);
    }
}
