//! Procedural street scenes: a straight canyon and a Manhattan grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{box_triangles, Scene};
use crate::error::{Error, Result};
use crate::geom::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Canyon,
    Grid,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canyon" => Ok(SceneKind::Canyon),
            "grid" => Ok(SceneKind::Grid),
            _ => Err(Error::Config(format!("unknown scene kind `{s}` (canyon|grid)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub kind: SceneKind,
    /// Canyon: buildings per side. Grid: block rows.
    pub rows: usize,
    /// Grid: block columns. Ignored for canyons.
    pub cols: usize,
    /// Building footprint side, meters.
    pub block: f64,
    /// Street width, meters.
    pub street: f64,
    /// Gap between neighbouring canyon buildings, meters.
    pub gap: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Grid: each block moves by up to this fraction of the street width
    /// along x and y, breaking straight sightlines. Must be below 0.5.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            kind: SceneKind::Grid,
            rows: 5,
            cols: 5,
            block: 40.0,
            street: 20.0,
            gap: 5.0,
            h_min: 10.0,
            h_max: 40.0,
            jitter: 0.0,
            seed: 1,
        }
    }
}

struct Builder {
    verts: Vec<Point3>,
    tris: Vec<[usize; 3]>,
}

impl Builder {
    fn add_box(&mut self, lo: Point3, hi: Point3) {
        let (v, t) = box_triangles(lo, hi);
        let base = self.verts.len();
        self.verts.extend(v);
        self.tris.extend(t.iter().map(|t| t.map(|i| i + base)));
    }

    fn add_ground(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        let base = self.verts.len();
        self.verts.extend([
            Point3::new(x0, y0, 0.0),
            Point3::new(x1, y0, 0.0),
            Point3::new(x1, y1, 0.0),
            Point3::new(x0, y1, 0.0),
        ]);
        self.tris.push([base, base + 1, base + 2]);
        self.tris.push([base, base + 2, base + 3]);
    }
}

/// Generates a scene; identical parameters give identical scenes.
pub fn generate_scene(p: &GenParams) -> Result<Scene> {
    let positive = [p.block, p.street, p.h_min, p.h_max];
    if positive.iter().any(|x| !(x.is_finite() && *x > 0.0))
        || p.h_max < p.h_min
        || p.gap < 0.0
        || !(0.0..0.5).contains(&p.jitter)
    {
        return Err(Error::Degenerate(format!(
            "scene dimensions must be positive with h_min <= h_max: {p:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let height = |rng: &mut ChaCha8Rng| {
        if p.h_max > p.h_min {
            rng.random_range(p.h_min..=p.h_max)
        } else {
            p.h_min
        }
    };
    let mut b = Builder {
        verts: Vec::new(),
        tris: Vec::new(),
    };
    match p.kind {
        SceneKind::Canyon => {
            // street along x, centred on y = 0
            let pitch = p.block + p.gap;
            let len = p.rows as f64 * pitch - p.gap;
            let x0 = -0.5 * len;
            let half = 0.5 * p.street;
            for side in [-1.0, 1.0] {
                for i in 0..p.rows {
                    let xa = x0 + i as f64 * pitch;
                    let (ya, yb) = if side < 0.0 {
                        (-half - p.block, -half)
                    } else {
                        (half, half + p.block)
                    };
                    b.add_box(Point3::new(xa, ya, 0.0), Point3::new(xa + p.block, yb, height(&mut rng)));
                }
            }
            let ext_x = 0.5 * len.max(0.0) + p.street;
            let ext_y = if p.rows > 0 { half + p.block + p.street } else { p.street };
            b.add_ground(-ext_x, -ext_y, ext_x, ext_y);
        }
        SceneKind::Grid => {
            let pitch = p.block + p.street;
            let w = p.cols as f64 * pitch - p.street;
            let h = p.rows as f64 * pitch - p.street;
            let (x0, y0) = (-0.5 * w, -0.5 * h);
            for r in 0..p.rows {
                for c in 0..p.cols {
                    let mut xa = x0 + c as f64 * pitch;
                    let mut ya = y0 + r as f64 * pitch;
                    let h = height(&mut rng);
                    if p.jitter > 0.0 {
                        let j = p.jitter * p.street;
                        xa += rng.random_range(-j..=j);
                        ya += rng.random_range(-j..=j);
                    }
                    b.add_box(Point3::new(xa, ya, 0.0), Point3::new(xa + p.block, ya + p.block, h));
                }
            }
            let ex = 0.5 * w.max(0.0) + p.street;
            let ey = 0.5 * h.max(0.0) + p.street;
            b.add_ground(-ex, -ey, ex, ey);
        }
    }
    Scene::from_triangles(&b.verts, &b.tris)
}
