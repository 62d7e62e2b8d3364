//! Primitive-pair visibility relations and their on-disk cache.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::engine::Scene;
use crate::error::{Error, Result};
use crate::geom::{Edge, Facet, Point3};
use crate::par;
use crate::shadow::Accel;

/// Default sample count per primitive side in occlusion-sampling mode.
pub const DEFAULT_OCCLUSION_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisMode {
    /// Mutual-facing plane tests only; never drops a contributing pair.
    PlaneCull,
    /// Plane tests plus ray-cast sampling between primitive pairs. A pair
    /// whose samples are all blocked is dropped, which may lose paths.
    OcclusionSampling { samples: usize },
}

impl std::str::FromStr for VisMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane-cull" | "plane" => Ok(VisMode::PlaneCull),
            "occlusion" | "plane-cull+occlusion-sampling" => Ok(VisMode::OcclusionSampling {
                samples: DEFAULT_OCCLUSION_SAMPLES,
            }),
            _ => {
                if let Some(k) = s.strip_prefix("occlusion:") {
                    let samples: usize = k
                        .parse()
                        .map_err(|_| Error::Config(format!("bad sample count in `{s}`")))?;
                    if samples == 0 {
                        return Err(Error::Config("occlusion sample count must be > 0".into()));
                    }
                    return Ok(VisMode::OcclusionSampling { samples });
                }
                Err(Error::Config(format!(
                    "unknown visibility mode `{s}` (plane-cull|occlusion[:K])"
                )))
            }
        }
    }
}

impl std::fmt::Display for VisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VisMode::PlaneCull => write!(f, "plane-cull"),
            VisMode::OcclusionSampling { samples } => write!(f, "occlusion:{samples}"),
        }
    }
}

/// Dense row-major bit matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
        }
    }

    fn from_rows(rows: usize, cols: usize, data: Vec<Vec<u64>>) -> Self {
        let mut m = BitMatrix::new(rows, cols);
        for (r, row) in data.into_iter().enumerate() {
            let off = r * m.words_per_row;
            m.bits[off..off + m.words_per_row].copy_from_slice(&row);
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.words_per_row + c / 64] >> (c % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.bits[r * self.words_per_row + c / 64];
        if v {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column indices set in row `r`, ascending.
    pub fn row_ones(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        let off = r * self.words_per_row;
        self.bits[off..off + self.words_per_row]
            .iter()
            .enumerate()
            .flat_map(|(wi, &w)| {
                let mut w = w;
                std::iter::from_fn(move || {
                    if w == 0 {
                        return None;
                    }
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                })
            })
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Every bit set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }
}

fn row_bits(cols: usize, f: impl Fn(usize) -> bool) -> Vec<u64> {
    let mut row = vec![0u64; cols.div_ceil(64)];
    for c in 0..cols {
        if f(c) {
            row[c / 64] |= 1 << (c % 64);
        }
    }
    row
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityData {
    pub facet_facet: BitMatrix,
    pub facet_edge: BitMatrix,
    pub tx_facet: Vec<bool>,
    pub tx_edge: Vec<bool>,
    pub facet_fop: BitMatrix,
    pub edge_fop: BitMatrix,
}

impl VisibilityData {
    /// Every relation marked visible; the reference against which culling
    /// is checked.
    pub fn all_visible(n_facets: usize, n_edges: usize, n_fops: usize) -> Self {
        let full = |r: usize, c: usize| {
            BitMatrix::from_rows(r, c, (0..r).map(|_| row_bits(c, |_| true)).collect())
        };
        let mut facet_facet = full(n_facets, n_facets);
        for i in 0..n_facets {
            facet_facet.set(i, i, false);
        }
        VisibilityData {
            facet_facet,
            facet_edge: full(n_facets, n_edges),
            tx_facet: vec![true; n_facets],
            tx_edge: vec![true; n_edges],
            facet_fop: full(n_facets, n_fops),
            edge_fop: full(n_edges, n_fops),
        }
    }

    pub fn n_fops(&self) -> usize {
        self.facet_fop.cols()
    }

    /// Relation set inclusion, used to compare modes.
    pub fn is_subset_of(&self, o: &VisibilityData) -> bool {
        let vec_sub = |a: &[bool], b: &[bool]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| !x || *y);
        self.facet_facet.is_subset_of(&o.facet_facet)
            && self.facet_edge.is_subset_of(&o.facet_edge)
            && self.facet_fop.is_subset_of(&o.facet_fop)
            && self.edge_fop.is_subset_of(&o.edge_fop)
            && vec_sub(&self.tx_facet, &o.tx_facet)
            && vec_sub(&self.tx_edge, &o.tx_edge)
    }
}

/// Tolerance for "strictly in front" plane tests, scaled to the scene.
pub fn side_eps(scene: &Scene) -> f64 {
    1e-9 * scene.diameter().max(1.0)
}

#[inline]
fn in_front(f: &Facet, p: &Point3, eps: f64) -> bool {
    (p - f.v0).dot(&f.n) > eps
}

#[inline]
fn any_vertex_in_front(of: &Facet, fac: &Facet, eps: f64) -> bool {
    fac.vertices().iter().any(|v| in_front(of, v, eps))
}

fn facet_edge_plane(f: &Facet, e: &Edge, eps: f64) -> bool {
    (in_front(f, &e.p1, eps) || in_front(f, &e.p2, eps))
        && f.vertices().iter().any(|v| e.exterior_contains(v, eps))
}

/// Sample points on a facet: `k` interior points on a barycentric lattice.
fn facet_samples(f: &Facet, k: usize) -> Vec<Point3> {
    // smallest lattice order m with m(m+1)/2 >= k
    let mut m = 1;
    while m * (m + 1) / 2 < k {
        m += 1;
    }
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in 0..(m - i) {
            let u = (i as f64 + 1.0 / 3.0) / m as f64;
            let v = (j as f64 + 1.0 / 3.0) / m as f64;
            out.push(f.v0 + (f.v1 - f.v0) * u + (f.v2 - f.v0) * v);
        }
    }
    out
}

fn edge_samples(e: &Edge, k: usize) -> Vec<Point3> {
    (0..k).map(|i| e.point_at((i as f64 + 0.5) / k as f64)).collect()
}

struct Sampler<'a> {
    accel: &'a Accel,
    shrink: f64,
}

impl Sampler<'_> {
    /// True when at least one sample pair sees each other.
    fn any_clear(&self, a: &[Point3], b: &[Point3], ignore: &[usize]) -> bool {
        a.iter().any(|p| {
            b.iter().any(|q| {
                let d = q - p;
                let len = d.norm();
                if len <= 2.0 * self.shrink {
                    return true;
                }
                let u = d / len * self.shrink;
                !self.accel.occluded(&(p + u), &(q - u), ignore)
            })
        })
    }
}

/// Computes all visibility relations for one transmitter and FOP set.
pub fn precompute_visibility(
    scene: &Scene,
    accel: &Accel,
    tx: &Point3,
    fops: &[Point3],
    mode: VisMode,
) -> VisibilityData {
    let eps = side_eps(scene);
    let nf = scene.facets.len();
    let ne = scene.edges.len();
    let facets = &scene.facets;
    let edges = &scene.edges;

    let ff_rows = par::map_range(nf, |i| {
        row_bits(nf, |j| {
            i != j
                && any_vertex_in_front(&facets[i], &facets[j], eps)
                && any_vertex_in_front(&facets[j], &facets[i], eps)
        })
    });
    let fe_rows = par::map_range(nf, |i| row_bits(ne, |j| facet_edge_plane(&facets[i], &edges[j], eps)));
    let tx_facet: Vec<bool> = facets.iter().map(|f| in_front(f, tx, eps)).collect();
    let tx_edge: Vec<bool> = edges.iter().map(|e| e.exterior_contains(tx, eps)).collect();
    let nfop = fops.len();
    let ffop_rows = par::map_range(nf, |i| row_bits(nfop, |j| in_front(&facets[i], &fops[j], eps)));
    let efop_rows = par::map_range(ne, |i| row_bits(nfop, |j| edges[i].exterior_contains(&fops[j], eps)));

    let mut vis = VisibilityData {
        facet_facet: BitMatrix::from_rows(nf, nf, ff_rows),
        facet_edge: BitMatrix::from_rows(nf, ne, fe_rows),
        tx_facet,
        tx_edge,
        facet_fop: BitMatrix::from_rows(nf, nfop, ffop_rows),
        edge_fop: BitMatrix::from_rows(ne, nfop, efop_rows),
    };

    if let VisMode::OcclusionSampling { samples } = mode {
        occlusion_demote(scene, accel, tx, fops, samples, &mut vis);
    }
    vis
}

fn occlusion_demote(
    scene: &Scene,
    accel: &Accel,
    tx: &Point3,
    fops: &[Point3],
    k: usize,
    vis: &mut VisibilityData,
) {
    let s = Sampler {
        accel,
        shrink: 1e-6 * scene.diameter().max(1.0),
    };
    let fs: Vec<Vec<Point3>> = par::map(&scene.facets, |f| facet_samples(f, k));
    let fs_dense: Vec<Vec<Point3>> = par::map(&scene.facets, |f| facet_samples(f, k * k));
    let es: Vec<Vec<Point3>> = par::map(&scene.edges, |e| edge_samples(e, k));
    let edge_ignore = |e: &Edge| [e.face_a, e.face_b];
    let nf = scene.facets.len();
    let ne = scene.edges.len();
    let nfop = fops.len();

    // symmetric: sample each unordered pair once, then mirror
    let ff = &vis.facet_facet;
    let upper = par::map_range(nf, |i| {
        row_bits(nf, |j| j > i && ff.get(i, j) && s.any_clear(&fs[i], &fs[j], &[i, j]))
    });
    let upper = BitMatrix::from_rows(nf, nf, upper);
    let ff_rows = par::map_range(nf, |i| {
        row_bits(nf, |j| if j > i { upper.get(i, j) } else { j < i && upper.get(j, i) })
    });
    let fe = &vis.facet_edge;
    let fe_rows = par::map_range(nf, |i| {
        row_bits(ne, |j| {
            let e = &scene.edges[j];
            let [a, b] = edge_ignore(e);
            fe.get(i, j) && s.any_clear(&fs[i], &es[j], &[i, a, b])
        })
    });
    let tx_one = [*tx];
    let tx_facet: Vec<bool> = par::map_range(nf, |i| {
        vis.tx_facet[i] && s.any_clear(&tx_one, &fs_dense[i], &[i])
    });
    let tx_edge: Vec<bool> = par::map_range(ne, |j| {
        let [a, b] = edge_ignore(&scene.edges[j]);
        vis.tx_edge[j] && s.any_clear(&tx_one, &es[j], &[a, b])
    });
    let ffop = &vis.facet_fop;
    let ffop_rows = par::map_range(nf, |i| {
        row_bits(nfop, |j| ffop.get(i, j) && s.any_clear(&fops[j..j + 1], &fs_dense[i], &[i]))
    });
    let efop = &vis.edge_fop;
    let efop_rows = par::map_range(ne, |i| {
        let [a, b] = edge_ignore(&scene.edges[i]);
        row_bits(nfop, |j| efop.get(i, j) && s.any_clear(&fops[j..j + 1], &es[i], &[a, b]))
    });
    vis.facet_facet = BitMatrix::from_rows(nf, nf, ff_rows);
    vis.facet_edge = BitMatrix::from_rows(nf, ne, fe_rows);
    vis.tx_facet = tx_facet;
    vis.tx_edge = tx_edge;
    vis.facet_fop = BitMatrix::from_rows(nf, nfop, ffop_rows);
    vis.edge_fop = BitMatrix::from_rows(ne, nfop, efop_rows);
}

const CACHE_MAGIC: &[u8; 8] = b"ITVIS\x00\x01\n";

/// Cache key: scene content, transmitter, FOPs and mode.
pub fn cache_key(scene: &Scene, tx: &Point3, fops: &[Point3], mode: VisMode) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(scene.content_hash().as_bytes());
    for c in tx.iter() {
        h.update(c.to_bits().to_le_bytes());
    }
    h.update((fops.len() as u64).to_le_bytes());
    for p in fops {
        for c in p.iter() {
            h.update(c.to_bits().to_le_bytes());
        }
    }
    h.update(mode.to_string().as_bytes());
    h.finalize().into()
}

fn write_matrix(w: &mut impl Write, m: &BitMatrix) -> std::io::Result<()> {
    w.write_all(&(m.rows as u64).to_le_bytes())?;
    w.write_all(&(m.cols as u64).to_le_bytes())?;
    for word in &m.bits {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

fn write_bools(w: &mut impl Write, v: &[bool]) -> std::io::Result<()> {
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    let bytes: Vec<u8> = v.iter().map(|&b| b as u8).collect();
    w.write_all(&bytes)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_matrix(r: &mut impl Read) -> Result<BitMatrix> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let mut m = BitMatrix::new(rows, cols);
    for w in m.bits.iter_mut() {
        *w = read_u64(r)?;
    }
    Ok(m)
}

fn read_bools(r: &mut impl Read) -> Result<Vec<bool>> {
    let n = read_u64(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    Ok(buf.into_iter().map(|b| b != 0).collect())
}

pub fn save_cache(path: &Path, key: &[u8; 32], vis: &VisibilityData) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(key)?;
    write_matrix(&mut w, &vis.facet_facet)?;
    write_matrix(&mut w, &vis.facet_edge)?;
    write_bools(&mut w, &vis.tx_facet)?;
    write_bools(&mut w, &vis.tx_edge)?;
    write_matrix(&mut w, &vis.facet_fop)?;
    write_matrix(&mut w, &vis.edge_fop)?;
    w.flush()?;
    Ok(())
}

/// Loads a cache file. `Ok(None)` when the file was written for another key.
pub fn load_cache(path: &Path, key: &[u8; 32]) -> Result<Option<VisibilityData>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Cache(format!("{} is not a visibility cache", path.display())));
    }
    let mut stored = [0u8; 32];
    r.read_exact(&mut stored)
        .map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    if &stored != key {
        return Ok(None);
    }
    Ok(Some(VisibilityData {
        facet_facet: read_matrix(&mut r)?,
        facet_edge: read_matrix(&mut r)?,
        tx_facet: read_bools(&mut r)?,
        tx_edge: read_bools(&mut r)?,
        facet_fop: read_matrix(&mut r)?,
        edge_fop: read_matrix(&mut r)?,
    }))
}

/// Computes visibility, reusing `cache` when it matches and refreshing it
/// otherwise. Returns the data and whether the cache was hit.
pub fn visibility_cached(
    scene: &Scene,
    accel: &Accel,
    tx: &Point3,
    fops: &[Point3],
    mode: VisMode,
    cache: Option<&Path>,
) -> Result<(VisibilityData, bool)> {
    let Some(path) = cache else {
        return Ok((precompute_visibility(scene, accel, tx, fops, mode), false));
    };
    let key = cache_key(scene, tx, fops, mode);
    if path.exists() {
        match load_cache(path, &key) {
            Ok(Some(v)) => return Ok((v, true)),
            Ok(None) => log::info!("visibility cache {} is stale; recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable visibility cache: {e}"),
        }
    }
    let vis = precompute_visibility(scene, accel, tx, fops, mode);
    save_cache(path, &key, &vis)?;
    Ok((vis, false))
}
