//! Run configuration: a flat `key = value` file whose keys double as CLI
//! overrides.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fields::RadioConfig;
use crate::geom::{Point3, Vec3};
use crate::shadow::DEFAULT_BATCH_CAP;
use crate::visibility::VisMode;
use crate::vistree::TreeLimits;

/// Observation points, explicit or generated.
#[derive(Debug, Clone, PartialEq)]
pub enum FopSpec {
    Points(Vec<Point3>),
    /// `n` points from `a` to `b`, both ends included.
    Line { a: Point3, b: Point3, n: usize },
    /// `nx × ny` points over a rectangle at height `z`, row-major in y.
    Grid {
        lo: (f64, f64),
        hi: (f64, f64),
        nx: usize,
        ny: usize,
        z: f64,
    },
}

impl Default for FopSpec {
    fn default() -> Self {
        FopSpec::Points(Vec::new())
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what}: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("{what}: `{s}` is not finite")));
    }
    Ok(v)
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what}: `{s}` is not a non-negative integer")))
}

/// Parses `x,y,z`.
pub fn parse_point(s: &str) -> Result<Point3> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| parse_f64(c, "point"))
        .collect::<Result<_>>()?;
    if v.len() != 3 {
        return Err(Error::Config(format!("expected x,y,z, got `{s}`")));
    }
    Ok(Point3::new(v[0], v[1], v[2]))
}

fn parse_pair<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<(T, T)> {
    let mut it = s.split(',');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((f(a)?, f(b)?)),
        _ => Err(Error::Config(format!("expected two comma-separated values, got `{s}`"))),
    }
}

impl FopSpec {
    /// `x0,y0,z0:x1,y1,z1:N`.
    pub fn parse_line(s: &str) -> Result<FopSpec> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(Error::Config(format!("fops line must be x0,y0,z0:x1,y1,z1:N, got `{s}`")));
        };
        Ok(FopSpec::Line {
            a: parse_point(a)?,
            b: parse_point(b)?,
            n: parse_usize(n, "fops line count")?,
        })
    }

    /// `xmin,ymin:xmax,ymax:NX,NY:z`.
    pub fn parse_grid(s: &str) -> Result<FopSpec> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n, z] = parts[..] else {
            return Err(Error::Config(format!(
                "fops grid must be xmin,ymin:xmax,ymax:NX,NY:z, got `{s}`"
            )));
        };
        let (nx, ny) = parse_pair(n, |c| parse_usize(c, "fops grid count"))?;
        Ok(FopSpec::Grid {
            lo: parse_pair(lo, |c| parse_f64(c, "fops grid"))?,
            hi: parse_pair(hi, |c| parse_f64(c, "fops grid"))?,
            nx,
            ny,
            z: parse_f64(z, "fops grid height")?,
        })
    }

    pub fn points(&self) -> Vec<Point3> {
        let lerp = |a: f64, b: f64, i: usize, n: usize| {
            if n <= 1 {
                a
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        };
        match self {
            FopSpec::Points(p) => p.clone(),
            FopSpec::Line { a, b, n } => (0..*n)
                .map(|i| Point3::new(lerp(a.x, b.x, i, *n), lerp(a.y, b.y, i, *n), lerp(a.z, b.z, i, *n)))
                .collect(),
            FopSpec::Grid { lo, hi, nx, ny, z } => (0..*ny)
                .flat_map(|j| (0..*nx).map(move |i| (i, j)))
                .map(|(i, j)| Point3::new(lerp(lo.0, hi.0, i, *nx), lerp(lo.1, hi.1, j, *ny), *z))
                .collect(),
        }
    }
}

/// Everything a run needs besides the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub radio: RadioConfig,
    pub tx: Point3,
    pub fops: FopSpec,
    pub limits: TreeLimits,
    pub batch_cap: usize,
    pub ars_enabled: bool,
    pub vis_mode: VisMode,
    pub vis_cache: Option<PathBuf>,
    /// Scene generator seed, recorded for provenance of generated scenes.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Overlap shadow testing of one batch with fields of the previous one.
    pub pipelined: bool,
    /// Tree arena budget in bytes, per partition.
    pub memory_budget: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            radio: RadioConfig::default(),
            tx: Point3::new(0.0, 0.0, 10.0),
            fops: FopSpec::default(),
            limits: TreeLimits::default(),
            batch_cap: DEFAULT_BATCH_CAP,
            ars_enabled: true,
            vis_mode: VisMode::PlaneCull,
            vis_cache: None,
            seed: 1,
            workers: 0,
            pipelined: true,
            memory_budget: None,
        }
    }
}

fn parse_bool(s: &str, what: &str) -> Result<bool> {
    match s.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{what}: `{s}` is not a boolean"))),
    }
}

/// Byte count with an optional binary `k`, `m` or `g` suffix.
pub fn parse_bytes(s: &str) -> Result<u64> {
    let t = s.trim().to_ascii_lowercase();
    let t = t.strip_suffix('b').unwrap_or(&t);
    let (num, mul) = match t.chars().last() {
        Some('k') => (&t[..t.len() - 1], 1u64 << 10),
        Some('m') => (&t[..t.len() - 1], 1 << 20),
        Some('g') => (&t[..t.len() - 1], 1 << 30),
        _ => (t, 1),
    };
    let v: u64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("memory budget: `{s}` is not a byte count")))?;
    v.checked_mul(mul)
        .ok_or_else(|| Error::Config(format!("memory budget `{s}` overflows")))
}

impl SimConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "freq" | "frequency" => self.radio.frequency = parse_f64(v, key)?,
            "power" => self.radio.power = parse_f64(v, key)?,
            "dipole_axis" => {
                let a = parse_point(v)?.coords;
                if a.norm() == 0.0 {
                    return Err(Error::Config("dipole axis must be non-zero".into()));
                }
                self.radio.dipole_axis = a.normalize();
            }
            "tx" => self.tx = parse_point(v)?,
            "fops_line" => self.fops = FopSpec::parse_line(v)?,
            "fops_grid" => self.fops = FopSpec::parse_grid(v)?,
            "max_bounce" | "max_reflections" => {
                self.limits.max_reflections = u8::try_from(parse_usize(v, key)?)
                    .map_err(|_| Error::Config(format!("{key}: `{v}` too large")))?
            }
            "max_diff" | "max_diffractions" => {
                self.limits.max_diffractions = u8::try_from(parse_usize(v, key)?)
                    .map_err(|_| Error::Config(format!("{key}: `{v}` too large")))?
            }
            "partitions" => self.limits.partition_count = parse_usize(v, key)?,
            "batch_cap" => self.batch_cap = parse_usize(v, key)?,
            "ars" => self.ars_enabled = parse_bool(v, key)?,
            "vis_mode" => self.vis_mode = v.parse()?,
            "vis_cache" => self.vis_cache = Some(PathBuf::from(v)),
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("seed: `{v}`")))?,
            "workers" => self.workers = parse_usize(v, key)?,
            "pipeline" => self.pipelined = parse_bool(v, key)?,
            "memory_budget" => self.memory_budget = Some(parse_bytes(v)?),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every setting of a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected key = value, got `{line}`"),
                });
            };
            self.set(k, v).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        self.limits.validate()?;
        if self.batch_cap == 0 {
            return Err(Error::Config("batch cap must be at least 1".into()));
        }
        if !(self.tx.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Config("transmitter position is not finite".into()));
        }
        Ok(())
    }

    pub fn fop_points(&self) -> Vec<Point3> {
        self.fops.points()
    }

    pub fn dipole_axis(&self) -> Vec3 {
        self.radio.dipole_axis
    }
}
