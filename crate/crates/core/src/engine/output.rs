//! CSV field tables, JSON summaries and stats files.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::engine::{RunResult, RunStats};
use crate::error::{Error, Result};
use crate::fields::{db_uv, FieldSample};
use crate::geom::Point3;

pub const CSV_HEADER: &str = "fop_index,x,y,z,Ex_re,Ex_im,Ey_re,Ey_im,Ez_re,Ez_im,Emag_V_per_m,Emag_dBuV_per_m,path_count";

/// Writes the per-FOP table. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_csv<W: Write>(w: W, fops: &[Point3], samples: &[FieldSample]) -> Result<()> {
    if fops.len() != samples.len() {
        return Err(Error::Field(format!(
            "{} FOPs but {} samples",
            fops.len(),
            samples.len()
        )));
    }
    let mut w = BufWriter::new(w);
    writeln!(w, "{CSV_HEADER}")?;
    for (p, s) in fops.iter().zip(samples) {
        let m = s.magnitude();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.fop_index,
            p.x,
            p.y,
            p.z,
            s.e.x.re,
            s.e.x.im,
            s.e.y.re,
            s.e.y.im,
            s.e.z.re,
            s.e.z.im,
            m,
            db_uv(m),
            s.path_count
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path` as CSV and a JSON summary next to it with the same stem.
pub fn write_results(res: &RunResult, path: &Path) -> Result<()> {
    write_csv(std::fs::File::create(path)?, &res.fops, &res.samples)?;
    write_stats(&res.stats, &path.with_extension("json"))
}

pub fn write_stats(stats: &RunStats, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, stats)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub fop_index: u32,
    pub pos: [f64; 3],
    pub e: [f64; 6],
    pub magnitude: f64,
    pub db: f64,
    pub path_count: u32,
}

/// Parses a table written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: "<csv>".into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(bad(1, "missing header".into())),
    }
    lines
        .map(|(i, l)| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 13 {
                return Err(bad(i + 1, format!("expected 13 columns, got {}", c.len())));
            }
            let f = |k: usize| -> Result<f64> {
                c[k].parse().map_err(|_| bad(i + 1, format!("bad number `{}`", c[k])))
            };
            Ok(CsvRow {
                fop_index: c[0].parse().map_err(|_| bad(i + 1, "bad index".into()))?,
                pos: [f(1)?, f(2)?, f(3)?],
                e: [f(4)?, f(5)?, f(6)?, f(7)?, f(8)?, f(9)?],
                magnitude: f(10)?,
                db: f(11)?,
                path_count: c[12].parse().map_err(|_| bad(i + 1, "bad path count".into()))?,
            })
        })
        .collect()
}
