//! The end-to-end run: visibility, per-partition trees, then shadow testing
//! and field computation as a two-stage pipeline.

use std::io::Write;
use std::sync::mpsc;
use std::time::Instant;

use serde::Serialize;

use crate::engine::{Scene, SimConfig};
use crate::error::{Error, Result};
use crate::fields::{propagate_path, Accumulator, Contribution, FieldSample};
use crate::geom::Point3;
use crate::par::{self, Pool};
use crate::shadow::{attach_fops, build_accel, Accel, RayPath, Tracer};
use crate::visibility::{visibility_cached, VisibilityData};
use crate::vistree::{BuildOptions, TreeBuilder, TreeStats, VisNode, ROOT};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub visibility_s: f64,
    pub tree_s: f64,
    pub shadow_s: f64,
    pub fields_s: f64,
    pub total_s: f64,
}

/// Tree size and time with and without rectangle shrinkage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArsComparison {
    pub nodes_ars: usize,
    pub nodes_no_ars: usize,
    /// `nodes_no_ars / nodes_ars`.
    pub node_ratio: f64,
    /// Tree, shadow and field time, visibility excluded.
    pub time_ars_s: f64,
    pub time_no_ars_s: f64,
    /// `time_no_ars_s / time_ars_s`.
    pub time_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub facets: usize,
    pub edges: usize,
    pub fops: usize,
    pub workers: usize,
    pub ars: bool,
    pub pipelined: bool,
    pub vis_cache_hit: bool,
    pub tree: TreeStats,
    /// Largest single partition arena, in nodes.
    pub peak_nodes: usize,
    pub peak_tree_bytes: u64,
    /// (node, FOP) pairs handed to shadow testing, direct paths included.
    pub st_pairs: usize,
    /// Pairs whose geometry backtraced to a valid path.
    pub paths_valid: usize,
    pub paths_passed: usize,
    pub batches: usize,
    pub timings: Timings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ars_comparison: Option<ArsComparison>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub fops: Vec<Point3>,
    pub samples: Vec<FieldSample>,
    pub stats: RunStats,
}

/// A backtraced path and its shadow-test outcome.
struct Traced {
    path: RayPath,
    pass: bool,
}

enum Msg {
    Batch(Vec<Traced>),
    PartitionEnd,
}

#[derive(Default)]
struct ProducerStats {
    tree: TreeStats,
    st_pairs: usize,
    batches: usize,
    tree_s: f64,
    shadow_s: f64,
}

struct Ctx<'a> {
    scene: &'a Scene,
    cfg: &'a SimConfig,
    vis: &'a VisibilityData,
    accel: &'a Accel,
    fops: &'a [Point3],
    pool: &'a Pool,
}

fn max_nodes(cfg: &SimConfig) -> Option<usize> {
    cfg.memory_budget
        .map(|b| (b / std::mem::size_of::<VisNode>() as u64).min(usize::MAX as u64) as usize)
}

impl Ctx<'_> {
    /// Stage A: builds each partition tree, streams its batches through
    /// backtracing and shadow testing, and hands results to `sink`. Stops
    /// early when `sink` returns false.
    fn produce(&self, mut sink: impl FnMut(Msg) -> bool) -> Result<ProducerStats> {
        let mut st = ProducerStats::default();
        let opts = BuildOptions {
            ars: self.cfg.ars_enabled,
            max_nodes: max_nodes(self.cfg),
        };
        let builder = TreeBuilder::new(self.scene, self.vis, self.cfg.tx, self.cfg.limits, opts);
        let tracer = Tracer::new(self.scene, self.accel);
        let tx = self.cfg.tx;
        for (pi, roots) in builder.partitions().iter().enumerate() {
            let t0 = Instant::now();
            let tree = self.pool.install(|| builder.build_partition(roots))?;
            st.tree_s += t0.elapsed().as_secs_f64();
            st.tree.add(&tree);
            log::debug!("partition {pi}: {} nodes", tree.nodes.len());
            for batch in attach_fops(&tree, self.vis, self.fops.len(), self.cfg.batch_cap, pi == 0) {
                let t0 = Instant::now();
                st.st_pairs += batch.pairs.len();
                st.batches += 1;
                let traced: Vec<Option<Traced>> = self.pool.install(|| {
                    par::map(&batch.pairs, |&(node, f)| {
                        let path = tracer.backtrace(&tree, node, &tx, &self.fops[f as usize], f)?;
                        let pass = tracer.shadow_test(&path);
                        Some(Traced { path, pass })
                    })
                });
                st.shadow_s += t0.elapsed().as_secs_f64();
                if !sink(Msg::Batch(traced.into_iter().flatten().collect())) {
                    return Ok(st);
                }
            }
            if !sink(Msg::PartitionEnd) {
                return Ok(st);
            }
        }
        Ok(st)
    }
}

/// Stage B: fields of passing paths, summed per partition.
struct Consumer<'a, 'w> {
    scene: &'a Scene,
    cfg: &'a SimConfig,
    pool: &'a Pool,
    dump: Option<&'w mut dyn Write>,
    acc: Accumulator,
    pending: Vec<Contribution>,
    valid: usize,
    passed: usize,
    fields_s: f64,
}

impl Consumer<'_, '_> {
    fn take(&mut self, msg: Msg) -> Result<()> {
        match msg {
            Msg::Batch(traced) => {
                let t0 = Instant::now();
                self.valid += traced.len();
                if let Some(w) = self.dump.as_deref_mut() {
                    for t in &traced {
                        write_path_record(w, &t.path, t.pass)?;
                    }
                }
                let passing: Vec<RayPath> = traced.into_iter().filter(|t| t.pass).map(|t| t.path).collect();
                self.passed += passing.len();
                let (scene, radio) = (self.scene, &self.cfg.radio);
                let contribs: Vec<Result<Contribution>> = self.pool.install(|| {
                    par::map(&passing, |p| {
                        Ok(Contribution {
                            fop: p.fop_index,
                            key: p.key(),
                            e: propagate_path(p, scene, radio)?,
                        })
                    })
                });
                for c in contribs {
                    self.pending.push(c?);
                }
                self.fields_s += t0.elapsed().as_secs_f64();
            }
            Msg::PartitionEnd => self.acc.add(std::mem::take(&mut self.pending)),
        }
        Ok(())
    }
}

/// One JSON line describing a backtraced path.
fn write_path_record(w: &mut dyn Write, p: &RayPath, pass: bool) -> Result<()> {
    let seq: Vec<String> = p.hops.iter().map(|h| format!("{}{}", h.kind.tag(), h.prim)).collect();
    let pts: Vec<[f64; 3]> = p.points().iter().map(|q| [q.x, q.y, q.z]).collect();
    let rec = serde_json::json!({
        "fop": p.fop_index,
        "node": if p.node == ROOT { None } else { Some(p.node) },
        "sequence": seq,
        "points": pts,
        "pass": pass,
    });
    serde_json::to_writer(&mut *w, &rec)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn run(scene: &Scene, cfg: &SimConfig) -> Result<RunResult> {
    run_with_dump(scene, cfg, None)
}

/// Runs the simulation, optionally writing every backtraced path to `dump`
/// as JSON lines.
pub fn run_with_dump(scene: &Scene, cfg: &SimConfig, dump: Option<&mut dyn Write>) -> Result<RunResult> {
    cfg.validate()?;
    let t_start = Instant::now();
    let pool = Pool::new(cfg.workers);
    let fops = cfg.fop_points();
    let accel = build_accel(&scene.facets);

    let t0 = Instant::now();
    let (vis, hit) = pool.install(|| {
        visibility_cached(scene, &accel, &cfg.tx, &fops, cfg.vis_mode, cfg.vis_cache.as_deref())
    })?;
    let visibility_s = t0.elapsed().as_secs_f64();

    let ctx = Ctx {
        scene,
        cfg,
        vis: &vis,
        accel: &accel,
        fops: &fops,
        pool: &pool,
    };
    let mut cons = Consumer {
        scene,
        cfg,
        pool: &pool,
        dump,
        acc: Accumulator::new(fops.len()),
        pending: Vec::new(),
        valid: 0,
        passed: 0,
        fields_s: 0.0,
    };

    let pst = if cfg.pipelined {
        std::thread::scope(|s| -> Result<ProducerStats> {
            let (tx, rx) = mpsc::sync_channel::<Msg>(1);
            let producer = s.spawn(|| ctx.produce(move |m| tx.send(m).is_ok()));
            let mut consumed = Ok(());
            for msg in rx {
                consumed = cons.take(msg);
                if consumed.is_err() {
                    break;
                }
            }
            let produced = producer
                .join()
                .map_err(|_| Error::Config("shadow-test stage panicked".into()))?;
            consumed?;
            produced
        })?
    } else {
        let mut consumed = Ok(());
        let pst = ctx.produce(|m| {
            consumed = cons.take(m);
            consumed.is_ok()
        })?;
        consumed?;
        pst
    };
    if let Some(w) = cons.dump.as_deref_mut() {
        w.flush()?;
    }

    let peak_nodes = pst.tree.per_partition.iter().copied().max().unwrap_or(0);
    let stats = RunStats {
        facets: scene.facets.len(),
        edges: scene.edges.len(),
        fops: fops.len(),
        workers: pool.workers(),
        ars: cfg.ars_enabled,
        pipelined: cfg.pipelined,
        vis_cache_hit: hit,
        peak_nodes,
        peak_tree_bytes: (peak_nodes * std::mem::size_of::<VisNode>()) as u64,
        tree: pst.tree,
        st_pairs: pst.st_pairs,
        paths_valid: cons.valid,
        paths_passed: cons.passed,
        batches: pst.batches,
        timings: Timings {
            visibility_s,
            tree_s: pst.tree_s,
            shadow_s: pst.shadow_s,
            fields_s: cons.fields_s,
            total_s: t_start.elapsed().as_secs_f64(),
        },
        ars_comparison: None,
    };
    Ok(RunResult {
        fops,
        samples: cons.acc.finish(),
        stats,
    })
}

/// Runs with ARS on and off and reports the size and time ratios. Returns
/// the ARS run with the comparison attached.
pub fn compare_ars(scene: &Scene, cfg: &SimConfig) -> Result<RunResult> {
    let mut on = cfg.clone();
    on.ars_enabled = true;
    let mut off = cfg.clone();
    off.ars_enabled = false;
    let mut res = run(scene, &on)?;
    let base = run(scene, &off)?;
    let work = |s: &RunStats| s.timings.total_s - s.timings.visibility_s;
    let (ta, tb) = (work(&res.stats), work(&base.stats));
    res.stats.ars_comparison = Some(ArsComparison {
        nodes_ars: res.stats.tree.total,
        nodes_no_ars: base.stats.tree.total,
        node_ratio: base.stats.tree.total as f64 / res.stats.tree.total.max(1) as f64,
        time_ars_s: ta,
        time_no_ars_s: tb,
        time_ratio: if ta > 0.0 { tb / ta } else { f64::NAN },
    });
    Ok(res)
}
