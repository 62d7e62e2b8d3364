use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use itrace::engine::{
    compare_ars, generate_scene, load_scene, run, run_with_dump, write_csv, write_mesh, write_results, write_stats,
    GenParams, SceneKind, SimConfig,
};

#[derive(Parser)]
#[command(name = "itrace", version, about = "Image-theory radio ray tracer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trace a scene and write per-FOP fields.
    Run(RunArgs),
    /// Generate a synthetic city scene as a mesh file.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    /// key = value settings; flags below override them.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Transmitter position x,y,z.
    #[arg(long, allow_hyphen_values = true)]
    tx: Option<String>,
    #[arg(long)]
    freq: Option<String>,
    #[arg(long)]
    power: Option<String>,
    #[arg(long)]
    max_bounce: Option<String>,
    #[arg(long)]
    max_diff: Option<String>,
    /// x0,y0,z0:x1,y1,z1:N
    #[arg(long, allow_hyphen_values = true, conflicts_with = "fops_grid")]
    fops_line: Option<String>,
    /// xmin,ymin:xmax,ymax:NX,NY:z
    #[arg(long, allow_hyphen_values = true)]
    fops_grid: Option<String>,
    /// Keep full facet rectangles instead of shrinking them.
    #[arg(long)]
    no_ars: bool,
    #[arg(long)]
    partitions: Option<String>,
    #[arg(long)]
    batch_cap: Option<String>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<String>,
    /// plane-cull | occlusion[:K]
    #[arg(long)]
    vis_mode: Option<String>,
    /// Tree memory budget per partition, e.g. 512M.
    #[arg(long)]
    memory_budget: Option<String>,
    /// Run shadow testing and fields one after the other.
    #[arg(long)]
    no_pipeline: bool,
    #[arg(long)]
    vis_cache: Option<PathBuf>,
    /// Output CSV; a JSON summary is written alongside.
    #[arg(long, default_value = "fields.csv")]
    out: PathBuf,
    /// JSON lines of every backtraced path.
    #[arg(long)]
    dump_paths: Option<PathBuf>,
    /// Tree and timing statistics as JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Also run without ARS and report node and time ratios.
    #[arg(long)]
    compare_ars: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: SceneKind,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    block: Option<f64>,
    #[arg(long)]
    street: Option<f64>,
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    h_min: Option<f64>,
    #[arg(long)]
    h_max: Option<f64>,
    /// Grid block displacement as a fraction of the street width.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn build_config(a: &RunArgs) -> Result<SimConfig> {
    let mut cfg = match &a.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    let overrides = [
        ("tx", &a.tx),
        ("freq", &a.freq),
        ("power", &a.power),
        ("max_bounce", &a.max_bounce),
        ("max_diff", &a.max_diff),
        ("fops_line", &a.fops_line),
        ("fops_grid", &a.fops_grid),
        ("partitions", &a.partitions),
        ("batch_cap", &a.batch_cap),
        ("workers", &a.workers),
        ("vis_mode", &a.vis_mode),
        ("memory_budget", &a.memory_budget),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
        }
    }
    if a.no_ars {
        cfg.ars_enabled = false;
    }
    if a.no_pipeline {
        cfg.pipelined = false;
    }
    if let Some(p) = &a.vis_cache {
        cfg.vis_cache = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = build_config(&a)?;
    let scene = load_scene(&a.scene).with_context(|| format!("loading {}", a.scene.display()))?;
    log::info!(
        "{} facets, {} edges, {} FOPs",
        scene.facets.len(),
        scene.edges.len(),
        cfg.fop_points().len()
    );
    let res = if a.compare_ars {
        compare_ars(&scene, &cfg)?
    } else if let Some(p) = &a.dump_paths {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        run_with_dump(&scene, &cfg, Some(&mut w))?
    } else {
        run(&scene, &cfg)?
    };
    if a.out.as_os_str() == "-" {
        write_csv(std::io::stdout().lock(), &res.fops, &res.samples)?;
    } else {
        write_results(&res, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    }
    if let Some(p) = &a.stats {
        write_stats(&res.stats, p)?;
    }
    let s = &res.stats;
    eprintln!(
        "nodes {} | st pairs {} | paths {} | {:.3} s",
        s.tree.total, s.st_pairs, s.paths_passed, s.timings.total_s
    );
    if let Some(c) = &s.ars_comparison {
        eprintln!(
            "ars: {} nodes vs {} ({:.2}x), {:.3} s vs {:.3} s ({:.2}x)",
            c.nodes_ars, c.nodes_no_ars, c.node_ratio, c.time_ars_s, c.time_no_ars_s, c.time_ratio
        );
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let d = GenParams::default();
    let p = GenParams {
        kind: a.kind,
        rows: a.rows.unwrap_or(d.rows),
        cols: a.cols.unwrap_or(d.cols),
        block: a.block.unwrap_or(d.block),
        street: a.street.unwrap_or(d.street),
        gap: a.gap.unwrap_or(d.gap),
        h_min: a.h_min.unwrap_or(d.h_min),
        h_max: a.h_max.unwrap_or(d.h_max),
        jitter: a.jitter.unwrap_or(d.jitter),
        seed: a.seed.unwrap_or(d.seed),
    };
    let scene = generate_scene(&p)?;
    write_mesh(&scene, &a.out)?;
    eprintln!(
        "{}: {} facets, {} edges, hash {}",
        a.out.display(),
        scene.facets.len(),
        scene.edges.len(),
        scene.content_hash()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let res = match Cli::parse().cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Gen(a) => cmd_gen(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
