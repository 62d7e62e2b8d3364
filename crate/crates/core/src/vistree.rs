//! Visibility tree of facet/edge sequences with shrunk beams.
//!
//! The tree holds no observation points. Partitions split the level-2
//! subtrees into contiguous runs; a level-1 node whose children span several
//! partitions is copied into each of them but owned by one. Subtrees are
//! built on their own and concatenated in order, so the arena is identical
//! for any worker count.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use crate::azb::{
    clip_edge_to_rect, diff_rect_initial, diff_rect_intersect, facet_diff_rect, facet_rect,
    refl_rect_intersect, shrink_after_reflection, DiffAzbRect, ReflAzbRect,
};
use crate::engine::Scene;
use crate::error::{Error, Result};
use crate::geom::{edge_frame, mirror_basis, mirror_point, Frame, Point3};
use crate::par;
use crate::visibility::{side_eps, VisibilityData};

/// Parent index of level-1 nodes.
pub const ROOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeKind {
    Reflect,
    Diffract,
}

impl NodeKind {
    pub fn tag(self) -> char {
        match self {
            NodeKind::Reflect => 'R',
            NodeKind::Diffract => 'D',
        }
    }
}

/// Beam carried by a node, expressed in the frame its children use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beam {
    /// No diffraction yet: `frame` is the image-source frame.
    Refl { frame: Frame, window: ReflAzbRect },
    /// At or past the diffraction: `frame` is the (image) edge frame with the
    /// image of `p1` at its origin and the edge along ±z up to `p2z`;
    /// `source` is the matching image of the source feeding the edge.
    Diff {
        frame: Frame,
        source: Point3,
        p2z: f64,
        edge: u32,
        window: DiffAzbRect,
    },
}

impl Beam {
    pub fn frame(&self) -> &Frame {
        match self {
            Beam::Refl { frame, .. } | Beam::Diff { frame, .. } => frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisNode {
    pub kind: NodeKind,
    pub prim: u32,
    pub level: u8,
    pub parent: u32,
    pub children: Range<u32>,
    pub beam: Beam,
}

impl VisNode {
    pub fn has_diffraction(&self) -> bool {
        matches!(self.beam, Beam::Diff { .. })
    }

    /// Reflections on the path from the root down to this node.
    pub fn reflections(&self) -> u8 {
        self.level - u8::from(self.has_diffraction())
    }

    /// End points of the image edge carried past a diffraction.
    pub fn image_edge(&self) -> Option<(Point3, Point3)> {
        match self.beam {
            Beam::Diff { frame, p2z, .. } => Some((frame.origin, frame.origin + frame.ez * p2z)),
            Beam::Refl { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLimits {
    pub max_reflections: u8,
    pub max_diffractions: u8,
    pub partition_count: usize,
}

impl Default for TreeLimits {
    fn default() -> Self {
        TreeLimits {
            max_reflections: 2,
            max_diffractions: 1,
            partition_count: 1,
        }
    }
}

impl TreeLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_reflections > 6 {
            return Err(Error::Config(format!(
                "max reflections {} exceeds 6",
                self.max_reflections
            )));
        }
        if self.max_diffractions > 1 {
            return Err(Error::Config(format!(
                "max diffractions {} exceeds 1",
                self.max_diffractions
            )));
        }
        if self.partition_count == 0 {
            return Err(Error::Config("partition count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Intersect each child's rectangle with the inherited beam.
    pub ars: bool,
    /// Upper bound on arena nodes alive in one partition.
    pub max_nodes: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            ars: true,
            max_nodes: None,
        }
    }
}

/// One partition's arena. Per level-1 node: the node, its children in this
/// partition, then each child's subtree breadth-first.
#[derive(Debug, Clone, Default)]
pub struct VisTree {
    pub nodes: Vec<VisNode>,
    pub roots: Vec<u32>,
    /// Ascending level-1 copies owned by another partition. They only
    /// anchor their children and carry no paths.
    pub borrowed: Vec<u32>,
}

impl VisTree {
    pub fn owns(&self, idx: u32) -> bool {
        self.borrowed.binary_search(&idx).is_err()
    }

    /// Primitive sequence from level 1 down to `idx`.
    pub fn sequence(&self, idx: u32) -> Vec<(NodeKind, u32)> {
        let mut seq = Vec::new();
        let mut i = idx;
        while i != ROOT {
            let n = &self.nodes[i as usize];
            seq.push((n.kind, n.prim));
            i = n.parent;
        }
        seq.reverse();
        seq
    }

    /// Node indices from level 1 down to `idx`.
    pub fn chain(&self, idx: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut i = idx;
        while i != ROOT {
            out.push(i);
            i = self.nodes[i as usize].parent;
        }
        out.reverse();
        out
    }

    /// Node indices ordered by level, arena order within a level.
    pub fn level_order(&self) -> Vec<u32> {
        let mut idx: Vec<u32> = (0..self.nodes.len() as u32).collect();
        idx.sort_by_key(|&i| self.nodes[i as usize].level);
        idx
    }

    pub fn max_level(&self) -> u8 {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }
}

/// Level-1 candidates: Tx-visible facets then Tx-visible edges, by id.
pub fn level1_candidates(vis: &VisibilityData, limits: &TreeLimits) -> Vec<(NodeKind, u32)> {
    let mut out = Vec::new();
    if limits.max_reflections > 0 {
        out.extend(
            vis.tx_facet
                .iter()
                .enumerate()
                .filter(|(_, v)| **v)
                .map(|(i, _)| (NodeKind::Reflect, i as u32)),
        );
    }
    if limits.max_diffractions > 0 {
        out.extend(
            vis.tx_edge
                .iter()
                .enumerate()
                .filter(|(_, v)| **v)
                .map(|(i, _)| (NodeKind::Diffract, i as u32)),
        );
    }
    out
}

/// Splits `n` items into `k` contiguous near-equal groups.
pub fn split_partitions(n: usize, k: usize) -> Vec<Range<usize>> {
    let k = k.max(1);
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// A level-1 node and the run of its children that one partition builds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootSlice {
    pub kind: NodeKind,
    pub prim: u32,
    pub owns_root: bool,
    /// Child indices in candidate order; clamped to the actual count.
    pub children: Range<usize>,
}

/// Node counts of a built tree, for the stats dump.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub total: usize,
    pub reflect: usize,
    pub diffract: usize,
    pub per_level: Vec<usize>,
    pub per_partition: Vec<usize>,
}

impl TreeStats {
    /// Counts owned nodes; `per_partition` records arena sizes.
    pub fn add(&mut self, tree: &VisTree) {
        self.total += tree.nodes.len() - tree.borrowed.len();
        self.per_partition.push(tree.nodes.len());
        for (i, n) in tree.nodes.iter().enumerate() {
            if !tree.owns(i as u32) {
                continue;
            }
            match n.kind {
                NodeKind::Reflect => self.reflect += 1,
                NodeKind::Diffract => self.diffract += 1,
            }
            let l = n.level as usize;
            if self.per_level.len() < l {
                self.per_level.resize(l, 0);
            }
            self.per_level[l - 1] += 1;
        }
    }
}

/// Shared, read-only inputs of a build.
pub struct TreeBuilder<'a> {
    pub scene: &'a Scene,
    pub vis: &'a VisibilityData,
    pub tx: Point3,
    pub limits: TreeLimits,
    pub opts: BuildOptions,
    eps: f64,
    edge_facets: Vec<Vec<u32>>,
    live: AtomicUsize,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(
        scene: &'a Scene,
        vis: &'a VisibilityData,
        tx: Point3,
        limits: TreeLimits,
        opts: BuildOptions,
    ) -> Self {
        let mut edge_facets = vec![Vec::new(); scene.edges.len()];
        for f in 0..scene.facets.len() {
            for e in vis.facet_edge.row_ones(f) {
                edge_facets[e].push(f as u32);
            }
        }
        TreeBuilder {
            scene,
            vis,
            tx,
            limits,
            opts,
            eps: side_eps(scene),
            edge_facets,
            live: AtomicUsize::new(0),
        }
    }

    pub fn root_beam(&self) -> Beam {
        Beam::Refl {
            frame: Frame::identity(self.tx),
            window: ReflAzbRect::full(),
        }
    }

    /// Candidate children of a node (or of Tx), facets then edges, by id.
    fn candidates(&self, parent: Option<&VisNode>) -> Vec<(NodeKind, u32)> {
        let Some(p) = parent else {
            return level1_candidates(self.vis, &self.limits);
        };
        let more_refl = p.reflections() < self.limits.max_reflections;
        let may_diffract = !p.has_diffraction() && self.limits.max_diffractions > 0;
        let mut out = Vec::new();
        match p.kind {
            NodeKind::Reflect => {
                if more_refl {
                    out.extend(
                        self.vis
                            .facet_facet
                            .row_ones(p.prim as usize)
                            .map(|j| (NodeKind::Reflect, j as u32)),
                    );
                }
                if may_diffract {
                    out.extend(
                        self.vis
                            .facet_edge
                            .row_ones(p.prim as usize)
                            .map(|j| (NodeKind::Diffract, j as u32)),
                    );
                }
            }
            NodeKind::Diffract => {
                if more_refl {
                    out.extend(
                        self.edge_facets[p.prim as usize]
                            .iter()
                            .map(|&f| (NodeKind::Reflect, f)),
                    );
                }
            }
        }
        out
    }

    /// Beam of the child through `(kind, prim)`, or `None` when the parent
    /// beam misses it.
    pub fn child_beam(&self, parent: &Beam, kind: NodeKind, prim: u32) -> Option<Beam> {
        let ars = self.opts.ars;
        match (parent, kind) {
            (Beam::Refl { frame, window }, NodeKind::Reflect) => {
                let fac = &self.scene.facets[prim as usize];
                if (frame.origin - fac.v0).dot(&fac.n) <= self.eps {
                    return None;
                }
                let rect = facet_rect(frame, fac).ok()?;
                let lit = refl_rect_intersect(&rect, window)?;
                let kept = if ars { lit } else { rect };
                let pl = fac.plane();
                Some(Beam::Refl {
                    frame: mirror_basis(frame, &pl),
                    window: shrink_after_reflection(&kept),
                })
            }
            (Beam::Refl { frame, window }, NodeKind::Diffract) => {
                let e = &self.scene.edges[prim as usize];
                if !e.exterior_contains(&frame.origin, -self.eps) {
                    return None;
                }
                let init = diff_rect_initial(e);
                let (t_min, t_max) = clip_edge_to_rect(window, e, frame).range()?;
                let window = if ars {
                    DiffAzbRect {
                        t_min,
                        t_max,
                        ..init
                    }
                } else {
                    init
                };
                Some(Beam::Diff {
                    frame: edge_frame(e).ok()?,
                    source: frame.origin,
                    p2z: e.length(),
                    edge: prim,
                    window,
                })
            }
            (
                Beam::Diff {
                    frame,
                    source,
                    p2z,
                    edge,
                    window,
                },
                NodeKind::Reflect,
            ) => {
                let fac = &self.scene.facets[prim as usize];
                let p1 = frame.origin;
                let p2 = frame.origin + frame.ez * *p2z;
                let front = |p: &Point3| (p - fac.v0).dot(&fac.n) > self.eps;
                if !(front(&p1) || front(&p2)) {
                    return None;
                }
                let n = self.scene.edges[*edge as usize].nwedge;
                let rect = match facet_diff_rect(frame, source, fac, n, 0.0, *p2z) {
                    Ok(Some(r)) => r,
                    Ok(None) => return None,
                    // facet touches the edge line: no usable bound
                    Err(_) => DiffAzbRect {
                        phi_min: 0.0,
                        phi_max: n * PI,
                        t_min: f64::NEG_INFINITY,
                        t_max: f64::INFINITY,
                    },
                };
                let lit = diff_rect_intersect(&rect, window)?;
                let kept = if ars { lit } else { rect };
                let pl = fac.plane();
                Some(Beam::Diff {
                    frame: mirror_basis(frame, &pl),
                    source: mirror_point(source, &pl),
                    p2z: -*p2z,
                    edge: *edge,
                    window: kept,
                })
            }
            (Beam::Diff { .. }, NodeKind::Diffract) => None,
        }
    }

    /// Children of `parent` (or of Tx for `None`) in primitive-id order.
    pub fn expand_node(&self, parent: Option<&VisNode>) -> Vec<VisNode> {
        let (beam, level) = match parent {
            Some(p) => (p.beam, p.level),
            None => (self.root_beam(), 0),
        };
        self.candidates(parent)
            .into_iter()
            .filter_map(|(kind, prim)| {
                self.child_beam(&beam, kind, prim).map(|beam| VisNode {
                    kind,
                    prim,
                    level: level + 1,
                    parent: ROOT,
                    children: 0..0,
                    beam,
                })
            })
            .collect()
    }

    fn check_budget(&self, added: usize) -> Result<()> {
        let now = self.live.fetch_add(added, Ordering::Relaxed) + added;
        if let Some(max) = self.opts.max_nodes {
            if now > max {
                let per = std::mem::size_of::<VisNode>() as u64;
                return Err(Error::MemoryBudget {
                    estimated: now as u64 * per,
                    budget: max as u64 * per,
                    partitions: self.limits.partition_count,
                });
            }
        }
        Ok(())
    }

    /// The lit level-1 node through `(kind, prim)`.
    fn root_node(&self, kind: NodeKind, prim: u32) -> Option<VisNode> {
        let beam = self.child_beam(&self.root_beam(), kind, prim)?;
        Some(VisNode {
            kind,
            prim,
            level: 1,
            parent: ROOT,
            children: 0..0,
            beam,
        })
    }

    /// Breadth-first arena of the subtree under `top`, with indices local
    /// to the returned vector.
    fn build_subtree(&self, top: VisNode) -> Result<Vec<VisNode>> {
        let mut nodes = vec![top];
        let mut i = 0;
        while i < nodes.len() {
            let kids = self.expand_node(Some(&nodes[i]));
            self.check_budget(kids.len())?;
            let start = nodes.len() as u32;
            nodes.extend(kids.into_iter().map(|mut k| {
                k.parent = i as u32;
                k
            }));
            nodes[i].children = start..nodes.len() as u32;
            i += 1;
        }
        Ok(nodes)
    }

    /// Root, its selected children, then their descendants.
    fn build_slice(&self, slice: &RootSlice) -> Result<Vec<VisNode>> {
        let Some(mut root) = self.root_node(slice.kind, slice.prim) else {
            return Ok(Vec::new());
        };
        let mut kids = self.expand_node(Some(&root));
        let end = slice.children.end.min(kids.len());
        let start = slice.children.start.min(end);
        kids.truncate(end);
        kids.drain(..start);
        self.check_budget(1 + kids.len())?;
        let m = kids.len() as u32;
        let subs = par::map(&kids, |k| self.build_subtree(k.clone()));
        root.children = 1..1 + m;
        let mut nodes = vec![root];
        nodes.extend(kids.into_iter().map(|mut k| {
            k.parent = 0;
            k
        }));
        for (j, sub) in subs.into_iter().enumerate() {
            let sub = sub?;
            let top = 1 + j as u32;
            let off = nodes.len() as u32 - 1;
            let at = |i: u32| if i == 0 { top } else { off + i };
            nodes[top as usize].children = at(sub[0].children.start)..at(sub[0].children.end);
            nodes.extend(sub.into_iter().skip(1).map(|mut n| {
                n.parent = at(n.parent);
                n.children = at(n.children.start)..at(n.children.end);
                n
            }));
        }
        Ok(nodes)
    }

    /// Builds one partition from its root slices.
    pub fn build_partition(&self, slices: &[RootSlice]) -> Result<VisTree> {
        self.live.store(0, Ordering::Relaxed);
        let parts = par::map(slices, |s| self.build_slice(s));
        let mut tree = VisTree::default();
        for (part, slice) in parts.into_iter().zip(slices) {
            let part = part?;
            if part.is_empty() {
                continue;
            }
            let off = tree.nodes.len() as u32;
            tree.roots.push(off);
            if !slice.owns_root {
                tree.borrowed.push(off);
            }
            tree.nodes.extend(part.into_iter().map(|mut n| {
                if n.parent != ROOT {
                    n.parent += off;
                }
                n.children = n.children.start + off..n.children.end + off;
                n
            }));
        }
        Ok(tree)
    }

    /// Root slices, one group per partition. With several partitions the
    /// work units are each level-1 node followed by its level-2 subtrees,
    /// split into contiguous near-equal runs.
    pub fn partitions(&self) -> Vec<Vec<RootSlice>> {
        let all = level1_candidates(self.vis, &self.limits);
        let k = self.limits.partition_count;
        if k <= 1 {
            let whole = all
                .iter()
                .map(|&(kind, prim)| RootSlice {
                    kind,
                    prim,
                    owns_root: true,
                    children: 0..usize::MAX,
                })
                .collect();
            return vec![whole];
        }
        let fanout: Vec<usize> = par::map(&all, |&(kind, prim)| {
            self.root_node(kind, prim)
                .map_or(0, |r| self.expand_node(Some(&r)).len())
        });
        // unit u of root r: u == 0 is the root itself, u > 0 child u - 1
        let units: Vec<(usize, usize)> = fanout
            .iter()
            .enumerate()
            .flat_map(|(r, &n)| (0..=n).map(move |u| (r, u)))
            .collect();
        split_partitions(units.len(), k)
            .into_iter()
            .map(|range| {
                let mut out: Vec<RootSlice> = Vec::new();
                for &(r, u) in &units[range] {
                    match out.last_mut() {
                        Some(s) if s.kind == all[r].0 && s.prim == all[r].1 => s.children.end = u,
                        _ => out.push(RootSlice {
                            kind: all[r].0,
                            prim: all[r].1,
                            owns_root: u == 0,
                            children: u.saturating_sub(1)..u,
                        }),
                    }
                }
                out
            })
            .collect()
    }
}

/// Builds every partition tree in order.
pub fn build_tree(
    scene: &Scene,
    tx: Point3,
    vis: &VisibilityData,
    limits: TreeLimits,
    opts: BuildOptions,
) -> Result<Vec<VisTree>> {
    limits.validate()?;
    let b = TreeBuilder::new(scene, vis, tx, limits, opts);
    b.partitions().iter().map(|r| b.build_partition(r)).collect()
}
