//! Deferred FOP attachment: (node, FOP) pairs streamed in level order and
//! chunked into shadow-test batches.

use crate::visibility::VisibilityData;
use crate::vistree::{NodeKind, VisTree, ROOT};

/// Default pair count per batch.
pub const DEFAULT_BATCH_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StBatch {
    pub index: usize,
    /// `(node, fop)` pairs; `node == ROOT` is the direct path.
    pub pairs: Vec<(u32, u32)>,
}

/// Iterator over the batches of one partition tree.
pub struct FopAttacher<'a> {
    tree: &'a VisTree,
    vis: &'a VisibilityData,
    n_fops: usize,
    cap: usize,
    /// Nodes in emission order; `ROOT` first when direct paths are included.
    order: Vec<u32>,
    pos: usize,
    /// Visible FOPs of `order[pos]` and how many of them were emitted.
    current: Vec<u32>,
    taken: usize,
    next_index: usize,
}

impl FopAttacher<'_> {
    fn load(&mut self) {
        self.current.clear();
        self.taken = 0;
        let Some(&node) = self.order.get(self.pos) else {
            return;
        };
        if node == ROOT {
            self.current.extend(0..self.n_fops as u32);
            return;
        }
        let n = &self.tree.nodes[node as usize];
        let row = match n.kind {
            NodeKind::Reflect => self.vis.facet_fop.row_ones(n.prim as usize),
            NodeKind::Diffract => self.vis.edge_fop.row_ones(n.prim as usize),
        };
        self.current.extend(row.take_while(|&j| j < self.n_fops).map(|j| j as u32));
    }
}

impl Iterator for FopAttacher<'_> {
    type Item = StBatch;

    fn next(&mut self) -> Option<StBatch> {
        let mut pairs = Vec::new();
        while pairs.len() < self.cap && self.pos < self.order.len() {
            let node = self.order[self.pos];
            let take = (self.cap - pairs.len()).min(self.current.len() - self.taken);
            pairs.extend(self.current[self.taken..self.taken + take].iter().map(|&f| (node, f)));
            self.taken += take;
            if self.taken == self.current.len() {
                self.pos += 1;
                self.load();
            }
        }
        if pairs.is_empty() {
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;
        Some(StBatch { index, pairs })
    }
}

/// Streams `(node, fop)` pairs of `tree` in ascending level order, at most
/// `batch_cap` per batch. `with_direct` prepends the direct Tx→FOP pairs.
pub fn attach_fops<'a>(
    tree: &'a VisTree,
    vis: &'a VisibilityData,
    n_fops: usize,
    batch_cap: usize,
    with_direct: bool,
) -> FopAttacher<'a> {
    let mut order = Vec::with_capacity(tree.nodes.len() + 1);
    if with_direct {
        order.push(ROOT);
    }
    order.extend(tree.level_order().into_iter().filter(|&i| tree.owns(i)));
    let mut a = FopAttacher {
        tree,
        vis,
        n_fops,
        cap: batch_cap.max(1),
        order,
        pos: 0,
        current: Vec::new(),
        taken: 0,
        next_index: 0,
    };
    a.load();
    a
}

/// Number of pairs [`attach_fops`] will emit.
pub fn count_pairs(tree: &VisTree, vis: &VisibilityData, n_fops: usize, with_direct: bool) -> usize {
    let direct = if with_direct { n_fops } else { 0 };
    direct
        + tree
            .nodes
            .iter()
            .enumerate()
            .filter(|&(i, _)| tree.owns(i as u32))
            .map(|(_, n)| match n.kind {
                NodeKind::Reflect => vis.facet_fop.row_ones(n.prim as usize).count(),
                NodeKind::Diffract => vis.edge_fop.row_ones(n.prim as usize).count(),
            })
            .sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Frame, Point3};
    use crate::azb::ReflAzbRect;
    use crate::vistree::{Beam, VisNode};

    fn node(prim: u32, level: u8, parent: u32) -> VisNode {
        VisNode {
            kind: NodeKind::Reflect,
            prim,
            level,
            parent,
            children: 0..0,
            beam: Beam::Refl {
                frame: Frame::identity(Point3::origin()),
                window: ReflAzbRect::full(),
            },
        }
    }

    #[test]
    fn chunks_of_thirty() {
        let tree = VisTree {
            nodes: vec![node(0, 1, ROOT)],
            roots: vec![0],
            ..VisTree::default()
        };
        let vis = VisibilityData::all_visible(1, 0, 100);
        let sizes: Vec<usize> = attach_fops(&tree, &vis, 100, 30, false).map(|b| b.pairs.len()).collect();
        assert_eq!(sizes, [30, 30, 30, 10]);
        assert_eq!(count_pairs(&tree, &vis, 100, false), 100);
        assert_eq!(count_pairs(&tree, &vis, 100, true), 200);
    }

    #[test]
    fn hidden_fops_are_skipped_and_levels_ascend() {
        // arena order deliberately not level ordered
        let mut tree = VisTree {
            nodes: vec![node(0, 1, ROOT), node(1, 2, 0), node(1, 1, ROOT)],
            roots: vec![0, 2],
            ..VisTree::default()
        };
        tree.nodes[0].children = 1..2;
        let mut vis = VisibilityData::all_visible(2, 0, 5);
        vis.facet_fop.set(1, 3, false);
        let pairs: Vec<(u32, u32)> = attach_fops(&tree, &vis, 5, 4, true).flat_map(|b| b.pairs).collect();
        assert_eq!(pairs.len(), 5 + 5 + 4 + 4);
        assert!(pairs[..5].iter().all(|p| p.0 == ROOT));
        let levels: Vec<u8> = pairs[5..].iter().map(|p| tree.nodes[p.0 as usize].level).collect();
        assert!(levels.windows(2).all(|w| w[0] <= w[1]));
        assert!(!pairs.contains(&(2, 3)) && !pairs.contains(&(1, 3)));
        assert!(pairs.contains(&(0, 3)));
    }

    #[test]
    fn pair_multiset_independent_of_cap() {
        let mut nodes = Vec::new();
        for i in 0..20u32 {
            nodes.push(node(i % 3, (i % 4) as u8 + 1, ROOT));
        }
        let tree = VisTree { nodes, ..VisTree::default() };
        let mut vis = VisibilityData::all_visible(3, 0, 11);
        for (f, j) in [(0, 1), (1, 5), (2, 10), (2, 0)] {
            vis.facet_fop.set(f, j, false);
        }
        let collect = |cap| {
            let b: Vec<StBatch> = attach_fops(&tree, &vis, 11, cap, true).collect();
            assert!(b.iter().all(|x| x.pairs.len() <= cap));
            assert!(b.iter().enumerate().all(|(i, x)| x.index == i));
            b.into_iter().flat_map(|x| x.pairs).collect::<Vec<_>>()
        };
        let base = collect(1 << 20);
        assert_eq!(base.len(), count_pairs(&tree, &vis, 11, true));
        assert_eq!(collect(7), base);
        assert_eq!(collect(64), base);
    }
}
