//! Cutting an excursion at horizontal levels.
//!
//! The superlevel sets {y > a} of a discretized excursion form a binary tree
//! as `a` rises: a fragment splits exactly when `a` reaches a strict interior
//! local minimum of y. Below its split height the samples of a fragment that
//! lie under `a` sit on two monotone flanks, so crossings at any level are
//! found by binary search. At the split height itself the search skips the
//! splitting minimum.

use crate::error::{invalid, Result};
use crate::sampling::{ExcursionPath, GridSpec};
use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// (left, right) children for a fragment that splits.
    pub children: Option<(usize, usize)>,
    /// Level at which the fragment appears: 0 for the root, otherwise the
    /// height of the local minimum that created it.
    pub birth_level: f64,
    /// Height of this fragment's own split, or of its peak for a leaf.
    pub death_level: f64,
    /// Sample index of the local minimum where this fragment splits.
    pub split_index: Option<usize>,
    /// First and last sample strictly above `birth_level`.
    pub lo: usize,
    pub hi: usize,
    /// Index of the highest sample of the fragment.
    pub peak: usize,
    /// Bracketing sample indices (i₋, i₊) of the crossings at birth.
    pub interval: (usize, usize),
    pub birth_size: f64,
}

impl SplitNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTree {
    pub nodes: Vec<SplitNode>,
}

impl SplitTree {
    pub fn root(&self) -> &SplitNode {
        &self.nodes[0]
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }
}

/// Total order on samples: by height, ties broken by index.
fn key_lt(y: &[f64], i: usize, j: usize) -> bool {
    match y[i].total_cmp(&y[j]) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => i < j,
    }
}

/// Strict interior local minima of y under the index-tie-broken order.
pub fn interior_local_minima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    if n < 5 {
        return Vec::new();
    }
    (2..n - 2).filter(|&j| key_lt(y, j, j - 1) && key_lt(y, j, j + 1)).collect()
}

/// A crossing of a level: bracketing sample indices, time and abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub below: usize,
    pub above: usize,
    pub t: f64,
    pub x: f64,
}

fn interp(path: &ExcursionPath, below: usize, above: usize, a: f64) -> Crossing {
    let (y0, y1) = (path.y[below], path.y[above]);
    let f = (a - y0) / (y1 - y0);
    let t = path.times[below] + f * (path.times[above] - path.times[below]);
    let x = path.x[below] + f * (path.x[above] - path.x[below]);
    Crossing { below, above, t, x }
}

/// Left crossing of `node` at level a ∈ [birth, death].
pub fn left_crossing(node: &SplitNode, path: &ExcursionPath, a: f64) -> Crossing {
    let (lo, pk) = (node.lo, node.peak);
    if path.y[pk] <= a {
        return Crossing { below: pk, above: pk, t: path.times[pk], x: path.x[pk] };
    }
    // at the split height the minimum itself touches a; search before it
    let end = match node.split_index {
        Some(m) if a >= node.death_level && m > lo && m <= pk => m - 1,
        _ => pk,
    };
    // first k in [lo, end] with y[k] > a
    let k = lo + path.y[lo..=end].partition_point(|&v| v <= a);
    interp(path, k - 1, k, a)
}

/// Right crossing of `node` at level a ∈ [birth, death].
pub fn right_crossing(node: &SplitNode, path: &ExcursionPath, a: f64) -> Crossing {
    let (pk, hi) = (node.peak, node.hi);
    if path.y[pk] <= a {
        return Crossing { below: pk, above: pk, t: path.times[pk], x: path.x[pk] };
    }
    let start = match node.split_index {
        Some(m) if a >= node.death_level && m >= pk && m < hi => m + 1,
        _ => pk,
    };
    // last k in [start, hi] with y[k] > a
    let k = start + path.y[start..=hi].partition_point(|&v| v > a) - 1;
    interp(path, k + 1, k, a)
}

/// Signed size x(i₊) − x(i₋) of the fragment `node` at level a.
pub fn size_at(node: &SplitNode, path: &ExcursionPath, a: f64) -> f64 {
    right_crossing(node, path, a).x - left_crossing(node, path, a).x
}

pub fn build_split_tree(path: &ExcursionPath) -> Result<SplitTree> {
    let n = path.len();
    if n < 3 || path.x.len() != n || path.y.len() != n {
        return Err(invalid("malformed path: needs at least one interior sample"));
    }
    if path.y[0] != 0.0 || path.y[n - 1] != 0.0 {
        return Err(invalid("malformed path: y must start and end at 0"));
    }
    if path.y[1..n - 1].iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("malformed path: y <= 0 in the interior"));
    }
    let y = &path.y;
    let minima = interior_local_minima(y);
    // Cartesian tree of the minima, heap-ordered by height
    let m = minima.len();
    let mut cl = vec![usize::MAX; m];
    let mut cr = vec![usize::MAX; m];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..m {
        let mut last = usize::MAX;
        while let Some(&top) = stack.last() {
            if key_lt(y, minima[i], minima[top]) {
                last = stack.pop().unwrap();
            } else {
                break;
            }
        }
        cl[i] = last;
        if let Some(&top) = stack.last() {
            cr[top] = i;
        }
        stack.push(i);
    }
    let cart_root = stack.first().copied().unwrap_or(usize::MAX);

    let mut nodes: Vec<SplitNode> = Vec::with_capacity(2 * m + 1);
    // (lo, hi, birth, parent, cartesian node, is_right_child)
    let mut work = vec![(1usize, n - 2, 0.0f64, usize::MAX, cart_root, false)];
    while let Some((lo, hi, birth, parent, c, is_right)) = work.pop() {
        let id = nodes.len();
        let (split_index, death) = if c == usize::MAX { (None, f64::NAN) } else { (Some(minima[c]), y[minima[c]]) };
        nodes.push(SplitNode {
            id,
            parent: (parent != usize::MAX).then_some(parent),
            children: None,
            birth_level: birth,
            death_level: death,
            split_index,
            lo,
            hi,
            peak: lo,
            interval: (lo - 1, hi + 1),
            birth_size: 0.0,
        });
        if parent != usize::MAX {
            let p = &mut nodes[parent];
            p.children = Some(match p.children {
                None if !is_right => (id, usize::MAX),
                None => (usize::MAX, id),
                Some((l, _)) if is_right => (l, id),
                Some((_, r)) => (id, r),
            });
        }
        if let Some(j) = split_index {
            work.push((j + 1, hi, y[j], id, cr[c], true));
            work.push((lo, j - 1, y[j], id, cl[c], false));
        }
    }
    // peaks bottom-up: children always come after their parent
    for id in (0..nodes.len()).rev() {
        match nodes[id].children {
            None => {
                let (lo, hi) = (nodes[id].lo, nodes[id].hi);
                let mut pk = lo;
                for k in lo..=hi {
                    if key_lt(y, pk, k) {
                        pk = k;
                    }
                }
                nodes[id].peak = pk;
                nodes[id].death_level = y[pk];
            }
            Some((l, r)) => {
                let (pl, pr) = (nodes[l].peak, nodes[r].peak);
                nodes[id].peak = if key_lt(y, pl, pr) { pr } else { pl };
            }
        }
    }
    for id in 0..nodes.len() {
        let b = nodes[id].birth_level;
        let lc = left_crossing(&nodes[id], path, b);
        let rc = right_crossing(&nodes[id], path, b);
        nodes[id].interval = (lc.below, rc.below);
        nodes[id].birth_size = rc.x - lc.x;
    }
    Ok(SplitTree { nodes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentSet {
    pub level: f64,
    /// Sizes sorted by decreasing absolute value.
    pub sizes: Vec<f64>,
    /// Bracketing (i₋, i₊) sample indices of each fragment.
    pub intervals: Vec<(usize, usize)>,
    pub node_ids: Vec<usize>,
    /// Fragments containing fewer than two grid samples.
    pub narrow: Vec<bool>,
}

impl FragmentSet {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn to_json(&self, excursion_id: usize) -> serde_json::Value {
        fragment_record(excursion_id, self.level, &self.sizes)
    }
}

/// One JSONL record of ranked sizes at a level; shared by fragment sets and
/// cell-system snapshots.
pub fn fragment_record(excursion_id: usize, level: f64, sizes: &[f64]) -> serde_json::Value {
    serde_json::json!({
        "excursion_id": excursion_id,
        "level": level,
        "sizes": sizes,
        "n_fragments": sizes.len(),
    })
}

/// Ids of the fragments alive at level a (birth ≤ a < death).
pub fn nodes_at_level(tree: &SplitTree, a: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let v = &tree.nodes[id];
        if a < v.birth_level {
            continue;
        }
        if a < v.death_level {
            out.push(id);
        } else if let Some((l, r)) = v.children {
            stack.push(r);
            stack.push(l);
        }
    }
    out
}

pub fn fragments_at_level(tree: &SplitTree, path: &ExcursionPath, a: f64) -> Result<FragmentSet> {
    if !(a >= 0.0) {
        return Err(invalid(format!("level must be non-negative, got {a}")));
    }
    let mut items: Vec<(f64, (usize, usize), usize, bool)> = nodes_at_level(tree, a)
        .into_iter()
        .map(|id| {
            let v = &tree.nodes[id];
            let l = left_crossing(v, path, a);
            let r = right_crossing(v, path, a);
            let inside = r.above + 1 - l.above;
            (r.x - l.x, (l.below, r.below), id, inside < 2)
        })
        .collect();
    items.sort_by(|p, q| q.0.abs().total_cmp(&p.0.abs()).then(p.2.cmp(&q.2)));
    Ok(FragmentSet {
        level: a,
        sizes: items.iter().map(|i| i.0).collect(),
        intervals: items.iter().map(|i| i.1).collect(),
        node_ids: items.iter().map(|i| i.2).collect(),
        narrow: items.iter().map(|i| i.3).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    pub level: f64,
    /// Size of the discarded fragment; Ξ(a⁻) = Ξ(a) + z.
    pub z: f64,
    pub offspring_node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocallyLargestPath {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub jumps: Vec<JumpRecord>,
    pub apex_height: f64,
    pub apex_time: f64,
    /// Node ids along the followed branch, root first.
    pub branch: Vec<usize>,
    /// Splits where both children had the same |size| (left was taken).
    pub ties: usize,
}

impl LocallyLargestPath {
    /// Ξ(a), or 0 at and above the apex.
    pub fn value_at(&self, tree: &SplitTree, path: &ExcursionPath, a: f64) -> f64 {
        if a >= self.apex_height {
            return 0.0;
        }
        let i = self.branch.partition_point(|&id| tree.nodes[id].death_level <= a);
        size_at(&tree.nodes[self.branch[i]], path, a)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "a,xi")?;
        for (a, v) in self.levels.iter().zip(&self.values) {
            writeln!(w, "{a:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    pub fn write_jumps_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "a_i,z_i")?;
        for j in &self.jumps {
            writeln!(w, "{:.16e},{:.16e}", j.level, j.z)?;
        }
        Ok(())
    }
}

/// Follow the child of larger |birth size| at every split, from the root to
/// a leaf, and tabulate Ξ on the level grid plus every split height.
pub fn locally_largest(tree: &SplitTree, path: &ExcursionPath, grid: &GridSpec) -> Result<LocallyLargestPath> {
    grid.validate()?;
    let mut branch = vec![0usize];
    let mut jumps = Vec::new();
    let mut ties = 0;
    let mut id = 0;
    while let Some((l, r)) = tree.nodes[id].children {
        let (sl, sr) = (tree.nodes[l].birth_size.abs(), tree.nodes[r].birth_size.abs());
        if sl == sr {
            ties += 1;
        }
        let (keep, drop) = if sl >= sr { (l, r) } else { (r, l) };
        jumps.push(JumpRecord { level: tree.nodes[id].death_level, z: tree.nodes[drop].birth_size, offspring_node: drop });
        branch.push(keep);
        id = keep;
    }
    let leaf = &tree.nodes[id];
    let apex_height = leaf.death_level;
    let apex_time = path.times[leaf.peak];
    let mut levels: Vec<f64> = Vec::new();
    let mut k = 0u64;
    loop {
        let a = k as f64 * grid.level_da;
        if a >= apex_height {
            break;
        }
        levels.push(a);
        k += 1;
    }
    levels.extend(jumps.iter().map(|j| j.level));
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut values = Vec::with_capacity(levels.len() + 1);
    let mut b = 0;
    for &a in &levels {
        while tree.nodes[branch[b]].death_level <= a {
            b += 1;
        }
        values.push(size_at(&tree.nodes[branch[b]], path, a));
    }
    levels.push(apex_height);
    values.push(0.0);
    Ok(LocallyLargestPath { levels, values, jumps, apex_height, apex_time, branch, ties })
}

/// The discarded sub-excursion at every jump of Ξ, re-based at the origin.
pub fn offspring_of_locally_largest(
    tree: &SplitTree,
    path: &ExcursionPath,
    ll: &LocallyLargestPath,
) -> Vec<(f64, f64, ExcursionPath)> {
    ll.jumps.iter().map(|j| (j.z, j.level, sub_excursion(tree, path, j.offspring_node))).collect()
}

/// The fragment `node` at its birth level as an excursion from the origin.
pub fn sub_excursion(tree: &SplitTree, path: &ExcursionPath, node: usize) -> ExcursionPath {
    let v = &tree.nodes[node];
    let m = v.birth_level;
    let l = left_crossing(v, path, m);
    let r = right_crossing(v, path, m);
    let mut times = vec![0.0];
    let mut x = vec![0.0];
    let mut y = vec![0.0];
    for k in l.above..=r.above {
        let t = path.times[k] - l.t;
        if t <= *times.last().unwrap() || path.times[k] >= r.t {
            continue;
        }
        times.push(t);
        x.push(path.x[k] - l.x);
        y.push(path.y[k] - m);
    }
    let z = r.x - l.x;
    times.push(r.t - l.t);
    x.push(z);
    y.push(0.0);
    ExcursionPath { z, duration: r.t - l.t, times, x, y }
}

/// Sizes of a fragment at every level where one of its crossings changes
/// grid cell, from birth to death, in increasing level order.
fn size_breakpoints(v: &SplitNode, path: &ExcursionPath) -> Vec<(f64, f64)> {
    let (b, d) = (v.birth_level, v.death_level);
    let mut hs: Vec<f64> = Vec::new();
    let l0 = left_crossing(v, path, b).above;
    for k in l0..=v.peak {
        let h = path.y[k];
        if h >= d {
            break;
        }
        hs.push(h);
    }
    let r0 = right_crossing(v, path, b).above;
    for k in (v.peak..=r0).rev() {
        let h = path.y[k];
        if h >= d {
            break;
        }
        hs.push(h);
    }
    hs.push(b);
    hs.push(d);
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    hs.into_iter().filter(|&h| h >= b && h <= d).map(|h| (h, size_at(v, path, h))).collect()
}

/// First level in [birth, death] where |size| reaches C, if any.
fn first_level_reaching(v: &SplitNode, path: &ExcursionPath, c: f64) -> Option<f64> {
    let pts = size_breakpoints(v, path);
    if pts[0].1.abs() >= c {
        return Some(pts[0].0);
    }
    for w in pts.windows(2) {
        let ((l1, s1), (l2, s2)) = (w[0], w[1]);
        if s2.abs() >= c {
            let target = c.copysign(s2);
            let f = if s2 == s1 { 1.0 } else { ((target - s1) / (s2 - s1)).clamp(0.0, 1.0) };
            return Some(l1 + f * (l2 - l1));
        }
    }
    None
}

/// Lebesgue measure of the times t whose every ancestor fragment, at every
/// level up to y(t), has |size| < C.
pub fn time_in_small_excursions(tree: &SplitTree, path: &ExcursionPath, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid(format!("C must be positive, got {c}")));
    }
    let mut total = 0.0;
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let v = &tree.nodes[id];
        let hit = first_level_reaching(v, path, c);
        let top = hit.unwrap_or(v.death_level);
        let (lb, rb) = (left_crossing(v, path, v.birth_level), right_crossing(v, path, v.birth_level));
        let (lt, rt) = (left_crossing(v, path, top), right_crossing(v, path, top));
        total += (lt.t - lb.t) + (rb.t - rt.t);
        if hit.is_none() {
            if let Some((l, r)) = v.children {
                stack.push(l);
                stack.push(r);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Piecewise-linear path through the given (t, y) knots with x = t,
    /// sampled at spacing h.
    fn hand_path(knots: &[(f64, f64)], h: f64) -> ExcursionPath {
        let mut times = vec![];
        let mut y = vec![];
        let end = knots.last().unwrap().0;
        let n = (end / h).round() as usize;
        for k in 0..=n {
            let t = k as f64 * h;
            let i = knots.windows(2).position(|w| t <= w[1].0 + 1e-12).unwrap();
            let (a, b) = (knots[i], knots[i + 1]);
            let f = (t - a.0) / (b.0 - a.0);
            times.push(t);
            y.push(a.1 + f * (b.1 - a.1));
        }
        let n = times.len();
        y[0] = 0.0;
        y[n - 1] = 0.0;
        let x = times.clone();
        ExcursionPath { z: end, duration: end, times, x, y }
    }

    fn two_hump() -> ExcursionPath {
        hand_path(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0), (3.0, 3.0), (4.0, 0.0)], 0.25)
    }

    #[test]
    fn tent_has_no_split() {
        let p = hand_path(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 0.1);
        let t = build_split_tree(&p).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.root().birth_size, 2.0);
        let g = GridSpec { level_da: 0.25, ..Default::default() };
        let ll = locally_largest(&t, &p, &g).unwrap();
        assert!(ll.jumps.is_empty());
        assert_eq!(ll.values[0], 2.0);
        // width of the tent at height a is 2(1 − a)
        for (a, v) in ll.levels.iter().zip(&ll.values) {
            assert!((v - 2.0 * (1.0 - a)).abs() < 1e-12, "{a} {v}");
        }
    }

    #[test]
    fn two_hump_split() {
        let p = two_hump();
        let t = build_split_tree(&p).unwrap();
        assert_eq!(t.n_splits(), 1);
        assert_eq!(t.root().death_level, 1.0);
        let (l, r) = t.root().children.unwrap();
        // left hump above 1: t from 0.5 to 2; right hump: t from 2 to 3 + 2/3
        assert!((t.nodes[l].birth_size - 1.5).abs() < 1e-12);
        assert!((t.nodes[r].birth_size - (1.0 + 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(t.nodes[l].birth_level, 1.0);
    }

    #[test]
    fn fragments_on_hand_path() {
        let p = two_hump();
        let t = build_split_tree(&p).unwrap();
        let f = fragments_at_level(&t, &p, 0.0).unwrap();
        assert_eq!(f.sizes, vec![4.0]);
        assert!(fragments_at_level(&t, &p, 3.5).unwrap().is_empty());
        // at a = 1.5: left crossings t = 0.75 and 1.5, right ones 2.25 and 3.5
        let f = fragments_at_level(&t, &p, 1.5).unwrap();
        assert_eq!(f.len(), 2);
        assert!((f.sizes[0] - 1.25).abs() < 1e-12);
        assert!((f.sizes[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn locally_largest_on_hand_path() {
        let p = two_hump();
        let t = build_split_tree(&p).unwrap();
        let g = GridSpec { level_da: 0.1, ..Default::default() };
        let ll = locally_largest(&t, &p, &g).unwrap();
        assert_eq!(ll.jumps.len(), 1);
        let j = ll.jumps[0];
        assert_eq!(j.level, 1.0);
        assert!((j.z - 1.5).abs() < 1e-12);
        assert_eq!(ll.apex_height, 3.0);
        assert_eq!(ll.apex_time, 3.0);
        let before = ll.value_at(&t, &p, 1.0 - 1e-12);
        let after = ll.value_at(&t, &p, 1.0);
        assert!((before - (after + j.z)).abs() < 1e-9);
        let off = offspring_of_locally_largest(&t, &p, &ll);
        assert_eq!(off.len(), 1);
        assert_eq!(off[0].2.z, off[0].0);
        off[0].2.validate().unwrap();
    }

    #[test]
    fn time_in_small_excursions_limits() {
        let p = two_hump();
        let t = build_split_tree(&p).unwrap();
        let all = time_in_small_excursions(&t, &p, 10.0).unwrap();
        assert!((all - 4.0).abs() < 1e-12);
        assert_eq!(time_in_small_excursions(&t, &p, 4.0).unwrap(), 0.0);
        // |z| = 4 ≥ C: the root already violates the bound
        assert_eq!(time_in_small_excursions(&t, &p, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_malformed() {
        let mut p = two_hump();
        p.y[3] = 0.0;
        assert!(build_split_tree(&p).is_err());
    }
}
