//! Per-slice coarsening of the global cut from sparsely sampled entries.
//!
//! Every node of the incoming cut gets a set of sample rows `zeta` sized in
//! proportion to its intensity. Sibling pairs `(a, b)` both present in the
//! cut are merge candidates, `a` being the child that carries the parent's
//! representative. Merging replaces `b`'s column by a rescaled copy of `a`'s:
//!
//! ```text
//! eps(f)  = max over zeta_f of |lum(V_b - V_a lum(I_b) / lum(I_a))|
//! cost(f) = eps(f) + cost(b),   cost = 0 on the incoming cut
//! zeta_f  = zeta_a U zeta_b
//! ```
//!
//! Pairs are merged cheapest first while the cost stays below the bound.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::seq::index;
use rand::Rng;

use crate::completion::SparseObservations;
use crate::error::Result;
use crate::light_tree::{Cut, LightTree};
use crate::math::Color;
use crate::shading::entry_value;

/// Source of the factored lighting-matrix terms for one slice.
pub trait EntryEvaluator {
    fn rows(&self) -> usize;
    fn albedo(&self, row: usize) -> Color;
    /// Geometry term of VPL `vpl` at `row` (see `Shader::geometry`); the flag
    /// reports whether a shadow ray was cast.
    fn geometry(&self, row: usize, vpl: usize) -> (f64, bool);
}

/// Memoized geometry terms keyed by `(vpl, row)`. Since a cut node shines as
/// its representative VPL, one cached term serves every node sharing that
/// representative.
pub struct GeometryCache<'e, E: EntryEvaluator> {
    eval: &'e E,
    values: HashMap<(usize, usize), f64>,
    /// Rows evaluated per VPL, in evaluation order.
    rows_of: HashMap<usize, Vec<usize>>,
    evaluations: usize,
    shadow_rays: usize,
}

impl<'e, E: EntryEvaluator> GeometryCache<'e, E> {
    pub fn new(eval: &'e E) -> Self {
        GeometryCache {
            eval,
            values: HashMap::new(),
            rows_of: HashMap::new(),
            evaluations: 0,
            shadow_rays: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.eval.rows()
    }

    pub fn geometry(&mut self, row: usize, vpl: usize) -> f64 {
        if let Some(&g) = self.values.get(&(vpl, row)) {
            return g;
        }
        let (g, traced) = self.eval.geometry(row, vpl);
        self.evaluations += 1;
        self.shadow_rays += traced as usize;
        self.values.insert((vpl, row), g);
        self.rows_of.entry(vpl).or_default().push(row);
        g
    }

    /// Exact entry for the cluster light of tree node `node` at `row`.
    pub fn entry(&mut self, tree: &LightTree, row: usize, node: usize) -> Color {
        let n = tree.node(node);
        let g = self.geometry(row, n.representative);
        entry_value(self.eval.albedo(row), n.intensity, g)
    }

    pub fn cached_rows(&self, vpl: usize) -> &[usize] {
        self.rows_of.get(&vpl).map_or(&[], Vec::as_slice)
    }

    /// Entries evaluated so far (cache misses).
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn shadow_rays(&self) -> usize {
        self.shadow_rays
    }

    /// Every cached entry of the cut's columns, column `c` being `cut.nodes[c]`.
    pub fn observations(&mut self, tree: &LightTree, cut: &Cut) -> Result<SparseObservations> {
        let mut obs = SparseObservations::new(self.rows(), cut.len());
        for (col, &node) in cut.nodes.iter().enumerate() {
            let rep = tree.node(node).representative;
            let rows = self.cached_rows(rep).to_vec();
            for row in rows {
                let v = self.entry(tree, row, node);
                obs.insert(row, col, v)?;
            }
        }
        Ok(obs)
    }
}

/// When to stop merging.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Merge while the cost is below this absolute luminance.
    ErrorBound(f64),
    /// Merge while the cost is below this fraction of the slice's estimated
    /// mean per-pixel luminance.
    Relative(f64),
    /// Merge cheapest first until the cut has this many nodes.
    TargetLights(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarsenParams {
    pub stop: StopRule,
    /// Sample rows given to the brightest node of the incoming cut; the
    /// per-unit-luminance rate follows from it.
    pub samples_for_brightest: f64,
    pub min_samples: usize,
    /// Defaults to the slice size.
    pub max_samples: Option<usize>,
}

impl Default for CoarsenParams {
    fn default() -> Self {
        CoarsenParams {
            stop: StopRule::Relative(0.02),
            samples_for_brightest: 16.0,
            min_samples: 4,
            max_samples: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub parent: usize,
    /// Child carrying the parent's representative.
    pub a: usize,
    pub b: usize,
    pub epsilon: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct CoarsenOutcome {
    pub cut: Cut,
    /// Merges in the order performed.
    pub merges: Vec<Merge>,
    /// Absolute bound the costs were compared against (infinite for `TargetLights`).
    pub bound: f64,
    /// Final accumulated cost per node of `cut`, aligned with `cut.nodes`.
    pub costs: Vec<f64>,
}

/// `clamp(round(k lum(I)), min_n, max_n)`.
pub fn sample_count(intensity: Color, k: f64, min_n: usize, max_n: usize) -> usize {
    let n = (k * intensity.luminance()).round();
    let n = if n.is_finite() && n > 0.0 {
        n.min(usize::MAX as f64) as usize
    } else {
        0
    };
    n.clamp(min_n, max_n.max(min_n))
}

/// `n` distinct rows drawn uniformly from `0..rows`, sorted; all rows when `n >= rows`.
pub fn pick_pixels<R: Rng + ?Sized>(rows: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if n >= rows {
        return (0..rows).collect();
    }
    let mut v = index::sample(rng, rows, n).into_vec();
    v.sort_unstable();
    v
}

/// `max_r |lum(V_b[r] - V_a[r] lum(I_b) / lum(I_a))|`, or `max_r |lum(V_b[r])|`
/// when `lum(I_a) = 0`.
pub fn merge_error(va: &[Color], vb: &[Color], ia: Color, ib: Color) -> f64 {
    assert_eq!(va.len(), vb.len(), "sample vectors differ in length");
    let la = ia.luminance();
    if la == 0.0 {
        return vb.iter().map(|v| v.luminance().abs()).fold(0.0, f64::max);
    }
    let s = ib.luminance() / la;
    va.iter()
        .zip(vb)
        .map(|(&a, &b)| (b - a * s).luminance().abs())
        .fold(0.0, f64::max)
}

struct NodeState {
    cost: f64,
    zeta: Vec<usize>,
}

struct Candidate {
    cost: f64,
    epsilon: f64,
    parent: usize,
    zeta: Vec<usize>,
}

// Min-heap order on (cost, parent).
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then(other.parent.cmp(&self.parent))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

/// Coarsens `global` for one slice. All evaluations go through `cache`, so
/// afterwards `cache.observations(tree, &outcome.cut)` yields every entry
/// that was computed for the resulting columns.
pub fn coarsen_cut<E: EntryEvaluator, R: Rng + ?Sized>(
    tree: &LightTree,
    global: &Cut,
    cache: &mut GeometryCache<'_, E>,
    params: &CoarsenParams,
    rng: &mut R,
) -> CoarsenOutcome {
    let m = cache.rows();
    if m == 0 || global.is_empty() {
        return CoarsenOutcome {
            cut: global.clone(),
            merges: Vec::new(),
            bound: 0.0,
            costs: vec![0.0; global.len()],
        };
    }
    let max_n = params.max_samples.unwrap_or(m).clamp(1, m);
    let min_n = params.min_samples.clamp(1, max_n);
    let brightest = global
        .nodes
        .iter()
        .map(|&n| tree.node(n).intensity.luminance())
        .fold(0.0, f64::max);
    let k = if brightest > 0.0 {
        params.samples_for_brightest / brightest
    } else {
        0.0
    };

    let mut state: HashMap<usize, NodeState> = HashMap::with_capacity(global.len());
    let mut per_pixel = 0.0;
    for &node in &global.nodes {
        let n = sample_count(tree.node(node).intensity, k, min_n, max_n);
        let zeta = pick_pixels(m, n, rng);
        let sum: f64 = zeta.iter().map(|&r| cache.entry(tree, r, node).luminance()).sum();
        per_pixel += sum / zeta.len() as f64;
        state.insert(node, NodeState { cost: 0.0, zeta });
    }

    let (bound, target) = match params.stop {
        StopRule::ErrorBound(b) => (b, 0),
        StopRule::Relative(f) => (f * per_pixel, 0),
        StopRule::TargetLights(t) => (f64::INFINITY, t),
    };

    let candidate = |p: usize, state: &HashMap<usize, NodeState>, cache: &mut GeometryCache<'_, E>, rng: &mut R| {
        let (a, b) = tree.rep_child_split(p).expect("merge parent has children");
        let (sa, sb) = (&state[&a], &state[&b]);
        let mut zeta = union_sorted(&sa.zeta, &sb.zeta);
        let need = sample_count(tree.node(p).intensity, k, min_n, max_n);
        if zeta.len() < need {
            top_up(&mut zeta, need, m, rng);
        }
        let va: Vec<Color> = zeta.iter().map(|&r| cache.entry(tree, r, a)).collect();
        let vb: Vec<Color> = zeta.iter().map(|&r| cache.entry(tree, r, b)).collect();
        let epsilon = merge_error(&va, &vb, tree.node(a).intensity, tree.node(b).intensity);
        Candidate {
            cost: epsilon + sb.cost,
            epsilon,
            parent: p,
            zeta,
        }
    };

    let mut heap = BinaryHeap::new();
    for &node in &global.nodes {
        let Some(p) = tree.node(node).parent else { continue };
        let (l, r) = tree.node(p).children.expect("parent has children");
        if l == node && state.contains_key(&r) {
            heap.push(candidate(p, &state, cache, rng));
        }
    }

    let mut size = global.len();
    let mut merges = Vec::new();
    while let Some(c) = heap.pop() {
        let go = match params.stop {
            StopRule::TargetLights(_) => size > target,
            _ => c.cost < bound,
        };
        if !go {
            break;
        }
        let (a, b) = tree.rep_child_split(c.parent).expect("merge parent has children");
        state.remove(&a);
        state.remove(&b);
        state.insert(
            c.parent,
            NodeState {
                cost: c.cost,
                zeta: c.zeta,
            },
        );
        size -= 1;
        merges.push(Merge {
            parent: c.parent,
            a,
            b,
            epsilon: c.epsilon,
            cost: c.cost,
        });
        if let Some(s) = tree.sibling(c.parent) {
            if state.contains_key(&s) {
                let gp = tree.node(c.parent).parent.expect("sibling implies parent");
                heap.push(candidate(gp, &state, cache, rng));
            }
        }
    }

    let cut = Cut::new(state.keys().copied().collect());
    let costs = cut.nodes.iter().map(|n| state[n].cost).collect();
    CoarsenOutcome {
        cut,
        merges,
        bound,
        costs,
    }
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Adds uniformly chosen rows not yet in the sorted `zeta` until it has `need`.
fn top_up<R: Rng + ?Sized>(zeta: &mut Vec<usize>, need: usize, rows: usize, rng: &mut R) {
    let free: Vec<usize> = (0..rows).filter(|r| zeta.binary_search(r).is_err()).collect();
    let extra = (need - zeta.len()).min(free.len());
    zeta.extend(index::sample(rng, free.len(), extra).into_iter().map(|i| free[i]));
    zeta.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::rng::stream_rng;
    use crate::vpl::Vpl;

    #[test]
    fn sample_count_clamps() {
        assert_eq!(sample_count(Color::BLACK, 2.0, 3, 100), 3);
        assert_eq!(sample_count(Color::gray(10.0), 2.0, 1, 100), 20);
        assert_eq!(sample_count(Color::gray(1e300), 2.0, 1, 100), 100);
    }

    #[test]
    fn pick_pixels_distinct_and_in_range() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(pick_pixels(5, 9, &mut rng), vec![0, 1, 2, 3, 4]);
        let p = pick_pixels(100, 30, &mut rng);
        assert_eq!(p.len(), 30);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(p.iter().all(|&r| r < 100));
        assert_eq!(pick_pixels(100, 1, &mut rng).len(), 1);
    }

    #[test]
    fn merge_error_examples() {
        let g = |v: f64| Color::gray(v);
        let one = g(1.0);
        assert_eq!(merge_error(&[g(1.0), g(2.0)], &[g(1.0), g(2.0)], one, one), 0.0);
        let e = merge_error(&[g(1.0), g(2.0)], &[g(2.0), g(3.0)], one, one);
        assert!((e - 1.0).abs() < 1e-12);
        let e = merge_error(&[g(0.0), g(0.0)], &[g(0.7), g(0.1)], Color::BLACK, one);
        assert!((e - 0.7).abs() < 1e-12);
        let e = merge_error(&[g(0.0), g(0.0)], &[g(0.7), g(0.1)], one, one);
        assert!((e - 0.7).abs() < 1e-12);
    }

    #[test]
    fn union_and_top_up() {
        assert_eq!(union_sorted(&[1, 3, 5], &[2, 3, 6]), vec![1, 2, 3, 5, 6]);
        let mut z = vec![0, 4];
        top_up(&mut z, 5, 5, &mut stream_rng(0, 0));
        assert_eq!(z, vec![0, 1, 2, 3, 4]);
    }

    /// Columns given by a table; lights 2t and 2t+1 are exact multiples.
    struct Table {
        g: Vec<Vec<f64>>,
    }

    impl EntryEvaluator for Table {
        fn rows(&self) -> usize {
            self.g.len()
        }
        fn albedo(&self, _row: usize) -> Color {
            Color::gray(1.0)
        }
        fn geometry(&self, row: usize, vpl: usize) -> (f64, bool) {
            (self.g[row][vpl], false)
        }
    }

    fn leaves_cut(tree: &LightTree) -> Cut {
        Cut::new((0..tree.leaf_count()).map(|v| tree.leaf_of(v)).collect())
    }

    #[test]
    fn zero_bound_keeps_cut_and_proportional_pairs_merge() {
        let vpls: Vec<Vpl> = (0..4)
            .map(|i| Vpl {
                position: Vec3::new(i as f64, 0.0, 0.0),
                normal: Vec3::new(0.0, 1.0, 0.0),
                intensity: Color::gray(1.0),
            })
            .collect();
        let tree = LightTree::build(&vpls).unwrap();
        // Lights 0,1 identical, 2,3 identical, the two pairs different.
        let g: Vec<Vec<f64>> = (0..8)
            .map(|r| {
                let x = r as f64;
                vec![x, x, 7.0 - x, 7.0 - x]
            })
            .collect();
        let table = Table { g };
        let cut = leaves_cut(&tree);

        let mut cache = GeometryCache::new(&table);
        let p = CoarsenParams {
            stop: StopRule::ErrorBound(0.0),
            ..Default::default()
        };
        let out = coarsen_cut(&tree, &cut, &mut cache, &p, &mut stream_rng(0, 0));
        assert_eq!(out.cut, cut);

        let mut cache = GeometryCache::new(&table);
        let p = CoarsenParams {
            stop: StopRule::ErrorBound(1e-9),
            ..Default::default()
        };
        let out = coarsen_cut(&tree, &cut, &mut cache, &p, &mut stream_rng(0, 0));
        assert_eq!(out.cut.len(), 2);
        assert!(tree.is_valid_cut(&out.cut));
        assert!(out.merges.iter().all(|m| m.cost == 0.0));
    }

    #[test]
    fn target_above_cut_size_is_identity() {
        let vpls: Vec<Vpl> = (0..3)
            .map(|i| Vpl {
                position: Vec3::new(i as f64, 0.0, 0.0),
                normal: Vec3::new(0.0, 1.0, 0.0),
                intensity: Color::gray(1.0),
            })
            .collect();
        let tree = LightTree::build(&vpls).unwrap();
        let table = Table {
            g: vec![vec![1.0, 2.0, 3.0]; 4],
        };
        let cut = leaves_cut(&tree);
        let mut cache = GeometryCache::new(&table);
        let p = CoarsenParams {
            stop: StopRule::TargetLights(10),
            ..Default::default()
        };
        let out = coarsen_cut(&tree, &cut, &mut cache, &p, &mut stream_rng(0, 0));
        assert_eq!(out.cut, cut);
    }

    #[test]
    fn observations_cover_cached_rows_exactly() {
        let vpls: Vec<Vpl> = (0..2)
            .map(|i| Vpl {
                position: Vec3::new(i as f64, 0.0, 0.0),
                normal: Vec3::new(0.0, 1.0, 0.0),
                intensity: Color::gray(2.0),
            })
            .collect();
        let tree = LightTree::build(&vpls).unwrap();
        let table = Table {
            g: (0..6).map(|r| vec![r as f64, 1.0]).collect(),
        };
        let cut = leaves_cut(&tree);
        let mut cache = GeometryCache::new(&table);
        let p = CoarsenParams {
            stop: StopRule::ErrorBound(0.0),
            min_samples: 2,
            samples_for_brightest: 2.0,
            ..Default::default()
        };
        let out = coarsen_cut(&tree, &cut, &mut cache, &p, &mut stream_rng(3, 0));
        let obs = cache.observations(&tree, &out.cut).unwrap();
        for (i, j, v) in obs.iter() {
            let node = out.cut.nodes[j];
            let rep = tree.node(node).representative;
            assert_eq!(
                v,
                entry_value(Color::gray(1.0), tree.node(node).intensity, table.g[i][rep])
            );
        }
        assert_eq!(obs.len(), cache.evaluations());
    }
}
