//! Binary light tree over VPLs, conservative cluster bounds and cuts.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_1_PI, FRAC_PI_2, PI};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Aabb, Color, Vec3};
use crate::vpl::Vpl;

/// Set of directions within `half_angle` of `axis`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cone {
    pub axis: Vec3,
    pub half_angle: f64,
}

impl Cone {
    pub fn around(axis: Vec3) -> Self {
        Cone { axis, half_angle: 0.0 }
    }

    pub fn contains(&self, dir: Vec3) -> bool {
        if self.half_angle >= PI {
            return true;
        }
        angle_between(self.axis, dir) <= self.half_angle + 1e-9
    }

    /// Smallest cone (of this construction) containing both.
    pub fn union(self, other: Cone) -> Cone {
        let (a, b) = if self.half_angle >= other.half_angle {
            (self, other)
        } else {
            (other, self)
        };
        let theta_d = angle_between(a.axis, b.axis);
        if (theta_d + b.half_angle).min(PI) <= a.half_angle {
            return a;
        }
        let theta_o = 0.5 * (a.half_angle + theta_d + b.half_angle);
        if theta_o >= PI {
            return Cone {
                axis: a.axis,
                half_angle: PI,
            };
        }
        let theta_r = theta_o - a.half_angle;
        let perp = b.axis - a.axis * a.axis.dot(b.axis);
        if perp.length() < 1e-12 {
            return Cone {
                axis: a.axis,
                half_angle: PI,
            };
        }
        let perp = perp.normalized();
        let axis = (a.axis * theta_r.cos() + perp * theta_r.sin()).normalized();
        // Slight widening absorbs the rounding in the rotation.
        Cone {
            axis,
            half_angle: (theta_o + 1e-9).min(PI),
        }
    }
}

// atan2 keeps full precision for nearly parallel vectors, where acos does not.
fn angle_between(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).length().atan2(a.dot(b))
}

#[derive(Clone, Debug)]
pub struct LightTreeNode {
    pub bounds: Aabb,
    pub cone: Cone,
    /// Sum of member intensities.
    pub intensity: Color,
    /// Index (into the VPL list) of the highest-luminance member.
    pub representative: usize,
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
    /// Number of member VPLs.
    pub size: usize,
}

impl LightTreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct LightTree {
    nodes: Vec<LightTreeNode>,
    vpls: Vec<Vpl>,
    /// `leaf_of[v]` is the leaf node holding VPL `v`.
    leaf_of: Vec<usize>,
}

impl LightTree {
    /// Top-down build, splitting VPL positions at the median of the longest axis.
    pub fn build(vpls: &[Vpl]) -> Result<LightTree> {
        if vpls.is_empty() {
            return Err(Error::NoLights);
        }
        let mut tree = LightTree {
            nodes: Vec::with_capacity(2 * vpls.len()),
            vpls: vpls.to_vec(),
            leaf_of: vec![usize::MAX; vpls.len()],
        };
        let mut order: Vec<usize> = (0..vpls.len()).collect();
        tree.build_node(&mut order, None);
        Ok(tree)
    }

    fn build_node(&mut self, members: &mut [usize], parent: Option<usize>) -> usize {
        let index = self.nodes.len();
        if let [v] = *members {
            let vpl = &self.vpls[v];
            self.nodes.push(LightTreeNode {
                bounds: Aabb::from_point(vpl.position),
                cone: Cone::around(vpl.normal),
                intensity: vpl.intensity,
                representative: v,
                children: None,
                parent,
                size: 1,
            });
            self.leaf_of[v] = index;
            return index;
        }
        // Placeholder, filled in once both children exist.
        self.nodes.push(LightTreeNode {
            bounds: Aabb::EMPTY,
            cone: Cone::around(Vec3::new(0.0, 0.0, 1.0)),
            intensity: Color::BLACK,
            representative: members[0],
            children: None,
            parent,
            size: members.len(),
        });
        let bounds = Aabb::from_points(members.iter().map(|&v| self.vpls[v].position));
        let axis = bounds.extent().max_axis();
        let mid = members.len().div_ceil(2);
        let vpls = &self.vpls;
        members.sort_by(|&a, &b| {
            vpls[a].position[axis]
                .total_cmp(&vpls[b].position[axis])
                .then(a.cmp(&b))
        });
        let (lo, hi) = members.split_at_mut(mid);
        let left = self.build_node(lo, Some(index));
        let right = self.build_node(hi, Some(index));

        let (l, r) = (&self.nodes[left], &self.nodes[right]);
        let representative =
            if self.vpls[r.representative].intensity.luminance() > self.vpls[l.representative].intensity.luminance() {
                r.representative
            } else {
                l.representative
            };
        let node = LightTreeNode {
            bounds: l.bounds.union(r.bounds),
            cone: l.cone.union(r.cone),
            intensity: l.intensity + r.intensity,
            representative,
            children: Some((left, right)),
            parent,
            size: members.len(),
        };
        self.nodes[index] = node;
        index
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[LightTreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &LightTreeNode {
        &self.nodes[i]
    }

    pub fn vpls(&self) -> &[Vpl] {
        &self.vpls
    }

    pub fn leaf_count(&self) -> usize {
        self.vpls.len()
    }

    pub fn leaf_of(&self, vpl: usize) -> usize {
        self.leaf_of[vpl]
    }

    /// The light a node acts as when it sits in a cut: its representative's
    /// position and orientation carrying the node's total intensity.
    pub fn cluster_light(&self, node: usize) -> Vpl {
        let n = &self.nodes[node];
        let rep = &self.vpls[n.representative];
        Vpl {
            position: rep.position,
            normal: rep.normal,
            intensity: n.intensity,
        }
    }

    /// For a node with children, `(a, b)` where `a` carries the node's representative.
    pub fn rep_child_split(&self, node: usize) -> Option<(usize, usize)> {
        let (l, r) = self.nodes[node].children?;
        if self.nodes[l].representative == self.nodes[node].representative {
            Some((l, r))
        } else {
            Some((r, l))
        }
    }

    pub fn sibling(&self, node: usize) -> Option<usize> {
        let p = self.nodes[node].parent?;
        let (l, r) = self.nodes[p].children?;
        Some(if l == node { r } else { l })
    }

    /// Upper bound on the contribution of the node's members to any point in
    /// `receivers`: `I * cos_bound / (pi * max(d_min^2, clamp^2))`, visibility taken as 1.
    pub fn contribution_bound(&self, node: usize, receivers: &Aabb, clamp_dist: f64) -> Color {
        let n = &self.nodes[node];
        let d2 = n.bounds.distance_squared(receivers).max(clamp_dist * clamp_dist);
        n.intensity * (emitter_cosine_bound(&n.bounds, &n.cone, receivers) * FRAC_1_PI / d2)
    }

    /// Bound on the error of replacing the node's members by its cluster light.
    /// Zero for leaves, where nothing is substituted.
    pub fn cluster_error_bound(&self, node: usize, receivers: &Aabb, clamp_dist: f64) -> Color {
        if self.nodes[node].is_leaf() {
            Color::BLACK
        } else {
            self.contribution_bound(node, receivers, clamp_dist)
        }
    }

    /// Checks that every leaf has exactly one ancestor-or-self in `cut`.
    pub fn is_valid_cut(&self, cut: &Cut) -> bool {
        let mut in_cut = vec![false; self.nodes.len()];
        for &n in &cut.nodes {
            if n >= self.nodes.len() || in_cut[n] {
                return false;
            }
            in_cut[n] = true;
        }
        (0..self.vpls.len()).all(|v| {
            let mut count = 0;
            let mut cur = Some(self.leaf_of[v]);
            while let Some(c) = cur {
                count += in_cut[c] as usize;
                cur = self.nodes[c].parent;
            }
            count == 1
        })
    }
}

/// Upper bound on `cos(theta_j)` at the emitter for directions from any point
/// of `emitters` to any point of `receivers`, for normals inside `cone`.
fn emitter_cosine_bound(emitters: &Aabb, cone: &Cone, receivers: &Aabb) -> f64 {
    if cone.half_angle >= PI {
        return 1.0;
    }
    // Box of difference vectors x - y, x in receivers, y in emitters.
    let dmin = receivers.min - emitters.max;
    let dmax = receivers.max - emitters.min;
    if dmin.x <= 0.0 && dmax.x >= 0.0 && dmin.y <= 0.0 && dmax.y >= 0.0 && dmin.z <= 0.0 && dmax.z >= 0.0 {
        return 1.0;
    }
    // Rotate the corners into a frame with the cone axis as z and bound them.
    let z_axis = cone.axis;
    let (x_axis, y_axis) = z_axis.orthonormal_basis();
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    for i in 0..8 {
        let c = Vec3::new(
            if i & 1 == 0 { dmin.x } else { dmax.x },
            if i & 2 == 0 { dmin.y } else { dmax.y },
            if i & 4 == 0 { dmin.z } else { dmax.z },
        );
        let t = Vec3::new(c.dot(x_axis), c.dot(y_axis), c.dot(z_axis));
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let min_angle = if hi.z <= 0.0 {
        FRAC_PI_2
    } else {
        let gap = |l: f64, h: f64| {
            if l <= 0.0 && h >= 0.0 {
                0.0
            } else {
                l.abs().min(h.abs())
            }
        };
        let rx = gap(lo.x, hi.x);
        let ry = gap(lo.y, hi.y);
        (rx * rx + ry * ry).sqrt().atan2(hi.z)
    };
    let theta = (min_angle - cone.half_angle).max(0.0);
    if theta >= FRAC_PI_2 {
        0.0
    } else {
        theta.cos()
    }
}

/// An antichain of tree nodes covering every leaf once. Stored sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cut {
    pub nodes: Vec<usize>,
}

impl Cut {
    pub fn new(mut nodes: Vec<usize>) -> Self {
        nodes.sort_unstable();
        Cut { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.nodes.iter().map(|n| format!("{n}\n")).collect()
    }

    pub fn from_text(text: &str, source: &str) -> Result<Cut> {
        let mut nodes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let n = line
                .parse::<usize>()
                .map_err(|_| Error::parse(source, i + 1, format!("expected a node index, got {line:?}")))?;
            nodes.push(n);
        }
        Ok(Cut::new(nodes))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Cut> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Cut::from_text(&text, &path.display().to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Keyed {
    key: f64,
    node: usize,
}

impl Eq for Keyed {}

impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Keyed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then_with(|| other.node.cmp(&self.node))
    }
}

/// Conservative image-wide cut. Starting from the root, the node with the
/// largest error bound is split until every bound is at most
/// `relative_error` times the summed contribution bounds of the cut, or the
/// cut holds `max_nodes` nodes.
pub fn global_cut(tree: &LightTree, receivers: &Aabb, clamp_dist: f64, relative_error: f64, max_nodes: usize) -> Cut {
    let bound = |n: usize| tree.cluster_error_bound(n, receivers, clamp_dist).luminance();
    let estimate = |n: usize| tree.contribution_bound(n, receivers, clamp_dist).luminance();

    let root = tree.root();
    let mut heap = BinaryHeap::new();
    heap.push(Keyed {
        key: bound(root),
        node: root,
    });
    let mut total = estimate(root);
    let mut size = 1usize;
    let mut done = Vec::new();
    while let Some(top) = heap.peek().copied() {
        if size >= max_nodes.max(1) || top.key <= relative_error * total {
            break;
        }
        heap.pop();
        let Some((l, r)) = tree.node(top.node).children else {
            done.push(top.node);
            continue;
        };
        total += estimate(l) + estimate(r) - estimate(top.node);
        heap.push(Keyed { key: bound(l), node: l });
        heap.push(Keyed { key: bound(r), node: r });
        size += 1;
    }
    done.extend(heap.into_iter().map(|k| k.node));
    Cut::new(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vpl(x: f64, y: f64, z: f64, i: f64) -> Vpl {
        Vpl {
            position: Vec3::new(x, y, z),
            normal: Vec3::new(0.0, 1.0, 0.0),
            intensity: Color::gray(i),
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(LightTree::build(&[]).is_err());
    }

    #[test]
    fn single_vpl_tree() {
        let v = vpl(1.0, 2.0, 3.0, 0.5);
        let t = LightTree::build(&[v]).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.node(0).intensity, v.intensity);
        assert!(t.node(0).is_leaf());
    }

    #[test]
    fn two_vpls_sum() {
        let t = LightTree::build(&[vpl(0.0, 0.0, 0.0, 0.25), vpl(1.0, 0.0, 0.0, 0.5)]).unwrap();
        assert_eq!(t.node(0).intensity, Color::gray(0.75));
        assert_eq!(t.node(0).representative, 1);
        assert_eq!(t.rep_child_split(0).map(|(a, _)| t.node(a).representative), Some(1));
    }

    #[test]
    fn cone_union_contains_both() {
        let a = Cone::around(Vec3::new(0.0, 1.0, 0.0));
        let b = Cone::around(Vec3::new(1.0, 0.0, 0.0));
        let u = a.union(b);
        assert!(u.contains(a.axis) && u.contains(b.axis));
        assert!((u.half_angle - PI / 4.0).abs() < 1e-6);
        let opposite = a.union(Cone::around(Vec3::new(0.0, -1.0, 0.0)));
        assert_eq!(opposite.half_angle, PI);
    }

    #[test]
    fn bound_decays_with_distance() {
        let t = LightTree::build(&[vpl(0.0, 0.0, 0.0, 1.0), vpl(0.1, 0.0, 0.0, 1.0)]).unwrap();
        let mut last = f64::INFINITY;
        for d in [1.0, 2.0, 4.0, 8.0, 100.0, 1e4] {
            let r = Aabb::from_points([Vec3::new(-1.0, d, -1.0), Vec3::new(1.0, d + 1.0, 1.0)]);
            let b = t.cluster_error_bound(0, &r, 0.01).luminance();
            assert!(b < last);
            last = b;
        }
        assert!(last < 1e-7);
        let leaf = t.leaf_of(0);
        assert_eq!(
            t.cluster_error_bound(leaf, &Aabb::from_point(Vec3::ZERO), 0.01),
            Color::BLACK
        );
    }

    #[test]
    fn receivers_behind_cone_get_zero_bound() {
        let t = LightTree::build(&[vpl(0.0, 0.0, 0.0, 1.0), vpl(0.1, 0.0, 0.0, 1.0)]).unwrap();
        let below = Aabb::from_points([Vec3::new(-1.0, -3.0, -1.0), Vec3::new(1.0, -2.0, 1.0)]);
        assert_eq!(t.cluster_error_bound(0, &below, 0.01), Color::BLACK);
    }

    #[test]
    fn global_cut_extremes() {
        let vpls: Vec<Vpl> = (0..40)
            .map(|i| vpl(i as f64 * 0.1, 0.0, (i % 7) as f64, 1.0 + i as f64))
            .collect();
        let t = LightTree::build(&vpls).unwrap();
        let r = Aabb::from_points([Vec3::new(-1.0, -1.0, -1.0), Vec3::new(5.0, 5.0, 8.0)]);
        assert_eq!(global_cut(&t, &r, 0.01, 0.5, 1).nodes, vec![t.root()]);
        let all = global_cut(&t, &r, 0.01, 0.0, 1000);
        assert_eq!(all.len(), 40);
        assert!(all.nodes.iter().all(|&n| t.node(n).is_leaf()));
        let some = global_cut(&t, &r, 0.01, 0.05, 1000);
        assert!(t.is_valid_cut(&some));
    }

    #[test]
    fn invalid_cuts_detected() {
        let vpls: Vec<Vpl> = (0..8).map(|i| vpl(i as f64, 0.0, 0.0, 1.0)).collect();
        let t = LightTree::build(&vpls).unwrap();
        assert!(t.is_valid_cut(&Cut::new(vec![0])));
        let (l, r) = t.node(0).children.unwrap();
        assert!(t.is_valid_cut(&Cut::new(vec![l, r])));
        assert!(!t.is_valid_cut(&Cut::new(vec![l])));
        assert!(!t.is_valid_cut(&Cut::new(vec![0, l])));
    }

    #[test]
    fn cut_text_roundtrip_and_errors() {
        let c = Cut::new(vec![5, 2, 9]);
        assert_eq!(Cut::from_text(&c.to_text(), "x").unwrap(), c);
        let err = Cut::from_text("1\n2\nthree\n", "cut.txt").unwrap_err();
        assert_eq!(err.to_string(), "cut.txt:3: expected a node index, got \"three\"");
    }
}
