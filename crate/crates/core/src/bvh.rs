//! Median-split bounding volume hierarchy over triangles.

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::scene::Triangle;

const MAX_LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray {
            origin,
            dir,
            t_min: 1e-9,
            t_max: f64::INFINITY,
        }
    }

    pub fn segment(origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Self {
        Ray {
            origin,
            dir,
            t_min,
            t_max,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub triangle: usize,
    pub t: f64,
    /// Barycentric weights of vertices 1 and 2.
    pub u: f64,
    pub v: f64,
    pub position: Vec3,
    /// Unit geometric normal, in the triangle's winding orientation.
    pub normal: Vec3,
}

#[derive(Clone, Copy, Debug)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: first entry in `Bvh::order`. Interior: index of the left child
    /// (the right child is stored separately).
    pub first: u32,
    /// Leaf: triangle count. Interior: zero.
    pub count: u32,
    pub right: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Triangle indices in leaf order.
    order: Vec<u32>,
    triangles: Vec<Triangle>,
}

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Result<Bvh> {
        if triangles.is_empty() {
            return Err(Error::EmptyScene);
        }
        let centroids: Vec<Vec3> = triangles.iter().map(Triangle::centroid).collect();
        let boxes: Vec<Aabb> = triangles.iter().map(Triangle::bounds).collect();
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / MAX_LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, &centroids, &boxes);
        Ok(Bvh {
            nodes,
            order,
            triangles: triangles.to_vec(),
        })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Triangle indices stored in a leaf.
    pub fn leaf_triangles(&self, node: &BvhNode) -> &[u32] {
        &self.order[node.first as usize..(node.first + node.count) as usize]
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Nearest hit in `(ray.t_min, ray.t_max)`. Equal distances resolve to the
    /// lower triangle index.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<(f64, usize, f64, f64)> = None;
        let mut t_max = ray.t_max;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            // Inclusive bound so that ties at `t_max` are still visited.
            if node.bounds.hit(ray.origin, inv, next_up(t_max)).is_none() {
                continue;
            }
            if node.is_leaf() {
                for &ti in self.leaf_triangles(node) {
                    let ti = ti as usize;
                    let probe = Ray {
                        t_max: next_up(t_max),
                        ..*ray
                    };
                    if let Some((t, u, v)) = self.triangles[ti].intersect(&probe) {
                        let better = match best {
                            None => true,
                            Some((bt, bi, _, _)) => t < bt || (t == bt && ti < bi),
                        };
                        if better && t < ray.t_max {
                            best = Some((t, ti, u, v));
                            t_max = t;
                        }
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.right;
                sp += 2;
            }
        }
        best.map(|(t, ti, u, v)| make_hit(&self.triangles, ray, t, ti, u, v))
    }

    /// True if any triangle is hit in `(ray.t_min, ray.t_max)`.
    pub fn occluded(&self, ray: &Ray) -> bool {
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.hit(ray.origin, inv, ray.t_max).is_none() {
                continue;
            }
            if node.is_leaf() {
                if self
                    .leaf_triangles(node)
                    .iter()
                    .any(|&ti| self.triangles[ti as usize].intersect(ray).is_some())
                {
                    return true;
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.right;
                sp += 2;
            }
        }
        false
    }

    /// True iff the segment `p -> q`, shortened by `eps` at both ends, is unobstructed.
    pub fn visible(&self, p: Vec3, q: Vec3, eps: f64) -> bool {
        let d = q - p;
        let len = d.length();
        if len <= 2.0 * eps {
            return true;
        }
        let ray = Ray::segment(p, d / len, eps, len - eps);
        !self.occluded(&ray)
    }
}

pub(crate) fn make_hit(triangles: &[Triangle], ray: &Ray, t: f64, ti: usize, u: f64, v: f64) -> Hit {
    Hit {
        triangle: ti,
        t,
        u,
        v,
        position: ray.at(t),
        normal: triangles[ti].normal(),
    }
}

fn next_up(t: f64) -> f64 {
    if t.is_finite() {
        f64::from_bits(t.to_bits() + 1)
    } else {
        t
    }
}

fn build_node(nodes: &mut Vec<BvhNode>, order: &mut [u32], offset: usize, centroids: &[Vec3], boxes: &[Aabb]) -> u32 {
    let bounds = order.iter().fold(Aabb::EMPTY, |b, &i| b.union(boxes[i as usize]));
    let index = nodes.len() as u32;
    nodes.push(BvhNode {
        bounds,
        first: offset as u32,
        count: order.len() as u32,
        right: 0,
    });
    if order.len() <= MAX_LEAF_SIZE {
        return index;
    }

    let cbounds = Aabb::from_points(order.iter().map(|&i| centroids[i as usize]));
    let axis = cbounds.extent().max_axis();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, centroids, boxes);
    let right = build_node(nodes, hi, offset + mid, centroids, boxes);
    nodes[index as usize] = BvhNode {
        bounds,
        first: left,
        count: 0,
        right,
    };
    index
}
