mod common;

use std::f64::consts::FRAC_1_PI;

use common::*;
use manylight::rng::stream_rng;
use manylight::shading::generate_surface_points;
use manylight::{global_cut, trace_vpls, Aabb, Color, LightTree, Scene, Vec3, Vpl};
use proptest::prelude::*;
use rand::Rng;

/// Leaves below `node`, by walking the children.
fn leaves(tree: &LightTree, node: usize, out: &mut Vec<usize>) {
    match tree.node(node).children {
        None => out.push(node),
        Some((l, r)) => {
            leaves(tree, l, out);
            leaves(tree, r, out);
        }
    }
}

#[test]
fn structure_audit_on_random_vpls() {
    let vpls = random_vpls(&mut stream_rng(21, 0), 1000);
    let tree = LightTree::build(&vpls).unwrap();
    assert_eq!(tree.nodes().len(), 2 * vpls.len() - 1);
    for (i, node) in tree.nodes().iter().enumerate() {
        let mut under = Vec::new();
        leaves(&tree, i, &mut under);
        assert_eq!(under.len(), node.size);
        let members: Vec<&Vpl> = under
            .iter()
            .map(|&l| &tree.vpls()[tree.node(l).representative])
            .collect();
        let sum: Color = members.iter().map(|v| v.intensity).sum();
        for c in 0..3 {
            assert!((sum.channel(c) - node.intensity.channel(c)).abs() <= 1e-12 * sum.channel(c));
        }
        for v in &members {
            assert!(node.bounds.contains_point(v.position));
            assert!(node.cone.contains(v.normal));
        }
        let rep = &tree.vpls()[node.representative];
        assert!(members
            .iter()
            .all(|v| v.intensity.luminance() <= rep.intensity.luminance()));
        if let Some((l, r)) = node.children {
            assert!(node.bounds.contains(&tree.node(l).bounds));
            assert!(node.bounds.contains(&tree.node(r).bounds));
            assert_eq!(node.intensity, tree.node(l).intensity + tree.node(r).intensity);
            assert_eq!(tree.node(l).parent, Some(i));
        }
    }
}

/// `I cos_j cos_i / (pi max(d^2, c^2))` for one emitter, no occlusion.
fn unoccluded(v: &Vpl, intensity: Color, x: Vec3, n: Vec3, clamp: f64) -> Color {
    let d = v.position - x;
    let d2 = d.length_squared();
    let w = d / d2.sqrt();
    let (ci, cj) = (n.dot(w).max(0.0), (-v.normal.dot(w)).max(0.0));
    intensity * (ci * cj * FRAC_1_PI / d2.max(clamp * clamp))
}

#[test]
fn error_bound_dominates_dense_grid() {
    let mut rng = stream_rng(22, 0);
    for trial in 0..20 {
        // A compact cluster with loosely aligned normals, receivers some distance away.
        let axis = random_unit(&mut rng);
        let center = random_vec(&mut rng, 0.0, 1.0);
        let vpls: Vec<Vpl> = (0..16)
            .map(|_| Vpl {
                position: center + random_vec(&mut rng, -0.05, 0.05),
                normal: (axis + random_unit(&mut rng) * 0.4).normalized(),
                intensity: Color::gray(rng.random_range(0.1..1.0)),
            })
            .collect();
        let tree = LightTree::build(&vpls).unwrap();
        let root = tree.root();
        let lo = center + axis * 0.2 + random_vec(&mut rng, -0.3, 0.3);
        let receivers = Aabb::from_points([lo, lo + Vec3::new(0.3, 0.3, 0.3)]);
        let clamp = if trial % 2 == 0 { 0.01 } else { 0.2 };
        let bound = tree.cluster_error_bound(root, &receivers, clamp);
        let cluster = tree.cluster_light(root);
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    let t = Vec3::new(i as f64, j as f64, k as f64) / 7.0;
                    let x = receivers.min + Vec3::new(t.x * 0.3, t.y * 0.3, t.z * 0.3);
                    let n = random_unit(&mut rng);
                    let exact: Color = vpls.iter().map(|v| unoccluded(v, v.intensity, x, n, clamp)).sum();
                    let approx = unoccluded(&cluster, cluster.intensity, x, n, clamp);
                    for c in 0..3 {
                        let err = (exact.channel(c) - approx.channel(c)).abs();
                        assert!(
                            err <= bound.channel(c) * (1.0 + 1e-9),
                            "trial {trial}: {err} > {}",
                            bound.channel(c)
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn default_cut_on_fifty_thousand_vpls() {
    let scene = Scene::cornell_box();
    let vpls = trace_vpls(&scene, 50_000, 3, 4).unwrap();
    let tree = LightTree::build(&vpls).unwrap();
    let points = generate_surface_points(&scene, 32, 32);
    let receivers = Aabb::from_points(points.iter().map(|p| p.position));
    let clamp = 0.01 * scene.diagonal();
    let cut = global_cut(&tree, &receivers, clamp, 0.02, 1024);
    assert!(tree.is_valid_cut(&cut));
    assert!((50..1024).contains(&cut.len()), "cut size {}", cut.len());
    let total: f64 = cut
        .nodes
        .iter()
        .map(|&n| tree.contribution_bound(n, &receivers, clamp).luminance())
        .sum();
    for &n in &cut.nodes {
        assert!(tree.cluster_error_bound(n, &receivers, clamp).luminance() <= 0.02 * total * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn global_cut_is_an_antichain_cover(seed in any::<u64>(), n in 1usize..300, rel in 0.0..0.5f64, max in 1usize..400) {
        let vpls = random_vpls(&mut stream_rng(seed, 3), n);
        let tree = LightTree::build(&vpls).unwrap();
        let receivers = Aabb::from_points([Vec3::new(0.0, -1.0, 0.0), Vec3::new(1.0, -0.5, 1.0)]);
        let cut = global_cut(&tree, &receivers, 0.01, rel, max);
        prop_assert!(tree.is_valid_cut(&cut));
        prop_assert!(cut.len() <= max.max(1).min(n));
    }
}
