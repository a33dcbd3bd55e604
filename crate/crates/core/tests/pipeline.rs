use manylight::coarsen::StopRule;
use manylight::pipeline::{with_threads, REPORT_CSV_HEADER};
use manylight::scene_io::write_scene;
use manylight::{image_error, render, render_scene, Image, Mode, Prepared, RenderConfig, Scene};

fn small() -> RenderConfig {
    RenderConfig {
        width: 32,
        height: 32,
        vpls: 300,
        slice_size: 200,
        ..Default::default()
    }
}

fn all_leaves(mut c: RenderConfig) -> RenderConfig {
    c.cut_error = 0.0;
    c.max_cut_nodes = c.vpls;
    c.coarsen.stop = StopRule::ErrorBound(0.0);
    c
}

#[test]
fn same_image_for_any_thread_count() {
    let cfg = small();
    let one = render(&RenderConfig {
        threads: 1,
        ..cfg.clone()
    })
    .unwrap()
    .0;
    let three = render(&RenderConfig {
        threads: 3,
        ..cfg.clone()
    })
    .unwrap()
    .0;
    let again = render(&RenderConfig { threads: 1, ..cfg }).unwrap().0;
    assert!(one.bit_identical(&three));
    assert!(one.bit_identical(&again));
}

#[test]
fn single_vpl_renders_match_bruteforce_exactly() {
    let cfg = RenderConfig { vpls: 1, ..small() };
    let p = Prepared::new(Scene::cornell_box(), &cfg).unwrap();
    let (bf, _) = p.render_bruteforce().unwrap();
    let (fc, _) = p.render_fullcut().unwrap();
    assert!(fc.bit_identical(&bf));
    let p = Prepared::new(Scene::cornell_box(), &RenderConfig { rate: 1.0, ..cfg }).unwrap();
    assert!(p.render_pipeline().unwrap().0.bit_identical(&bf));
}

#[test]
fn fullcut_over_all_leaves_equals_bruteforce() {
    let p = Prepared::new(Scene::cornell_box(), &all_leaves(small())).unwrap();
    assert_eq!(p.cut.len(), 300);
    let (bf, _) = p.render_bruteforce().unwrap();
    let (fc, report) = p.render_fullcut().unwrap();
    assert!(report.slices.iter().all(|s| s.cut_size == 300 && s.merges == 0));
    let err = image_error(&fc, &bf).unwrap() / 100.0;
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn doubling_light_power_doubles_every_mode() {
    for mode in [Mode::Bruteforce, Mode::Fullcut, Mode::Pipeline] {
        let cfg = RenderConfig { mode, ..small() };
        let a = render_scene(Scene::cornell_box(), &cfg).unwrap().0;
        let b = render_scene(Scene::cornell_box().with_light_scale(2.0), &cfg)
            .unwrap()
            .0;
        assert!(a.scaled(2.0).bit_identical(&b), "{mode}");
    }
}

#[test]
fn finer_cuts_reduce_error() {
    let base = small();
    let bf = render(&RenderConfig {
        mode: Mode::Bruteforce,
        ..base.clone()
    })
    .unwrap()
    .0;
    let err = |c: RenderConfig| {
        image_error(
            &render(&RenderConfig {
                mode: Mode::Fullcut,
                ..c
            })
            .unwrap()
            .0,
            &bf,
        )
        .unwrap()
    };
    let coarse = err(RenderConfig {
        max_cut_nodes: 8,
        coarsen: Default::default(),
        ..base.clone()
    });
    let fine = err(all_leaves(base));
    assert!(fine < 1e-4 && coarse > 1.0, "coarse {coarse}%, fine {fine}%");
}

#[test]
fn pipeline_saves_shadow_rays_and_reports_every_slice() {
    let cfg = small();
    let p = Prepared::new(Scene::cornell_box(), &cfg).unwrap();
    let (_, bf) = p.render_bruteforce().unwrap();
    let (_, pl) = p.render_pipeline().unwrap();
    assert!(pl.shadow_rays < bf.shadow_rays);
    assert_eq!(pl.slices.len(), p.slices.len());
    let csv = pl.to_csv();
    assert_eq!(csv.lines().next(), Some(REPORT_CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + p.slices.len());
    for s in &pl.slices {
        assert!(s.observations >= (cfg.rate * (s.rows * s.cut_size) as f64).ceil() as usize);
        assert!(p.tree.is_valid_cut(&p.coarsened_cut(s.id)));
    }
}

#[test]
fn scene_files_render_like_the_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cornell.toml");
    write_scene(&Scene::cornell_box(), &cfg_path, "cornell.mesh").unwrap();
    let cfg = RenderConfig {
        mode: Mode::Fullcut,
        ..small()
    };
    let from_file = render(&RenderConfig {
        scene: cfg_path.display().to_string(),
        ..cfg.clone()
    })
    .unwrap()
    .0;
    let builtin = render(&cfg).unwrap().0;
    assert!(image_error(&from_file, &builtin).unwrap() < 1e-6);
}

#[test]
fn raw_output_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let img = render(&RenderConfig {
        width: 8,
        height: 6,
        ..small()
    })
    .unwrap()
    .0;
    let raw = img.write(&dir.path().join("out.ppm"), 1.0).unwrap();
    let back = Image::read_raw(&raw).unwrap();
    assert_eq!((back.width(), back.height()), (8, 6));
    assert!(back.bit_identical(&Image::from_raw_bytes(&img.to_raw_bytes(), "mem").unwrap()));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        RenderConfig { rate: 0.0, ..small() },
        RenderConfig { rate: 1.5, ..small() },
        RenderConfig { width: 0, ..small() },
        RenderConfig {
            slice_size: 0,
            ..small()
        },
        RenderConfig {
            scene: "builtin:nothing".into(),
            ..small()
        },
        RenderConfig {
            scene: "/no/such/scene.toml".into(),
            ..small()
        },
    ];
    for c in bad {
        assert!(render(&c).is_err(), "{c:?}");
    }
    assert!(with_threads(2, || Ok(rayon::current_num_threads())).unwrap() == 2);
}
