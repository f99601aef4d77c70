use std::fs;
use std::path::Path;

use pokegrasp::dataset::{generate, scene_name, Dataset, DatasetError, GenConfig, SCENES_DIR};
use pokegrasp::harness::catalog::default_catalog;
use pokegrasp::io;
use pokegrasp::plan::GripperSpec;
use pokegrasp::pokegt::PokeRegionConfig;
use pokegrasp::render::render;
use pokegrasp::scene::CameraModel;

fn small() -> GenConfig {
    GenConfig {
        objects: 3,
        views: 2,
        seed: 7,
        width: 160,
        height: 120,
        ..GenConfig::default()
    }
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generated_layout_is_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let catalog = default_catalog();
    let m = generate(tmp.path(), &catalog, &CameraModel::default(), &small()).unwrap();
    assert_eq!(m.scenes.len(), 6);
    let ds = Dataset::open(tmp.path()).unwrap();
    assert_eq!(ds.catalog.len(), 3);
    assert_eq!((ds.camera.width, ds.camera.height), (160, 120));
    for s in &m.scenes {
        assert_eq!(s.name, scene_name(&catalog[s.object_index].name, s.view));
        let dir = tmp.path().join(SCENES_DIR).join(&s.name);
        for f in ["scene.json", "depth.pfm", "valid.pgm", "normals.pfm", "instance.pgm", "annotations.json"] {
            assert!(dir.join(f).is_file(), "{}/{f}", s.name);
        }
        let anns = ds.annotations(&s.name).unwrap();
        assert_eq!(anns.len(), 1, "{}", s.name);
        let a = &anns[0];
        assert_eq!(a.mask_file, format!("{}_1_mask.pgm", s.name));
        let mask = io::pgm_to_mask(&fs::read(dir.join(&a.mask_file)).unwrap()).unwrap();
        let poke = io::pgm_to_mask(&fs::read(dir.join(&a.poke_file)).unwrap()).unwrap();
        assert_eq!(mask.count(), a.area);
        assert_eq!(poke.count(), a.poke_area);
        assert!(poke.is_subset_of(&mask));
    }
}

#[test]
fn stored_buffers_match_the_render() {
    let tmp = tempfile::tempdir().unwrap();
    let m = generate(tmp.path(), &default_catalog(), &CameraModel::default(), &small()).unwrap();
    let dir = tmp.path().join(SCENES_DIR).join(&m.scenes[0].name);
    let (scene, stored) = pokegrasp::dataset::load_scene(&dir).unwrap();
    let fresh = render(&scene);
    assert_eq!(stored.instance, fresh.instance);
    for (a, b) in stored.depth.as_slice().iter().zip(fresh.depth.as_slice()) {
        if b.is_finite() {
            assert!((a - b).abs() <= 1e-6 * b.abs());
        } else {
            assert!(a.is_infinite());
        }
    }
}

#[test]
fn generation_is_bit_identical_and_annotate_reproduces() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cam = CameraModel::default();
    generate(a.path(), &default_catalog(), &cam, &small()).unwrap();
    generate(b.path(), &default_catalog(), &cam, &small()).unwrap();
    let before = snapshot(a.path());
    assert_eq!(before, snapshot(b.path()));

    let ds = Dataset::open(a.path()).unwrap();
    assert_eq!(ds.annotate(&PokeRegionConfig::default()).unwrap(), 6);
    assert_eq!(before, snapshot(a.path()));
}

#[test]
fn plans_cover_every_instance() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), &default_catalog(), &CameraModel::default(), &small()).unwrap();
    let plans = Dataset::open(tmp.path()).unwrap().plan(&GripperSpec::default()).unwrap();
    assert_eq!(plans.len(), 6);
    let planned = plans.iter().filter(|p| p.grasp.is_some()).count();
    assert!(planned >= 4, "{plans:#?}");
    for p in plans.iter().filter_map(|p| p.poke.as_ref()) {
        assert!(p.point_world.z > -1e-6);
    }
}

#[test]
fn missing_dataset_and_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(Dataset::open(tmp.path()), Err(DatasetError::MissingDataset(_))));
    let cfg = GenConfig {
        objects: 10,
        ..small()
    };
    assert!(matches!(
        generate(tmp.path(), &default_catalog(), &CameraModel::default(), &cfg),
        Err(DatasetError::InvalidConfig(_))
    ));
}
