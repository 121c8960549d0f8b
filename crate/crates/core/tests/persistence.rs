mod common;

use common::fixtures::random_f32_volume;
use common::ply::parse_splat_ply;
use common::*;
use gaussvol::error::Error;
use gaussvol::gdf::{extract_gdf, GdfVolume};
use gaussvol::io::manifest::{camera_to_world, load_dataset, read_manifest, write_dataset};
use gaussvol::io::ply::{ply_bytes, SH_C0};
use gaussvol::io::volume::{
    gdf_to_bytes, load_gdf, load_volume, save_gdf, save_volume, volume_file_len, volume_to_bytes,
};
use gaussvol::io::{export_ply, read_png, write_png};
use gaussvol::model::{logit, sigmoid, Bounds, GaussianAttributes, GaussianVolume, ImageBuffer};
use gaussvol::scene::{make_scene, render_dataset, SceneSpec, ViewSpec};
use rand::Rng;

#[test]
fn volume_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, n) in [(1, 2), (2, 5), (3, 8)] {
        let v = random_f32_volume(seed, n);
        let path = dir.path().join(format!("v{n}.gvol"));
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back.resolution(), n);
        assert_eq!(back.active_mask(), v.active_mask());
        for (a, b) in back.attributes().iter().zip(v.attributes()) {
            let (a, b) = (a.to_channels(), b.to_channels());
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.bounds(), v.bounds());
        // byte-identical re-save
        assert_eq!(volume_to_bytes(&back), std::fs::read(&path).unwrap());
    }
}

#[test]
fn volume_file_size_at_32() {
    assert_eq!(volume_file_len(32), 36 + 32768 * 14 * 4 + 32768);
    let v = GaussianVolume::filled(32, Bounds::unit(), GaussianAttributes::default()).unwrap();
    assert_eq!(volume_to_bytes(&v).len(), 36 + 32768 * 14 * 4 + 32768);
}

#[test]
fn arbitrary_f64_volume_saves_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let v = make_scene(&SceneSpec::default()).unwrap();
    let (a, b) = (dir.path().join("a.gvol"), dir.path().join("b.gvol"));
    save_volume(&v, &a).unwrap();
    save_volume(&v, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back = load_volume(&a).unwrap();
    for (x, y) in back.attributes().iter().zip(v.attributes()) {
        for (p, q) in x.to_channels().iter().zip(y.to_channels()) {
            assert_eq!(*p, q as f32 as f64);
        }
    }
}

#[test]
fn truncated_and_corrupt_volume_files_fail_closed() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_f32_volume(4, 3);
    let bytes = volume_to_bytes(&v);
    let path = dir.path().join("t.gvol");
    // cut mid-record
    std::fs::write(&path, &bytes[..36 + 14 * 4 * 5 + 7]).unwrap();
    assert!(matches!(load_volume(&path), Err(Error::Truncated { .. })));
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"GGDF");
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_volume(&path), Err(Error::BadMagic { .. })));
    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&2u32.to_le_bytes());
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_volume(&path), Err(Error::VersionMismatch { found: 2, .. })));
    assert!(matches!(load_volume(&dir.path().join("missing.gvol")), Err(Error::Io { .. })));
}

#[test]
fn gdf_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(8);
    let values: Vec<f64> = (0..216).map(|_| r.random_range(0.0f32..4.0) as f64).collect();
    let g = GdfVolume::new(6, Bounds::unit(), values).unwrap();
    let path = dir.path().join("g.ggdf");
    save_gdf(&g, &path).unwrap();
    let back = load_gdf(&path).unwrap();
    assert_eq!(back, g);
    assert_eq!(&std::fs::read(&path).unwrap()[..4], b"GGDF");
    assert_eq!(gdf_to_bytes(&back), std::fs::read(&path).unwrap());
    std::fs::write(&path, &gdf_to_bytes(&g)[..100]).unwrap();
    assert!(matches!(load_gdf(&path), Err(Error::Truncated { .. })));

    let extracted = extract_gdf(&random_f32_volume(5, 4), 0.05).unwrap();
    save_gdf(&extracted, &path).unwrap();
    assert_eq!(gdf_to_bytes(&load_gdf(&path).unwrap()), gdf_to_bytes(&extracted));
}

#[test]
fn ply_header_and_filter() {
    let v = random_f32_volume(6, 4);
    let floor = 0.3;
    let expected = (0..v.len())
        .filter(|&i| v.is_active(i) && sigmoid(v.attributes()[i].opacity_logit) >= floor)
        .count();
    let ply = parse_splat_ply(&ply_bytes(&v, floor)).unwrap();
    assert_eq!(ply.count, expected);
    assert_eq!(ply.vertices.len(), expected);
    assert_eq!(ply.properties.len(), 14);
}

#[test]
fn ply_single_gaussian_position_and_color() {
    let mut v = GaussianVolume::filled(2, Bounds::unit(), GaussianAttributes::default()).unwrap();
    for i in 0..8 {
        v.set_active(i, false);
    }
    v.attributes_mut()[5] = GaussianAttributes {
        offset: [0.25, -0.5, 0.125],
        log_scale: [-2.0, -1.5, -1.0],
        rotation: [1.0, 0.0, 0.0, 0.0],
        opacity_logit: logit(0.75),
        color: [0.5 + SH_C0, 0.5, 0.5 - SH_C0],
    };
    v.set_active(5, true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ply");
    export_ply(&v, &path, 0.05).unwrap();
    let ply = parse_splat_ply(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(ply.count, 1);
    let row = &ply.vertices[0];
    let c = v.center(5);
    assert_eq!([row["x"], row["y"], row["z"]], [c.x as f32, c.y as f32, c.z as f32]);
    assert!((row["f_dc_0"] - 1.0).abs() < 1e-6 && row["f_dc_1"].abs() < 1e-6);
    assert_eq!(row["scale_2"], -1.0);
    assert_eq!(row["opacity"], logit(0.75) as f32);
}

#[test]
fn ply_with_nothing_above_floor() {
    let v = GaussianVolume::filled(
        3,
        Bounds::unit(),
        GaussianAttributes {
            opacity_logit: logit(0.01),
            ..Default::default()
        },
    )
    .unwrap();
    let ply = parse_splat_ply(&ply_bytes(&v, 0.05)).unwrap();
    assert_eq!(ply.count, 0);
}

#[test]
fn manifest_roundtrip_preserves_poses() {
    let dir = tempfile::tempdir().unwrap();
    let scene = make_scene(&SceneSpec {
        gaussian_count: 30,
        ..SceneSpec::default()
    })
    .unwrap();
    let data = render_dataset(&scene, &ViewSpec::new(10, 2.4, 20)).unwrap();
    write_dataset(dir.path(), &data).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), data.len());
    assert_eq!(back.background, data.background);
    assert_eq!(back.bounds, data.bounds);
    for (a, b) in back.views.iter().zip(&data.views) {
        assert_eq!(a.name, b.name);
        assert!((a.camera.rotation - b.camera.rotation).abs().max() < 1e-6);
        assert!((a.camera.translation - b.camera.translation).abs().max() < 1e-6);
        assert!((camera_to_world(&a.camera) - camera_to_world(&b.camera)).abs().max() < 1e-6);
        assert!((a.camera.fx - b.camera.fx).abs() < 1e-9 && (a.camera.cx - b.camera.cx).abs() < 1e-9);
        // images pass through 8-bit sRGB
        let worst = a.image.rgb.iter().zip(&b.image.rgb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 0.01, "image difference {worst}");
    }
}

#[test]
fn manifest_in_nerf_dialect() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("train")).unwrap();
    write_png(&dir.path().join("train/r_0.png"), &ImageBuffer::filled(8, 6, [0.5; 3])).unwrap();
    // camera at +z looking at the origin, OpenGL convention, no extension on the path
    let text = r#"{
        "camera_angle_x": 1.5707963267948966,
        "frames": [{"file_path": "./train/r_0", "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,4],[0,0,0,1]]}]
    }"#;
    std::fs::write(dir.path().join("transforms.json"), text).unwrap();
    let d = load_dataset(&dir.path().join("transforms.json")).unwrap();
    let cam = &d.views[0].camera;
    assert!((cam.fx - 4.0).abs() < 1e-12);
    assert!((cam.forward() - nalgebra::Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    assert!((cam.to_camera(&nalgebra::Vector3::zeros()).z - 4.0).abs() < 1e-12);
    // world +y projects upward, to smaller row numbers
    let up = cam.to_camera(&nalgebra::Vector3::new(0.0, 1.0, 0.0));
    assert!(up.y < 0.0);
    assert_eq!(d.background, [1.0; 3]);
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transforms.json");
    std::fs::write(&path, r#"{"camera_angle_x": 0.8, "frames": []}"#).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Config(_))));
    std::fs::write(&path, r#"{"camera_angle_x": "wide", "frames": []}"#).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { .. })));
    std::fs::write(
        &path,
        r#"{"camera_angle_x": 0.8, "frames": [{"file_path": "nope.png", "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}]}"#,
    )
    .unwrap();
    match load_dataset(dir.path()) {
        Err(Error::Parse { field, .. }) => assert!(field.contains("file_path")),
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(matches!(load_dataset(&dir.path().join("absent")), Err(Error::Io { .. })));
    assert!(read_manifest(&path).is_ok());
}

#[test]
fn png_quantization_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(1);
    let img = random_image(&mut r, 7, 5);
    let path = dir.path().join("i.png");
    write_png(&path, &img).unwrap();
    let back = read_png(&path).unwrap();
    let worst = img.rgb.iter().zip(&back.rgb).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01);
}
