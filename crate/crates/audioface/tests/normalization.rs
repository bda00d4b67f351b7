//! End-to-end normalization checks against the synthetic renderer.
//!
//! The renderer is the exact inverse of the unrolling path, so unrolled
//! atlases must recover the ground-truth textures, and the lighting
//! normalizer must invert the synthetic gain/color/specular corruptions.

use audioface::config::PipelineConfig;
use audioface::geom;
use audioface::image::Mask;
use audioface::light;
use audioface::ssim::ssim_masked;
use audioface::synthkit::{gen_face_sequence, SceneParams, SynthScene};
use audioface::topology::FaceTopology;

fn symmetrized(img: &audioface::image::Image) -> audioface::image::Image {
    let mirror = img.mirror_horizontal();
    let mut out = img.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mirror.data()) {
        *v = 0.5 * (*v + m);
    }
    out
}

fn static_scene_params() -> SceneParams {
    SceneParams {
        yaw_amp: 0.0,
        pitch_amp: 0.0,
        translation_amp: 0.0,
        scale_amp: 0.0,
        gain_slope_amp: 0.0,
        gain_offset_amp: 0.0,
        ..SceneParams::default()
    }
}

/// Unrolls one rendered frame back to atlas space.
fn unroll(
    frame: &audioface::synthkit::SynthFrame,
    scene: &SynthScene,
    topo: &FaceTopology,
) -> (geom::TextureAtlas, Vec<(f64, f64)>) {
    let reference = audioface::landmarks::LandmarkFrame::new(scene.base.vertices.clone(), 0.0).unwrap();
    let (normalized, _) = geom::normalize_pose(&frame.landmarks, &reference, topo).unwrap();
    let uv = geom::cylinder_uv(&normalized, &scene.cyl).unwrap();
    let coords = geom::project_2d(&frame.landmarks.vertices);
    let atlas = geom::unroll_texture(
        &frame.image,
        &normalized,
        &scene.cyl,
        topo,
        &coords,
        scene.params.atlas_size,
    )
    .unwrap();
    (atlas, uv)
}

/// Interior skin mask: valid ∩ skin, eroded to stay clear of triangle
/// boundary resampling.
fn comparison_mask(
    atlas: &geom::TextureAtlas,
    uv: &[(f64, f64)],
    topo: &FaceTopology,
    size: usize,
) -> Mask {
    let skin = geom::atlas_skin_mask(uv, topo, size);
    atlas.valid.and(&skin).erode(3)
}

#[test]
fn render_unroll_recovers_the_albedo() {
    let topo = FaceTopology::default_grid();
    let scene = SynthScene::generate(31, static_scene_params(), vec![0.0; 2]);
    let frame = scene.render_frame(0);
    let (atlas, uv) = unroll(&frame, &scene, &topo);
    let mask = comparison_mask(&atlas, &uv, &topo, scene.params.atlas_size)
        .and(&frame.truth.atlas_clean.valid);
    let score = ssim_masked(&atlas.pixels, &frame.truth.atlas_clean.pixels, &mask).unwrap();
    assert!(score > 0.95, "render→unroll SSIM = {}", score);
}

#[test]
fn unrolled_atlases_are_pose_invariant() {
    let topo = FaceTopology::default_grid();
    // Same face and texture, two distinct head poses with varied lighting
    // off.
    let mut params = static_scene_params();
    params.yaw_amp = 0.15;
    params.pitch_amp = 0.05;
    params.translation_amp = 5.0;
    params.scale_amp = 0.03;
    let scene = SynthScene::generate(77, params, vec![0.0; 4]);
    let frame_a = scene.render_frame(1);
    let frame_b = scene.render_frame(2);
    let (atlas_a, uv_a) = unroll(&frame_a, &scene, &topo);
    let (atlas_b, uv_b) = unroll(&frame_b, &scene, &topo);
    let mask = comparison_mask(&atlas_a, &uv_a, &topo, scene.params.atlas_size)
        .and(&comparison_mask(&atlas_b, &uv_b, &topo, scene.params.atlas_size));
    assert!(mask.count() > 5000);
    let mut err = 0.0f64;
    let mut n = 0usize;
    for y in 0..256 {
        for x in 0..256 {
            if mask.get(y, x) {
                let a = atlas_a.pixels.get(y, x);
                let b = atlas_b.pixels.get(y, x);
                for c in 0..3 {
                    err += (a[c] - b[c]).abs() as f64;
                    n += 1;
                }
            }
        }
    }
    let mae = err / n as f64;
    assert!(mae < 0.03, "two-pose unroll MAE = {}", mae);
}

#[test]
fn mouth_motion_stays_inside_the_lip_crop() {
    let topo = FaceTopology::default_grid();
    let scene = SynthScene::generate(55, static_scene_params(), vec![0.0, 0.9]);
    let closed = scene.render_frame(0);
    let open = scene.render_frame(1);
    let (atlas_closed, uv_c) = unroll(&closed, &scene, &topo);
    let (atlas_open, uv_o) = unroll(&open, &scene, &topo);
    let mask = comparison_mask(&atlas_closed, &uv_c, &topo, 256)
        .and(&comparison_mask(&atlas_open, &uv_o, &topo, 256));

    let rect = topo.lip_crop;
    let inside = |y: usize, x: usize| {
        x >= rect.x && x < rect.x + rect.w && y >= rect.y && y < rect.y + rect.h
    };
    let mut inside_max = 0.0f32;
    let (mut outside_err, mut outside_n) = (0.0f64, 0usize);
    for y in 0..256 {
        for x in 0..256 {
            if !mask.get(y, x) {
                continue;
            }
            let a = atlas_closed.pixels.get(y, x);
            let b = atlas_open.pixels.get(y, x);
            let d = (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0f32, f32::max);
            if inside(y, x) {
                inside_max = inside_max.max(d);
            } else {
                outside_err += d as f64;
                outside_n += 1;
            }
        }
    }
    assert!(inside_max > 0.2, "mouth opening should change the lip crop (max {})", inside_max);
    let outside_mae = outside_err / outside_n as f64;
    assert!(outside_mae < 0.02, "outside-crop MAE = {}", outside_mae);
}

#[test]
fn temporal_normalization_collapses_lighting_variance() {
    let topo = FaceTopology::default_grid();
    let cfg = PipelineConfig::default();
    // Static geometry, strongly varying illumination.
    let mut params = static_scene_params();
    params.gain_slope_amp = 0.35;
    params.gain_offset_amp = 0.15;
    let n = 12;
    let scene = SynthScene::generate(99, params, vec![0.0; n]);
    let frames: Vec<(audioface::image::Image, audioface::landmarks::LandmarkFrame)> =
        gen_face_sequence(&scene).into_iter().map(|f| (f.image, f.landmarks)).collect();

    let result = light::normalize_sequence(&frames, 0, &topo, &cfg).unwrap();
    assert!(result.failures.is_empty());

    // Raw (unnormalized) atlases for the variance baseline.
    let raw: Vec<geom::TextureAtlas> = (0..n)
        .map(|t| {
            let frame = scene.render_frame(t);
            let reference =
                audioface::landmarks::LandmarkFrame::new(scene.base.vertices.clone(), 0.0).unwrap();
            let (normalized, _) = geom::normalize_pose(&frame.landmarks, &reference, &topo).unwrap();
            let coords = geom::project_2d(&frame.landmarks.vertices);
            geom::unroll_texture(&frame.image, &normalized, &scene.cyl, &topo, &coords, 256).unwrap()
        })
        .collect();

    let uv = geom::cylinder_uv(&scene.base.vertices, &scene.cyl).unwrap();
    let skin = geom::atlas_skin_mask(&uv, &topo, 256).erode(4);

    let temporal_variance = |atlases: &[&geom::TextureAtlas]| -> f64 {
        let mut total = 0.0f64;
        let mut count = 0usize;
        for y in 0..256 {
            for x in 0..256 {
                if !skin.get(y, x) || atlases.iter().any(|a| !a.valid.get(y, x)) {
                    continue;
                }
                for c in 0..3 {
                    let vals: Vec<f64> =
                        atlases.iter().map(|a| a.pixels.get(y, x)[c] as f64).collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    total += vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / vals.len() as f64;
                    count += 1;
                }
            }
        }
        total / count as f64
    };

    let raw_refs: Vec<&geom::TextureAtlas> = raw.iter().collect();
    let norm_refs: Vec<&geom::TextureAtlas> =
        result.atlases.iter().map(|a| a.as_ref().unwrap()).collect();
    let var_raw = temporal_variance(&raw_refs);
    let var_norm = temporal_variance(&norm_refs);
    assert!(
        var_norm <= 0.1 * var_raw,
        "variance reduction too weak: raw {} vs normalized {}",
        var_raw,
        var_norm
    );
}

#[test]
fn single_frame_sequence_returns_the_symmetrized_reference() {
    let topo = FaceTopology::default_grid();
    let cfg = PipelineConfig::default();
    let mut scene = SynthScene::generate(13, static_scene_params(), vec![0.0]);
    // A left/right symmetric albedo: symmetrization then reduces to the
    // identity and the normalized frame must reproduce the reference almost
    // exactly.
    scene.albedo = symmetrized(&scene.albedo);
    let frame = scene.render_frame(0);
    let result =
        light::normalize_sequence(&[(frame.image, frame.landmarks)], 0, &topo, &cfg).unwrap();
    let atlas = result.atlases[0].as_ref().unwrap();
    let uv = geom::cylinder_uv(&scene.base.vertices, &scene.cyl).unwrap();
    let skin = geom::atlas_skin_mask(&uv, &topo, 256).erode(4);
    let mut max_err = 0.0f32;
    let mut sum_err = 0.0f64;
    let mut n = 0usize;
    for y in 0..256 {
        for x in 0..256 {
            if skin.get(y, x) && atlas.valid.get(y, x) && result.reference.valid.get(y, x) {
                let a = atlas.pixels.get(y, x);
                let b = result.reference.pixels.get(y, x);
                for c in 0..3 {
                    max_err = max_err.max((a[c] - b[c]).abs());
                    sum_err += (a[c] - b[c]).abs() as f64;
                    n += 1;
                }
            }
        }
    }
    let mean_err = sum_err / n as f64;
    // Within 1e-3 in the mean; isolated feature-edge pixels where gain
    // recovery meets resampling noise stay under 1%.
    assert!(mean_err < 1e-3, "frame vs reference mean err = {}", mean_err);
    assert!(max_err < 0.01, "frame vs reference max err = {}", max_err);
}

#[test]
fn shuffled_frame_order_gives_identical_outputs() {
    let topo = FaceTopology::default_grid();
    let cfg = PipelineConfig::default();
    let mut params = static_scene_params();
    params.gain_slope_amp = 0.2;
    let scene = SynthScene::generate(21, params, vec![0.0, 0.3, 0.6, 0.2]);
    let frames: Vec<_> =
        gen_face_sequence(&scene).into_iter().map(|f| (f.image, f.landmarks)).collect();

    let forward = light::normalize_sequence(&frames, 0, &topo, &cfg).unwrap();
    let shuffled_frames: Vec<_> = vec![
        frames[0].clone(),
        frames[3].clone(),
        frames[1].clone(),
        frames[2].clone(),
    ];
    let shuffled = light::normalize_sequence(&shuffled_frames, 0, &topo, &cfg).unwrap();

    // Frame 3 in the original order is frame 1 in the shuffled run.
    let a = forward.atlases[3].as_ref().unwrap();
    let b = shuffled.atlases[1].as_ref().unwrap();
    assert_eq!(a.pixels, b.pixels);
}

#[test]
fn relight_round_trip_restores_the_lit_atlas() {
    let topo = FaceTopology::default_grid();
    let cfg = PipelineConfig::default();
    let irls = light::IrlsParams::default();
    let mut params = static_scene_params();
    params.gain_slope_amp = 0.3;
    params.gain_offset_amp = 0.12;
    let scene = SynthScene::generate(41, params, vec![0.0, 0.0]);
    let frames: Vec<_> =
        gen_face_sequence(&scene).into_iter().map(|f| (f.image, f.landmarks)).collect();
    let result = light::normalize_sequence(&frames, 0, &topo, &cfg).unwrap();

    // Frame 1 carries a synthetic illumination; its normalized atlas should
    // return to the lit appearance when relit against the lit unroll.
    let lit_unroll = {
        let frame = scene.render_frame(1);
        let reference =
            audioface::landmarks::LandmarkFrame::new(scene.base.vertices.clone(), 0.0).unwrap();
        let (normalized, _) = geom::normalize_pose(&frame.landmarks, &reference, &topo).unwrap();
        let coords = geom::project_2d(&frame.landmarks.vertices);
        geom::unroll_texture(&frame.image, &normalized, &scene.cyl, &topo, &coords, 256).unwrap()
    };
    let normalized = result.atlases[1].as_ref().unwrap();
    let relit = audioface::synth::relight_to_target(normalized, &lit_unroll, &irls);

    let uv = geom::cylinder_uv(&scene.base.vertices, &scene.cyl).unwrap();
    let mask = geom::atlas_skin_mask(&uv, &topo, 256)
        .and(&relit.valid)
        .and(&lit_unroll.valid)
        .erode(4);
    let score = ssim_masked(&relit.pixels, &lit_unroll.pixels, &mask).unwrap();
    assert!(score > 0.95, "relight round-trip SSIM = {}", score);
}

#[test]
#[ignore]
fn probe_single_frame_error_map() {
    let topo = FaceTopology::default_grid();
    let cfg = PipelineConfig::default();
    let scene = SynthScene::generate(13, static_scene_params(), vec![0.0]);
    let frame = scene.render_frame(0);
    let result =
        light::normalize_sequence(&[(frame.image, frame.landmarks)], 0, &topo, &cfg).unwrap();
    let atlas = result.atlases[0].as_ref().unwrap();
    let uv = geom::cylinder_uv(&scene.base.vertices, &scene.cyl).unwrap();
    let skin = geom::atlas_skin_mask(&uv, &topo, 256).erode(10);
    let mut worst = (0.0f32, 0usize, 0usize);
    let mut hist = [0usize; 10];
    for y in 0..256 {
        for x in 0..256 {
            if skin.get(y, x) && atlas.valid.get(y, x) && result.reference.valid.get(y, x) {
                let a = atlas.pixels.get(y, x);
                let b = result.reference.pixels.get(y, x);
                for c in 0..3 {
                    let d = (a[c] - b[c]).abs();
                    if d > worst.0 { worst = (d, x, y); }
                    hist[((d / 0.002) as usize).min(9)] += 1;
                }
            }
        }
    }
    eprintln!("worst {:?} hist {:?}", worst, hist);
}

#[test]
#[ignore]
fn probe_stage_deltas() {
    let topo = FaceTopology::default_grid();
    let cfg = PipelineConfig::default();
    let scene = SynthScene::generate(13, static_scene_params(), vec![0.0]);
    let frame = scene.render_frame(0);
    // Reproduce the pipeline stages by hand.
    let reference = audioface::landmarks::LandmarkFrame::new(scene.base.vertices.clone(), 0.0).unwrap();
    let (normalized, _) = geom::normalize_pose(&frame.landmarks, &reference, &topo).unwrap();
    let uv = geom::cylinder_uv(&normalized, &scene.cyl).unwrap();
    let coords = geom::project_2d(&frame.landmarks.vertices);
    let atlas = geom::unroll_texture(&frame.image, &normalized, &scene.cyl, &topo, &coords, 256).unwrap();
    let skin_full = geom::atlas_skin_mask(&uv, &topo, 256);
    let (despec, spec_alpha) = light::remove_specularity(&atlas, &skin_full, &light::SpecularParams::default());
    let n_spec = spec_alpha.data().iter().filter(|&&a| a > 0.0).count();
    let irls = light::IrlsParams::default();
    let sym = light::symmetrize_reference(&despec, &irls);
    let skin = skin_full.erode(10);
    let dmax = |a: &geom::TextureAtlas, b: &geom::TextureAtlas| {
        let mut worst = (0.0f32, 0usize, 0usize);
        for y in 0..256 { for x in 0..256 {
            if skin.get(y, x) && a.valid.get(y,x) && b.valid.get(y,x) {
                let pa = a.pixels.get(y,x); let pb = b.pixels.get(y,x);
                for c in 0..3 { let d = (pa[c]-pb[c]).abs(); if d > worst.0 { worst = (d,x,y); } }
            }
        }}
        worst
    };
    eprintln!("specular pixels flagged: {}", n_spec);
    eprintln!("despec vs atlas: {:?}", dmax(&despec, &atlas));
    eprintln!("sym vs despec:   {:?}", dmax(&sym.normalized, &despec));
    let warped = geom::warp_triangles(&sym.normalized.pixels, &uv, &uv, &topo.triangles, (256,256), None);
    eprintln!("warp vs sym:     {:?}", dmax(&warped, &sym.normalized));
    let out = light::normalize_temporal(&despec, &warped, &irls);
    eprintln!("out vs sym:      {:?}", dmax(&out.normalized, &sym.normalized));
}
