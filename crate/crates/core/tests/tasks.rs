mod common;

use liquidwarp::body::{skin, BodyModel, BodyModelParts, BodyParams};
use liquidwarp::camera::{normalized_to_pixel, project, Camera};
use liquidwarp::flow::{
    compose_flow, flow_for_imitation, flow_for_novel_view, flow_for_swap, mesh_grid,
    rotation_from_euler_degrees, source_occlusion, TransformFlow,
};
use liquidwarp::pipeline::{imitate, novel_view, swap, Resolution, ViewSpec};
use liquidwarp::raster::{rasterize, silhouette, CorrespondenceMap};
use liquidwarp::synthetic::{self, default_camera, HEIGHT_BETA, LEFT_ARM};
use liquidwarp::tensor::{FeatureMap, Mask};
use liquidwarp::warp::bilinear_sample;
use liquidwarp::Error;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZE: usize = 96;

fn res() -> Resolution {
    Resolution::new(SIZE, SIZE).unwrap()
}

fn max_identity_error(flow: &TransformFlow) -> f64 {
    let grid = mesh_grid(flow.width(), flow.height());
    let mut worst = 0.0f64;
    for (i, &valid) in flow.valid().iter().enumerate() {
        if valid {
            let (a, b) = (flow.coords()[i], grid.coords()[i]);
            worst = worst.max((a[0] - b[0]).abs().max((a[1] - b[1]).abs()));
        }
    }
    worst
}

/// Pixels of a map whose face is skinned entirely to `joint`.
fn part_mask(model: &BodyModel, map: &CorrespondenceMap, joint: usize) -> Mask {
    let data = map
        .pixels()
        .iter()
        .map(|p| {
            p.is_some_and(|f| {
                model.faces()[f.face as usize]
                    .iter()
                    .all(|&v| model.skinning_weights_of(v as usize)[joint] == 1.0)
            })
        })
        .collect();
    Mask::new(map.width(), map.height(), data).unwrap()
}

#[test]
fn self_imitation_is_identity() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(1);
    let b = flow_for_imitation(&model, &src, &src, SIZE, SIZE).unwrap();
    assert!(b.flow.valid().iter().any(|&v| v));
    assert!(max_identity_error(&b.flow) <= 1e-4);
    assert_eq!(b.flow.valid_mask(), silhouette(&b.source_map));

    let image = synthetic::render(&model, &src, SIZE, SIZE).unwrap().image;
    let out = imitate(&model, &src, &src, &image, res()).unwrap();
    let unit = image.map(|v| (v + 1.0) * 0.5);
    let mask = out.source.mask.clone();
    for c in 0..3 {
        for y in 0..SIZE {
            for x in 0..SIZE {
                if mask.get(x, y) {
                    assert!((out.synthesized.get(c, y, x) - unit.get(c, y, x)).abs() <= 1.0 / 255.0);
                }
            }
        }
    }
}

#[test]
fn target_keeps_source_shape() {
    let model = synthetic::humanoid();
    let mut src = model.rest_params(default_camera());
    src.beta[HEIGHT_BETA] = 0.2;
    let mut reference = src.clone();
    reference.beta[HEIGHT_BETA] = -0.2;
    reference.theta[LEFT_ARM] = [0.0, 0.0, 0.3];
    let b = flow_for_imitation(&model, &src, &reference, SIZE, SIZE).unwrap();
    let area_s = silhouette(&b.target_map).count();
    let with_ref_shape = project(&skin(&model, &reference).unwrap(), &reference.camera);
    let area_r = silhouette(&rasterize(&with_ref_shape, SIZE, SIZE).unwrap()).count();
    assert!(area_s > area_r + 50, "{area_s} vs {area_r}");
}

#[test]
fn arm_rotation_matches_rigid_oracle() {
    let model = synthetic::humanoid();
    let src = model.rest_params(default_camera());
    let mut reference = src.clone();
    let angle = std::f64::consts::FRAC_PI_2;
    reference.theta[LEFT_ARM] = [0.0, 0.0, angle];
    let b = flow_for_imitation(&model, &src, &reference, SIZE, SIZE).unwrap();

    // In-plane rotation about the shoulder: target (u, v) maps back through the
    // inverse 2D rotation about the projected pivot.
    let shaped = model.template_vertices();
    let pivot = shaped
        .iter()
        .zip(model.joint_regressor_row(LEFT_ARM))
        .fold(Vector3::zeros(), |acc, (v, w)| acc + v * *w);
    let cam = src.camera;
    let (px, py) = (cam.scale * pivot.x + cam.tx, cam.scale * pivot.y + cam.ty);
    let arm = part_mask(&model, &b.target_map, LEFT_ARM);
    assert!(arm.count() > 20);
    let (c, s) = (angle.cos(), angle.sin());
    let mut checked = 0;
    for y in 0..SIZE {
        for x in 0..SIZE {
            let got = b.flow.get(x, y);
            let grid = mesh_grid(SIZE, SIZE).get(x, y).unwrap();
            if arm.get(x, y) {
                let (du, dv) = (grid[0] - px, grid[1] - py);
                let want = [c * du + s * dv + px, -s * du + c * dv + py];
                let got = got.unwrap();
                assert!((got[0] - want[0]).abs() < 1e-3 && (got[1] - want[1]).abs() < 1e-3);
                checked += 1;
            } else if let Some(got) = got {
                assert!((got[0] - grid[0]).abs() < 1e-3 && (got[1] - grid[1]).abs() < 1e-3);
            }
        }
    }
    assert_eq!(checked, arm.count());
}

#[test]
fn raised_arm_lands_on_rerendered_arm() {
    let model = synthetic::humanoid();
    let src = model.rest_params(default_camera());
    let mut reference = src.clone();
    reference.theta[LEFT_ARM] = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
    let b = flow_for_imitation(&model, &src, &reference, SIZE, SIZE).unwrap();

    // Label the source render's arm pixels and carry the labels along the flow.
    let labels = part_mask(&model, &b.source_map, LEFT_ARM).to_feature_map();
    let carried = bilinear_sample(&labels, &b.flow);
    let warped_arm = Mask::new(SIZE, SIZE, carried.data().iter().map(|&v| v > 0.5).collect()).unwrap();

    // Ground truth: the reference pose rendered from scratch.
    let truth = rasterize(&project(&skin(&model, &reference).unwrap(), &reference.camera), SIZE, SIZE).unwrap();
    let true_arm = part_mask(&model, &truth, LEFT_ARM);
    let hidden = source_occlusion(&b.flow, &b.target_map, &b.source_map).unwrap();
    assert!(warped_arm.count() > 20);
    assert!(common::covered_within(&warped_arm, &true_arm, 1));
    assert!(common::covered_within(&true_arm.and_not(&hidden), &warped_arm, 1));
}

#[test]
fn flow_follows_source_camera_shift() {
    let model = synthetic::humanoid();
    let (src, reference) = synthetic::params_pair(5);
    let b = flow_for_imitation(&model, &src, &reference, SIZE, SIZE).unwrap();
    let delta = (0.07, -0.03);
    let shifted_cam = Camera { tx: src.camera.tx + delta.0, ty: src.camera.ty + delta.1, ..src.camera };
    let moved = project(&skin(&model, &src).unwrap(), &shifted_cam);
    let shifted = compose_flow(&moved, &b.target_map).unwrap();
    for i in 0..SIZE * SIZE {
        assert_eq!(b.flow.valid()[i], shifted.valid()[i]);
        if b.flow.valid()[i] {
            let (a, s) = (b.flow.coords()[i], shifted.coords()[i]);
            assert!((s[0] - a[0] - delta.0).abs() < 1e-12 && (s[1] - a[1] - delta.1).abs() < 1e-12);
        }
    }
}

#[test]
fn novel_view_identity_matches_self_imitation() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(2);
    let image = synthetic::render(&model, &src, SIZE, SIZE).unwrap().image;
    let view = novel_view(&model, &src, &ViewSpec::default(), &image, res()).unwrap();
    let same = imitate(&model, &src, &src, &image, res()).unwrap();
    assert!(max_identity_error(&view.bundle.flow) <= 1e-4);
    // (v - c) + c is not bit-identical to v, so flows agree to rounding only.
    assert_eq!(view.bundle.flow.valid(), same.bundle.flow.valid());
    for (a, b) in view.bundle.flow.coords().iter().zip(same.bundle.flow.coords()) {
        assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
    }
    assert_eq!(view.synthesized, same.synthesized);
}

#[test]
fn novel_view_translation_shifts_flow() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(3);
    let delta = 0.1;
    let b = flow_for_novel_view(&model, &src, &Matrix3::identity(), &Vector3::new(delta, 0.0, 0.0), SIZE, SIZE)
        .unwrap();
    // The target moves right by s * delta, so each target pixel reads from
    // s * delta to its left.
    let grid = mesh_grid(SIZE, SIZE);
    for i in 0..SIZE * SIZE {
        if let Some(c) = b.flow.get(i % SIZE, i / SIZE) {
            let g = grid.coords()[i];
            assert!((c[0] - (g[0] - src.camera.scale * delta)).abs() <= 1e-4);
            assert!((c[1] - g[1]).abs() <= 1e-4);
        }
    }
}

#[test]
fn yaw_half_turn_mirrors_silhouette() {
    let model = synthetic::humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut src = model.rest_params(default_camera());
    src.theta[LEFT_ARM] = [0.0, 0.0, rng.gen_range(0.3..0.8)];
    let b = flow_for_novel_view(&model, &src, &rotation_from_euler_degrees(180.0, 0.0, 0.0), &Vector3::zeros(), SIZE, SIZE)
        .unwrap();
    let center = skin(&model, &src).unwrap().centroid();
    let cx = normalized_to_pixel(src.camera.scale * center.x + src.camera.tx, SIZE);
    let source = silhouette(&b.source_map);
    let target = silhouette(&b.target_map);
    let mirrored = Mask::new(
        SIZE,
        SIZE,
        (0..SIZE * SIZE)
            .map(|i| {
                let (x, y) = (i % SIZE, i / SIZE);
                let mx = (2.0 * cx - x as f64).round();
                mx >= 0.0 && (mx as usize) < SIZE && source.get(mx as usize, y)
            })
            .collect(),
    )
    .unwrap();
    assert!(target.count() > 100);
    assert!(common::covered_within(&target, &mirrored, 1));
    assert!(common::covered_within(&mirrored, &target, 1));
}

#[test]
fn full_turn_equals_no_turn() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(4);
    let zero = flow_for_novel_view(&model, &src, &Matrix3::identity(), &Vector3::zeros(), SIZE, SIZE).unwrap();
    let full = flow_for_novel_view(&model, &src, &rotation_from_euler_degrees(360.0, 0.0, 0.0), &Vector3::zeros(), SIZE, SIZE)
        .unwrap();
    assert_eq!(zero.flow.valid(), full.flow.valid());
    for (a, b) in zero.flow.coords().iter().zip(full.flow.coords()) {
        assert!((a[0] - b[0]).abs() <= 1e-4 && (a[1] - b[1]).abs() <= 1e-4);
    }
}

#[test]
fn yaw_sweep_keeps_vertical_extent() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(6);
    let image = synthetic::render(&model, &src, SIZE, SIZE).unwrap().image;
    let base = common::mask_height(&silhouette(&rasterize(&project(&skin(&model, &src).unwrap(), &src.camera), SIZE, SIZE).unwrap()));
    for yaw in liquidwarp::pipeline::default_sweep() {
        let spec = ViewSpec { yaw, ..ViewSpec::default() };
        let out = novel_view(&model, &src, &spec, &image, res()).unwrap();
        let h = common::mask_height(&silhouette(&out.bundle.target_map));
        assert!(h.abs_diff(base) <= 1, "yaw {yaw}: height {h} vs {base}");
    }
}

#[test]
fn rejects_non_orthonormal_view() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(1);
    let r = Matrix3::identity() * 2.0;
    assert!(matches!(
        flow_for_novel_view(&model, &src, &r, &Vector3::zeros(), SIZE, SIZE),
        Err(Error::NotOrthonormal(_))
    ));
}

#[test]
fn swap_head_flow_is_masked_grid() {
    let model = synthetic::humanoid();
    let (src, reference) = synthetic::params_pair(7);
    let f = flow_for_swap(&model, &src, &reference, SIZE, SIZE).unwrap();
    assert!(f.head_silhouette.count() > 20);
    assert_eq!(f.head_flow.valid_mask(), f.head_silhouette);
    let grid = mesh_grid(SIZE, SIZE);
    for i in 0..SIZE * SIZE {
        if f.head_flow.valid()[i] {
            assert_eq!(f.head_flow.coords()[i], grid.coords()[i]);
        }
    }
    // Valid sets overlap exactly where the head and body renders overlap.
    let overlap = f.head_flow.valid_mask().and(&f.body_flow.valid_mask());
    assert_eq!(overlap, f.head_silhouette.and(&f.body_silhouette));
}

#[test]
fn self_swap_body_flow_is_identity() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(8);
    let f = flow_for_swap(&model, &src, &src, SIZE, SIZE).unwrap();
    assert_eq!(f.body_flow.valid_mask(), f.body_silhouette);
    assert!(max_identity_error(&f.body_flow) <= 1e-4);
}

#[test]
fn self_swap_preview_is_foreground() {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(8);
    let image = synthetic::render(&model, &src, SIZE, SIZE).unwrap().image;
    let out = swap(&model, &src, &src, &image, &image, res()).unwrap();
    let union = out.flows.head_silhouette.or(&out.flows.body_silhouette);
    let unit = image.map(|v| (v + 1.0) * 0.5);
    for c in 0..3 {
        for y in 0..SIZE {
            for x in 0..SIZE {
                let want = if union.get(x, y) { unit.get(c, y, x) } else { 0.0 };
                assert!((out.preview.get(c, y, x) - want).abs() <= 1e-6, "({c},{y},{x})");
            }
        }
    }
}

#[test]
fn swap_head_ignores_reference_head() {
    let model = synthetic::humanoid();
    let (src, reference) = synthetic::params_pair(10);
    let src_image = synthetic::render(&model, &src, SIZE, SIZE).unwrap().image;
    let ref_image = synthetic::render(&model, &reference, SIZE, SIZE).unwrap().image;
    let base = swap(&model, &src, &reference, &src_image, &ref_image, res()).unwrap();

    let ref_head = {
        let faces = model.group_faces("head").unwrap();
        let pm = project(&skin(&model, &reference).unwrap(), &reference.camera).with_faces(faces);
        silhouette(&rasterize(&pm, SIZE, SIZE).unwrap())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let perturbed = FeatureMap::from_fn(3, SIZE, SIZE, |c, y, x| {
        if ref_head.get(x, y) {
            rng.gen_range(-1.0..1.0)
        } else {
            ref_image.get(c, y, x)
        }
    });
    let after = swap(&model, &src, &reference, &src_image, &perturbed, res()).unwrap();
    let head = &base.flows.head_silhouette;
    for c in 0..3 {
        for y in 0..SIZE {
            for x in 0..SIZE {
                if head.get(x, y) {
                    assert_eq!(base.preview.get(c, y, x), after.preview.get(c, y, x));
                }
            }
        }
    }
}

#[test]
fn swap_needs_vertex_groups() {
    let plain = synthetic::humanoid();
    let mut groups = plain.vertex_groups().clone();
    groups.remove("head");
    let stripped = BodyModel::new(BodyModelParts {
        template_vertices: plain.template_vertices().to_vec(),
        faces: plain.faces().to_vec(),
        shape_blendshapes: plain.shape_blendshapes().to_vec(),
        joint_regressor: (0..plain.num_joints()).flat_map(|j| plain.joint_regressor_row(j).to_vec()).collect(),
        kinematic_parents: plain.kinematic_parents().to_vec(),
        skinning_weights: (0..plain.num_vertices()).flat_map(|v| plain.skinning_weights_of(v).to_vec()).collect(),
        vertex_groups: groups,
        pose_blendshapes: None,
    })
    .unwrap();
    let p: BodyParams = stripped.rest_params(default_camera());
    assert!(matches!(flow_for_swap(&stripped, &p, &p, SIZE, SIZE), Err(Error::MissingVertexGroup(_))));
}
