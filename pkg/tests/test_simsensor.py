import numpy as np
import pytest
from pydantic import ValidationError

from flextact.dotref import extract_dots
from flextact.exceptions import InvalidSceneError
from flextact.markers import extract_markers
from flextact.orientation import estimate_orientation
from flextact.reconstruct import difference_image, gradients_from_difference, reconstruct
from flextact.simsensor import (
    Scene,
    ScrewheadIndenter,
    Shear,
    SphereIndenter,
    StemIndenter,
    bend_warp,
    dot_anchors,
    marker_anchors,
    render,
    render_sweep,
    sensing_center,
)


# -- bend warp -----------------------------------------------------------------


def test_bend_warp_identity_at_zero(cfg):
    anchors = dot_anchors(cfg.geometry)
    assert np.allclose(bend_warp(cfg.geometry, 0.0), anchors)


def test_bend_warp_tip_row_full_displacement(cfg):
    pts = np.array([[100.0, 0.0]])
    warped = bend_warp(cfg.geometry, 1.0, pts)
    assert warped[0, 1] == pytest.approx(cfg.geometry.max_bend_px)
    assert warped[0, 0] == 100.0


def test_bend_warp_linear_in_bend(cfg):
    anchors = dot_anchors(cfg.geometry)
    d50 = bend_warp(cfg.geometry, 0.5) - anchors
    d25 = bend_warp(cfg.geometry, 0.25) - anchors
    assert np.allclose(d50, 2.0 * d25)


def test_bend_warp_injective_across_sweep(cfg):
    sets = [bend_warp(cfg.geometry, b) for b in np.linspace(0, 1, 20)]
    for i in range(len(sets)):
        pts = sets[i]
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        assert (d[~np.eye(len(pts), dtype=bool)] > 1.0).all()
        for j in range(i + 1, len(sets)):
            assert np.linalg.norm(sets[i] - sets[j], axis=1).max() > 0.0


def test_bend_warp_rejects_bad_state(cfg):
    with pytest.raises(ValueError):
        bend_warp(cfg.geometry, 1.5)


# -- rendering ------------------------------------------------------------------


def test_null_scene_reconstructs_flat(cfg, library):
    frame, truth = render(Scene(bend=0.0), cfg.geometry)
    assert np.allclose(difference_image(frame, frame), 0.0)
    assert not truth.contact_mask.any()
    depth, _, _ = reconstruct(frame, library, cfg)
    assert np.abs(depth.z).max() < 1e-6 * 255


def test_sphere_ground_truth_consistent_with_finite_differences(cfg):
    _, truth = render(
        Scene(bend=0.0, indenter=SphereIndenter(radius_mm=4.0, depth_mm=0.8)), cfg.geometry
    )
    from scipy import ndimage

    interior = ndimage.binary_erosion(truth.contact_mask, iterations=2)
    gy_fd, gx_fd = np.gradient(truth.depth)
    assert np.corrcoef(gx_fd[interior], truth.gx[interior])[0, 1] > 0.995
    assert np.corrcoef(gy_fd[interior], truth.gy[interior])[0, 1] > 0.995
    assert truth.depth.max() == pytest.approx(0.8 * cfg.geometry.px_per_mm, abs=1e-6)


def test_stem_contact_is_rotated_stripe(cfg):
    theta = 25.0
    _, truth = render(
        Scene(bend=0.0, indenter=StemIndenter(width_mm=7.0, angle_deg=theta, depth_mm=0.5)),
        cfg.geometry,
    )
    cx, cy = sensing_center(cfg.geometry)
    yy, xx = np.mgrid[: cfg.geometry.height, : cfg.geometry.width].astype(np.float64)
    ang = np.radians(theta)
    u = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
    radius = 0.5 * 7.0 * cfg.geometry.px_per_mm
    a = np.sqrt(radius**2 - (radius - 0.5 * cfg.geometry.px_per_mm) ** 2)
    assert np.abs(u[truth.contact_mask]).max() <= a + 1e-9
    assert truth.theta_true_deg == theta


def test_stem_end_to_end_orientation(cfg, library):
    frame, truth = render(
        Scene(bend=6 / 19, indenter=StemIndenter(width_mm=7.0, angle_deg=30.0, depth_mm=0.5)),
        cfg.geometry,
    )
    depth, _, _ = reconstruct(frame, library, cfg)
    est = estimate_orientation(depth, cfg.orientation)
    assert abs(est.theta_deg - 30.0) < 2.0


def test_inverse_consistency_press_vs_null(cfg):
    bend = 0.4
    pressed, truth = render(
        Scene(bend=bend, indenter=SphereIndenter(radius_mm=3.0, depth_mm=0.5)), cfg.geometry
    )
    null, _ = render(Scene(bend=bend), cfg.geometry)
    d = difference_image(pressed, null)
    g = gradients_from_difference(d, cfg.reconstruct.alpha, cfg.reconstruct.beta)
    stamped = np.zeros_like(truth.contact_mask)
    # exclude marker disks, where stamping hides the shading
    for x, y in truth.marker_centers:
        yy, xx = np.mgrid[: stamped.shape[0], : stamped.shape[1]]
        stamped |= (xx - x) ** 2 + (yy - y) ** 2 <= (cfg.geometry.marker_radius_px() + 1.5) ** 2
    sel = ~stamped
    assert np.abs(g.gx - truth.gx)[sel].max() < 0.05
    assert np.abs(g.gy - truth.gy)[sel].max() < 0.05


def test_render_is_deterministic(cfg):
    scene = Scene(bend=0.3, indenter=SphereIndenter(radius_mm=3.0, depth_mm=0.5), noise_sigma=2.0, seed=11)
    f1, _ = render(scene, cfg.geometry)
    f2, _ = render(scene, cfg.geometry)
    assert np.array_equal(f1.data, f2.data)
    f3, _ = render(scene.model_copy(update={"seed": 12}), cfg.geometry)
    assert not np.array_equal(f1.data, f3.data)


def test_markers_and_dots_coexist_at_extreme_bend(cfg):
    for b in (0.0, 1.0):
        frame, truth = render(Scene(bend=b), cfg.geometry)
        dots = extract_dots(frame, cfg)
        markers = extract_markers(frame, cfg)
        assert len(dots.centers) == len(truth.dot_centers)
        assert len(markers) == len(truth.marker_centers)


def test_shear_moves_markers_not_dots(cfg):
    f0, t0 = render(Scene(bend=0.2), cfg.geometry)
    f1, t1 = render(Scene(bend=0.2, shear=Shear(dx_px=4.0, dy_px=1.0)), cfg.geometry)
    assert np.allclose(t0.dot_centers, t1.dot_centers)
    assert np.allclose(t1.marker_centers - t0.marker_centers, [4.0, 1.0])


# -- sweeps -------------------------------------------------------------------------


def test_render_sweep_single_state(cfg):
    frames = render_sweep(cfg.geometry, 1)
    assert len(frames) == 1
    base, _ = render(Scene(bend=0.0), cfg.geometry)
    assert np.array_equal(frames[0].data, base.data)


def test_render_sweep_states_distinct(cfg):
    frames = render_sweep(cfg.geometry, 20)
    assert len(frames) == 20
    sets = [extract_dots(f, cfg).centers for f in frames]
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            assert np.linalg.norm(sets[i] - sets[j], axis=1).max() > 0.1


def test_render_sweep_validation(cfg):
    with pytest.raises(ValueError):
        render_sweep(cfg.geometry, 0)


# -- scene validation -----------------------------------------------------------------


def test_indenter_outside_sensing_region_rejected(cfg):
    scene = Scene(indenter=SphereIndenter(radius_mm=3.0, depth_mm=0.5, center_mm=(100.0, 100.0)))
    with pytest.raises(InvalidSceneError):
        render(scene, cfg.geometry)


def test_overdeep_indenters_rejected(cfg):
    with pytest.raises(InvalidSceneError):
        render(Scene(indenter=SphereIndenter(radius_mm=1.0, depth_mm=2.0)), cfg.geometry)
    with pytest.raises(InvalidSceneError):
        render(Scene(indenter=StemIndenter(width_mm=2.0, depth_mm=1.5)), cfg.geometry)


def test_scene_model_rejects_unknown_kind():
    with pytest.raises(ValidationError):
        Scene.model_validate({"indenter": {"kind": "cube", "size_mm": 3}})
    with pytest.raises(ValidationError):
        Scene.model_validate({"bend": 2.0})


def test_screwhead_flat_top(cfg):
    _, truth = render(Scene(indenter=ScrewheadIndenter(radius_mm=2.5, depth_mm=0.4)), cfg.geometry)
    a = 2.5 * cfg.geometry.px_per_mm
    assert truth.contact_mask.sum() == pytest.approx(np.pi * a * a, rel=0.05)
    assert truth.depth.max() == pytest.approx(0.4 * cfg.geometry.px_per_mm, rel=1e-6)


def test_marker_grid_matches_pitch(cfg):
    anchors = marker_anchors(cfg.geometry)
    xs = np.unique(anchors[:, 0])
    ys = np.unique(anchors[:, 1])
    assert np.allclose(np.diff(xs), cfg.geometry.marker_pitch_px())
    assert np.allclose(np.diff(ys), cfg.geometry.marker_pitch_px())
    x0, y0, x1, y1 = cfg.geometry.sensing_region()
    assert xs.min() >= x0 and xs.max() < x1 and ys.min() >= y0 and ys.max() < y1
