import math

import numpy as np
import pytest

from racesim.fpv_render import (
    ARCH_COLOR,
    SQUARE_COLOR,
    CameraParams,
    SceneBox,
    frame_to_png,
    png_to_array,
    render,
)

from harness_helpers import arch_gate, hover_state, make_track, square_gate


def _color_mask(img: np.ndarray, color) -> np.ndarray:
    return np.all(img == np.asarray(color, dtype=np.uint8), axis=-1)


class TestProjection:
    def test_on_axis_gate_centered(self):
        # Looking straight at the center from 5 m: the outline must be
        # centered on the image within a pixel.
        g = square_gate(center=(5.0, 0.0, 1.5))
        track = make_track([g])
        frame = render(hover_state(position=(0.0, 0.0, 1.5)), track, CameraParams())
        img = frame.as_array()
        mask = _color_mask(img, SQUARE_COLOR)
        assert mask.any()
        rows, cols = np.nonzero(mask)
        cam = CameraParams()
        assert (cols.min() + cols.max()) / 2.0 == pytest.approx(cam.width / 2.0, abs=1.0)
        assert (rows.min() + rows.max()) / 2.0 == pytest.approx(cam.height / 2.0, abs=1.0)

    def test_gate_behind_camera_clipped(self):
        g = square_gate(center=(-5.0, 0.0, 1.5))
        track = make_track([g])
        frame = render(hover_state(position=(0.0, 0.0, 1.5)), track, CameraParams())
        assert not _color_mask(frame.as_array(), SQUARE_COLOR).any()

    def test_bearing_45_projects_to_border(self):
        # A gate 45 degrees off-axis with a 90 degree hfov lands at the
        # image border: u = f tan(45) = width/2.
        from racesim.fpv_render import _Camera

        cam = CameraParams()
        camera = _Camera(hover_state(position=(0.0, 0.0, 1.5)), cam)
        d = 8.0
        for sign, border in ((+1.0, 0.0), (-1.0, float(cam.width - 1))):  # +45 deg is to the left
            col, row = camera.project(camera.to_camera((d, sign * d, 1.5)))
            assert abs(col - border) <= 2.0
            assert row == pytest.approx((cam.height - 1) / 2.0, abs=0.5)
        # and the drawn outline of such a gate hugs that border
        g = square_gate(center=(d, -d, 1.5), hw=0.5, hh=0.5)
        frame = render(hover_state(position=(0.0, 0.0, 1.5)), make_track([g]), cam)
        mask = _color_mask(frame.as_array(), SQUARE_COLOR)
        assert mask.any()
        _, cols = np.nonzero(mask)
        assert cols.max() >= cam.width - 3

    def test_scaling_consistency(self):
        # Doubling the distance halves the projected side length.
        cam = CameraParams()
        widths = {}
        for d in (4.0, 8.0):
            g = square_gate(center=(d, 0.0, 1.5))
            track = make_track([g])
            frame = render(hover_state(position=(0.0, 0.0, 1.5)), track, cam)
            mask = _color_mask(frame.as_array(), SQUARE_COLOR)
            _, cols = np.nonzero(mask)
            widths[d] = cols.max() - cols.min()
        assert widths[4.0] / 2.0 == pytest.approx(widths[8.0], abs=2.0 + 4.0)  # outline is 4px wide

    def test_arch_color_keyed_by_shape(self):
        track = make_track([arch_gate(center=(5.0, 0.0, 1.5))])
        frame = render(hover_state(position=(0.0, 0.0, 1.5)), track, CameraParams())
        img = frame.as_array()
        assert _color_mask(img, ARCH_COLOR).any()
        assert not _color_mask(img, SQUARE_COLOR).any()


class TestDeterminism:
    def test_byte_identical(self, circular_track):
        s = hover_state(position=(2.0, -1.0, 1.2), yaw=0.7)
        f1 = render(s, circular_track, CameraParams())
        f2 = render(s, circular_track, CameraParams())
        assert f1.pixels == f2.pixels

    def test_png_round_trip(self, single_gate_track):
        frame = render(hover_state(), single_gate_track, CameraParams())
        png = frame_to_png(frame)
        arr = png_to_array(png)
        assert arr.tobytes() == frame.pixels

    def test_buffer_length_invariant(self, single_gate_track):
        cam = CameraParams(width=64, height=48)
        frame = render(hover_state(), single_gate_track, cam)
        assert len(frame.pixels) == 64 * 48 * 3


class TestMirrorSymmetry:
    def test_mirrored_scene_mirrors_image(self):
        # Scene A: gates at +y and far +y-left box; scene B mirrors all
        # geometry across the camera's vertical plane (y -> -y).
        cam = CameraParams()
        s = hover_state(position=(0.0, 0.0, 1.5))

        def scene(sign):
            g1 = square_gate("s", center=(6.0, sign * 2.0, 1.5))
            g2 = arch_gate("a", center=(9.0, sign * -3.0, 1.5))
            boxes = (SceneBox(min=(3.0, sign * 1.0, 0.5), max=(4.0, sign * 2.0, 1.25)),)
            # mirrored box corners must stay ordered min<max on y
            if sign < 0:
                boxes = (SceneBox(min=(3.0, -2.0, 0.5), max=(4.0, -1.0, 1.25)),)
            return make_track([g1, g2]), boxes

        track_a, boxes_a = scene(+1)
        track_b, boxes_b = scene(-1)
        img_a = render(s, track_a, cam, boxes_a).as_array()
        img_b = render(s, track_b, cam, boxes_b).as_array()
        assert np.array_equal(np.fliplr(img_a), img_b)


class TestSceneContent:
    def test_ground_below_sky_above(self, single_gate_track):
        frame = render(hover_state(position=(-10.0, 0.0, 2.0)), single_gate_track, CameraParams())
        img = frame.as_array()
        assert tuple(img[0, 0]) == (200, 200, 200)     # sky
        assert tuple(img[-1, 0]) == (64, 64, 64)       # ground

    def test_mount_pitch_moves_horizon(self, single_gate_track):
        s = hover_state(position=(-10.0, 0.0, 2.0))
        level = render(s, single_gate_track, CameraParams()).as_array()
        tilted = render(s, single_gate_track, CameraParams(mount_pitch=0.3)).as_array()

        def horizon_row(img):
            return int(np.argmax(np.all(img == (128, 128, 128), axis=-1).any(axis=1)))

        assert horizon_row(tilted) > horizon_row(level)  # camera up, horizon down

    def test_box_rendered_with_its_color(self, single_gate_track):
        box = SceneBox(min=(2.0, -1.0, 0.5), max=(3.0, 1.0, 2.0), color=(10, 200, 30))
        frame = render(hover_state(position=(-2.0, 0.0, 1.5)), single_gate_track, CameraParams(), (box,))
        assert _color_mask(frame.as_array(), (10, 200, 30)).any()


class TestCameraParams:
    def test_too_small_rejected(self):
        with pytest.raises(Exception):
            CameraParams(width=8, height=8)

    def test_bad_fov_rejected(self):
        with pytest.raises(Exception):
            CameraParams(hfov=math.pi)
