import numpy as np
import pytest

from tweenkit import bvh, rotmath
from tweenkit.clip import fk_all
from tweenkit.synth import default_styles, generate_synthetic_clip

MINIMAL = """HIERARCHY
ROOT Hips
{
  OFFSET 0.0 0.9 0.0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation
  JOINT Chest
  {
    OFFSET 0.0 0.3 0.0
    CHANNELS 3 Zrotation Yrotation Xrotation
    End Site
    {
      OFFSET 0.0 0.2 0.0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.033333
0 0.9 0 0 0 0 0 0 0
"""


def motion_rows(text):
    lines = text.splitlines()
    start = lines.index("MOTION") + 3
    return np.array([[float(v) for v in line.split()]
                     for line in lines[start:] if line.strip()])


class TestParse:
    def test_minimal_two_joint(self):
        sk, clip = bvh.parse_bvh(MINIMAL)
        assert sk.n_joints == 2
        assert sk.names == ["Hips", "Chest"]
        assert np.allclose(sk.offsets[1], [0, 0.3, 0])
        assert clip.n_frames == 1
        assert np.allclose(clip.root_pos[0], [0, 0.9, 0])
        assert np.allclose(np.abs(clip.rotations[0, :, 0]), 1.0, atol=1e-9)
        assert sk.joints[1].end_site == (0.0, 0.2, 0.0)

    def test_frame_time(self):
        _, clip = bvh.parse_bvh(MINIMAL)
        assert clip.frame_time == pytest.approx(0.033333)

    def test_zxy_90_first_axis(self):
        text = MINIMAL.replace(
            "CHANNELS 3 Zrotation Yrotation Xrotation",
            "CHANNELS 3 Zrotation Xrotation Yrotation").replace(
            "0 0.9 0 0 0 0 0 0 0", "0 0.9 0 0 0 0 90 0 0")
        _, clip = bvh.parse_bvh(text)
        expected = rotmath.quat_from_axis_angle([0, 0, 1], np.pi / 2)
        q = clip.rotations[0, 1]
        assert min(np.abs(q - expected).max(), np.abs(q + expected).max()) < 1e-9

    def test_parse_error_has_line(self):
        broken = MINIMAL.replace("OFFSET 0.0 0.3 0.0", "OFFSET nope 0.3 0.0")
        with pytest.raises(bvh.ParseError) as err:
            bvh.parse_bvh(broken)
        assert "line" in str(err.value)

    def test_unsupported_channels(self):
        text = MINIMAL.replace("CHANNELS 3 Zrotation Yrotation Xrotation",
                               "CHANNELS 2 Zrotation Yrotation")
        with pytest.raises(bvh.UnsupportedChannel):
            bvh.parse_bvh(text)

    def test_truncated_file(self):
        with pytest.raises(bvh.ParseError):
            bvh.parse_bvh(MINIMAL[:80])


class TestRoundTrip:
    def test_channels_fixed_point(self):
        clip = generate_synthetic_clip(default_styles()[1], 2.0, seed=5)
        text1 = bvh.write_bvh(clip)
        _, c1 = bvh.parse_bvh(text1)
        text2 = bvh.write_bvh(c1)
        _, c2 = bvh.parse_bvh(text2)
        assert np.abs(motion_rows(text1) - motion_rows(text2)).max() < 1e-4

    def test_fk_matches_original(self):
        clip = generate_synthetic_clip(default_styles()[2], 2.0, seed=6)
        _, reparsed = bvh.parse_bvh(bvh.write_bvh(clip))
        fk_all(reparsed)
        assert np.abs(reparsed.world_pos - clip.world_pos).max() < 1e-3

    def test_all_styles_round_trip(self):
        for spec in default_styles():
            clip = generate_synthetic_clip(spec, 1.5, seed=11)
            text1 = bvh.write_bvh(clip)
            _, c1 = bvh.parse_bvh(text1)
            text2 = bvh.write_bvh(c1)
            assert np.abs(motion_rows(text1) - motion_rows(text2)).max() < 1e-4
