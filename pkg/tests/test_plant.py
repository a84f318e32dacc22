import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bisect
from tendonml.errors import NoConvergence, NonFiniteInput
from tendonml.plant import (PRESETS, PlantParams, analytical_forward, analytical_forward_array,
                            analytical_inverse, analytical_inverse_array, invert_plant,
                            plant_forward, plant_forward_array, preset)
from tendonml.numerics import RngStream

angle = st.floats(-90, 90, allow_nan=False)


class TestAnalyticalMap:
    @pytest.mark.parametrize("pose,cmd", [
        ((90, 0), (60, -30, -30)),
        ((0, 0), (0, 0, 0)),
        ((0, 86.6), (0, 50.0, -50.0)),
    ])
    def test_inverse_examples(self, pose, cmd):
        np.testing.assert_allclose(analytical_inverse(pose), cmd, atol=1e-12)

    @pytest.mark.parametrize("cmd,pose", [
        ((60, -30, -30), (90, 0)),
        ((1, 1, 1), (0, 0)),
        ((0, 50, -50), (0, 86.6)),
    ])
    def test_forward_examples(self, cmd, pose):
        np.testing.assert_allclose(analytical_forward(cmd), pose, atol=1e-12)

    def test_non_finite(self):
        with pytest.raises(NonFiniteInput):
            analytical_inverse((math.nan, 0.0))

    @given(a=angle, b=angle)
    def test_sum_zero_and_round_trip(self, a, b):
        cmd = analytical_inverse((a, b))
        assert abs(sum(cmd)) < 1e-12
        np.testing.assert_allclose(analytical_forward(cmd), (a, b), atol=1e-9)

    @given(a=angle, b=angle, c=st.floats(-100, 100))
    def test_common_mode_ignored(self, a, b, c):
        cmd = np.array(analytical_inverse((a, b))) + c
        np.testing.assert_allclose(analytical_forward(cmd), (a, b), atol=1e-9)

    def test_array_versions_match(self, rng):
        P = rng.uniform(-90, 90, (50, 2))
        C = analytical_inverse_array(P)
        np.testing.assert_allclose(C, [analytical_inverse(p) for p in P], atol=1e-14)
        np.testing.assert_allclose(analytical_forward_array(C), P, atol=1e-9)


class TestPlantForward:
    def test_droop_at_zero(self):
        np.testing.assert_allclose(plant_forward((0, 0, 0), PlantParams()), (0, -3.0), atol=1e-12)

    def test_saturation_example(self):
        np.testing.assert_allclose(plant_forward((60, -30, -30), PlantParams()), (82.8, -3.0),
                                   atol=1e-9)

    @given(a=angle, b=angle)
    def test_ideal_equals_analytical(self, a, b):
        cmd = analytical_inverse((a, b))
        np.testing.assert_allclose(plant_forward(cmd, preset("ideal")), analytical_forward(cmd),
                                   atol=1e-12)

    def test_deviation_bound_on_workspace(self):
        ax = np.arange(-90, 91, 2.0)
        P = np.array([(a, b) for a in ax for b in ax])
        dev = plant_forward_array(analytical_inverse_array(P), PlantParams()) - P
        assert np.max(np.abs(dev)) <= 12.0

    def test_noise_only_with_stream(self):
        p = PlantParams(noise_sigma=1.0)
        assert plant_forward((1, 0, -1), p) == plant_forward((1, 0, -1), p.noiseless())
        a = plant_forward((1, 0, -1), p, RngStream(0, 1))
        b = plant_forward((1, 0, -1), p, RngStream(0, 1))
        assert a == b and a != plant_forward((1, 0, -1), p)

    def test_segments_scale_gains(self):
        two = PlantParams(segments=2)
        assert two.effective_kappa_sat == pytest.approx(0.16)
        assert two.effective_g_sag == pytest.approx(6.0)

    @pytest.mark.parametrize("kw", [{"segments": 0}, {"kappa_sat": 0.6}, {"kappa_x": -0.1},
                                    {"g_sag": 31}, {"noise_sigma": -1}])
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            PlantParams(**kw)

    def test_presets(self):
        assert PRESETS["ideal"].is_ideal
        assert PRESETS["heavy"].g_sag == 6.0 and PRESETS["heavy"].kappa_sat == 0.15
        with pytest.raises(ValueError):
            preset("nope")


class TestInvertPlant:
    def test_ideal_edge(self):
        np.testing.assert_allclose(invert_plant((90, 0), preset("ideal")), (60, -30, -30), atol=1e-6)

    def test_origin_against_bisection(self):
        cmd = invert_plant((0, 0), PlantParams())
        b = bisect(lambda b: b * (1 - 0.08 * (b / 90) ** 2) - 3 * math.cos(math.radians(b)), 0, 10)
        assert abs(cmd.l1) < 1e-9
        ref = analytical_inverse((0.0, b))
        np.testing.assert_allclose(cmd, ref, atol=1e-6)
        _, beta = analytical_forward(cmd)
        assert abs(beta - b) < 2e-6
        assert abs(sum(cmd)) < 1e-12

    def test_round_trip_inside_margin(self):
        p = PlantParams()
        for a in range(-80, 81, 10):
            for b in range(-80, 81, 10):
                got = plant_forward(invert_plant((a, b), p), p)
                assert max(abs(got[0] - a), abs(got[1] - b)) < 1e-6

    def test_unreachable_raises(self):
        with pytest.raises(NoConvergence) as exc:
            invert_plant((90, 0), preset("heavy"))
        assert exc.value.residual > 1e-6

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(-80, 80), b=st.floats(-80, 80))
    def test_round_trip_property(self, a, b):
        p = PlantParams()
        got = plant_forward(invert_plant((a, b), p), p)
        assert max(abs(got[0] - a), abs(got[1] - b)) < 1e-6
