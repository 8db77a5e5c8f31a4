import datetime as dt

import numpy as np
import pytest

from slidemap.errors import ConfigError, InputError
from slidemap.features import (
    BAND_NAMES,
    MULTI_SEASON_NTL,
    SPRING,
    SUMMER,
    WINTER,
    WINTER_ONLY,
    DatedScene,
    ModelVariant,
    assemble_stack,
    compute_slope,
    normalized_difference,
    seasonal_composite,
)
from slidemap.raster import GridHeader, MaskRaster, Raster


def header(w=2, h=2, px=30.0):
    return GridHeader(width=w, height=h, origin_x=0.0, origin_y=h * px, pixel_size=px,
                      crs_label="local")


def scene(date, band_values, qa_values=None, h=None):
    h = h or header()
    qa = MaskRaster(h, np.zeros(h.shape, np.uint8) if qa_values is None else qa_values)
    bands = {}
    for i, name in enumerate(BAND_NAMES):
        v = band_values.get(name, 0.1 + 0.01 * i) if isinstance(band_values, dict) else band_values
        bands[name] = Raster(h, np.full(h.shape, v, np.float32))
    return DatedScene(acquisition_date=date, bands=bands, qa=qa)


class TestNormalizedDifference:
    def test_direct_arithmetic(self):
        h = header(1, 1)
        out = normalized_difference(Raster(h, [0.5]), Raster(h, [0.1]))
        assert out.values[0, 0] == pytest.approx(0.666667, abs=1e-6)

    def test_symmetry_zero(self):
        h = header(1, 1)
        out = normalized_difference(Raster(h, [0.3]), Raster(h, [0.3]))
        assert out.values[0, 0] == 0.0

    def test_degenerate_denominator(self):
        h = header(1, 1)
        out = normalized_difference(Raster(h, [0.0]), Raster(h, [0.0]))
        assert np.isnan(out.values[0, 0])

    def test_range_for_nonnegative_inputs(self):
        h = header(8, 8)
        rng = np.random.default_rng(0)
        a = Raster(h, rng.uniform(0, 1.5, h.shape))
        b = Raster(h, rng.uniform(0, 1.5, h.shape))
        out = normalized_difference(a, b).values
        ok = np.isfinite(out)
        assert (out[ok] >= -1).all() and (out[ok] <= 1).all()


class TestSeasonalComposite:
    def test_mean_of_clear_observations(self):
        h = header(1, 1)
        scenes = [
            scene(dt.date(2005, 7, 1), {"red": 0.2}, qa_values=[[2]], h=h),
            scene(dt.date(2005, 7, 15), {"red": 0.4}, h=h),
            scene(dt.date(2005, 8, 1), {"red": 0.6}, h=h),
        ]
        comp = seasonal_composite(scenes, SUMMER, 2005)
        assert comp["red"].values[0, 0] == pytest.approx(0.5)

    def test_all_rejected_is_nodata(self):
        h = header(1, 1)
        scenes = [scene(dt.date(2005, 7, 1), {"red": 0.2}, qa_values=[[2]], h=h)]
        comp = seasonal_composite(scenes, SUMMER, 2005)
        assert np.isnan(comp["red"].values[0, 0])

    def test_winter_spans_previous_december(self):
        h = header(1, 1)
        included = scene(dt.date(2004, 12, 15), {"red": 0.3}, h=h)
        excluded = scene(dt.date(2005, 12, 15), {"red": 0.9}, h=h)
        comp = seasonal_composite([included, excluded], WINTER, 2005)
        assert comp["red"].values[0, 0] == pytest.approx(0.3)

    def test_indices_averaged_per_scene(self):
        # Means of per-scene ratios differ from the ratio of means; check we
        # compute the former.
        h = header(1, 1)
        s1 = scene(dt.date(2005, 4, 1), {"nir": 0.6, "red": 0.2}, h=h)   # ndvi 0.5
        s2 = scene(dt.date(2005, 5, 1), {"nir": 0.2, "red": 0.1}, h=h)   # ndvi 1/3
        comp = seasonal_composite([s1, s2], SPRING, 2005)
        assert comp["ndvi"].values[0, 0] == pytest.approx((0.5 + 1 / 3) / 2, abs=1e-6)

    def test_permutation_invariant(self):
        h = header(3, 3)
        rng = np.random.default_rng(5)
        scenes = [
            scene(dt.date(2005, 6, 1 + i), rng.uniform(0.05, 0.5),
                  qa_values=rng.choice([0, 2], size=h.shape).astype(np.uint8), h=h)
            for i in range(4)
        ]
        a = seasonal_composite(scenes, SUMMER, 2005)
        b = seasonal_composite(scenes[::-1], SUMMER, 2005)
        for name in a:
            np.testing.assert_allclose(a[name].values, b[name].values, equal_nan=True)

    def test_fully_masked_scene_changes_nothing(self):
        h = header(2, 2)
        base = [scene(dt.date(2005, 7, 1), 0.25, h=h)]
        cloudy = scene(dt.date(2005, 7, 9), 0.7,
                       qa_values=np.full(h.shape, 2, np.uint8), h=h)
        a = seasonal_composite(base, SUMMER, 2005)
        b = seasonal_composite(base + [cloudy], SUMMER, 2005)
        for name in a:
            np.testing.assert_array_equal(a[name].values, b[name].values)


class TestComputeSlope:
    def test_flat_plane(self):
        dem = Raster(header(5, 5), np.zeros((5, 5)) + 200.0)
        out = compute_slope(dem)
        np.testing.assert_allclose(out.values, 0.0)

    def test_unit_gradient_is_45_degrees(self):
        h = header(6, 6)
        cols = np.arange(6) * h.pixel_size
        dem = Raster(h, np.tile(cols, (6, 1)))
        out = compute_slope(dem)
        np.testing.assert_allclose(out.values[1:-1, 1:-1], 45.0, atol=1e-6)

    def test_30_degree_gradient(self):
        h = header(6, 6)
        cols = np.arange(6) * h.pixel_size * 0.57735
        dem = Raster(h, np.tile(cols, (6, 1)))
        out = compute_slope(dem)
        np.testing.assert_allclose(out.values[1:-1, 1:-1], 30.0, atol=1e-4)

    def test_invariance_to_offset_and_negation(self):
        h = header(7, 7)
        rng = np.random.default_rng(11)
        z = rng.normal(size=(7, 7)) * 40
        a = compute_slope(Raster(h, z)).values
        b = compute_slope(Raster(h, z + 500.0)).values
        c = compute_slope(Raster(h, -z)).values
        np.testing.assert_allclose(a, b, atol=1e-4)
        np.testing.assert_allclose(a, c, atol=1e-4)

    def test_nodata_window_propagation(self):
        h = header(5, 5)
        z = np.zeros((5, 5), np.float32)
        z[2, 2] = np.nan
        out = compute_slope(Raster(h, z))
        assert np.isnan(out.values[1:4, 1:4]).all()
        assert np.isfinite(out.values[0, 0])


class TestAssembleStack:
    def _composites(self, seasons, h):
        flat = {name: Raster(h, np.full(h.shape, 0.2, np.float32))
                for name in ("blue", "green", "red", "nir", "swir1", "swir2", "ndvi", "ndwi")}
        return {s: dict(flat) for s in seasons}

    def test_multi_season_ntl_has_26_layers(self):
        h = header()
        stack = assemble_stack(
            self._composites(("winter", "spring", "summer"), h),
            slope=Raster(h, np.zeros(h.shape)),
            ntl=Raster(h, np.zeros(h.shape)),
            variant=MULTI_SEASON_NTL,
            year=2005,
        )
        assert len(stack.layers) == 26
        assert stack.layer_names[0] == "winter_blue"
        assert stack.layer_names[-2:] == ("slope", "ntl")

    def test_winter_only_has_9_layers(self):
        h = header()
        stack = assemble_stack(
            self._composites(("winter",), h),
            slope=Raster(h, np.zeros(h.shape)),
            ntl=None,
            variant=WINTER_ONLY,
            year=2005,
        )
        assert len(stack.layers) == 9
        assert stack.layer_names[-1] == "slope"

    def test_missing_ntl_is_config_error(self):
        h = header()
        with pytest.raises(ConfigError):
            assemble_stack(
                self._composites(("winter", "spring", "summer"), h),
                slope=Raster(h, np.zeros(h.shape)),
                ntl=None,
                variant=MULTI_SEASON_NTL,
                year=2005,
            )

    def test_missing_season_is_config_error(self):
        h = header()
        with pytest.raises(ConfigError):
            assemble_stack(
                self._composites(("winter",), h),
                slope=Raster(h, np.zeros(h.shape)),
                ntl=None,
                variant=ModelVariant(("winter", "summer")),
                year=2005,
            )

    def test_layer_order_is_a_pure_function_of_variant(self):
        assert MULTI_SEASON_NTL.layer_names == MULTI_SEASON_NTL.layer_names
        assert ModelVariant(("summer", "winter")).seasons == ("winter", "summer")


class TestSceneValidation:
    def test_reflectance_range_enforced(self):
        h = header()
        qa = MaskRaster(h, np.zeros(h.shape, np.uint8))
        bands = {name: Raster(h, np.full(h.shape, 0.2, np.float32)) for name in BAND_NAMES}
        bands["red"] = Raster(h, np.full(h.shape, 2.5, np.float32))
        with pytest.raises(InputError):
            DatedScene(dt.date(2005, 1, 1), bands, qa)
