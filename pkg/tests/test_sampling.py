import numpy as np
import pytest

from slidemap.errors import AllocationError, DiagnosticError, InputError, SamplingError
from slidemap.features import MULTI_SEASON_NTL, WINTER_ONLY, FeatureStack
from slidemap.raster import GridHeader, Raster
from slidemap.sampling import (
    SUBCLASSES,
    SamplePoint,
    SampleSet,
    beta_allocate,
    extract_features,
    load_samples,
    merge_sets,
    morans_correlogram,
    sample_min_distance,
    save_samples,
    split_disjoint,
)


def header(w, h, px=30.0):
    return GridHeader(width=w, height=h, origin_x=0.0, origin_y=h * px, pixel_size=px,
                      crs_label="local")


def raster(values, px=30.0):
    values = np.asarray(values, dtype=np.float32)
    return Raster(header(values.shape[1], values.shape[0], px), values)


def brute_force_moran(values, lag, connectivity="queen"):
    """O(n^2) double-sum oracle over valid pixels."""
    v = np.asarray(values, dtype=np.float64)
    h, w = v.shape
    cells = [(r, c) for r in range(h) for c in range(w) if np.isfinite(v[r, c])]
    n = len(cells)
    mean = np.mean([v[r, c] for r, c in cells])
    cross = 0.0
    pairs = 0
    for (r1, c1) in cells:
        for (r2, c2) in cells:
            if (r1, c1) == (r2, c2):
                continue
            dr, dc = abs(r1 - r2), abs(c1 - c2)
            if connectivity == "queen":
                at_lag = max(dr, dc) == lag
            else:
                at_lag = (dr == lag and dc == 0) or (dr == 0 and dc == lag)
            if at_lag:
                cross += (v[r1, c1] - mean) * (v[r2, c2] - mean)
                pairs += 1
    denom = sum((v[r, c] - mean) ** 2 for r, c in cells)
    return (n / pairs) * (cross / denom)


class TestMoransCorrelogram:
    def test_constant_raster_is_diagnostic_error(self):
        with pytest.raises(DiagnosticError):
            morans_correlogram(raster(np.ones((8, 8))), 2)

    def test_checkerboard_rook_is_minus_one(self):
        rr, cc = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
        board = ((rr + cc) % 2).astype(float)
        lag1 = morans_correlogram(raster(board), 1, connectivity="rook")[0][1]
        assert lag1 == pytest.approx(-1.0, abs=0.05)
        assert lag1 == pytest.approx(brute_force_moran(board, 1, "rook"), abs=1e-12)

    def test_split_halves_strongly_positive(self):
        v = np.zeros((12, 12))
        v[:, :6] = 1.0
        lag1 = morans_correlogram(raster(v), 1)[0][1]
        assert lag1 > 0.8
        assert lag1 == pytest.approx(brute_force_moran(v, 1), abs=1e-12)

    @pytest.mark.parametrize("connectivity", ["queen", "rook"])
    @pytest.mark.parametrize("seed", [0, 1])
    def test_matches_brute_force_with_nodata(self, connectivity, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(9, 11)).astype(np.float32)
        v[rng.random((9, 11)) < 0.15] = np.nan
        got = morans_correlogram(raster(v), 3, connectivity=connectivity)
        for lag, i_val in got:
            assert i_val == pytest.approx(
                brute_force_moran(v, lag, connectivity), abs=1e-12
            )

    def test_smoothing_raises_lag1_autocorrelation(self):
        from scipy.ndimage import uniform_filter

        rng = np.random.default_rng(3)
        noise = rng.normal(size=(32, 32))
        smooth = uniform_filter(noise, 3)
        i_noise = morans_correlogram(raster(noise), 1)[0][1]
        i_smooth = morans_correlogram(raster(smooth), 1)[0][1]
        assert i_smooth > i_noise


class TestSampleMinDistance:
    def test_unconstrained_draw_gets_all_requested(self):
        labels = raster(np.zeros((10, 10)) + 4)  # all forest
        out = sample_min_distance(labels, 100, 0.0, np.random.default_rng(0))
        assert len(out) == 100
        assert not out.saturated
        assert len({(p.x, p.y) for p in out.points}) == 100

    def test_min_distance_holds_pairwise(self):
        labels = raster(np.zeros((40, 40)) + 4)
        out = sample_min_distance(labels, 60, 100.0, np.random.default_rng(1))
        pts = [(p.x, p.y) for p in out.points]
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = np.hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1])
                assert d >= 100.0
                # 100 m exceeds 3 pixels of 30 m.
                assert d / 30.0 > 3.0 or d >= 100.0

    def test_saturation_flag(self):
        labels = raster(np.zeros((5, 5)) + 4)
        out = sample_min_distance(labels, 100, 1000.0, np.random.default_rng(2))
        assert out.saturated
        assert len(out) == 1  # nothing fits beyond the first point

    def test_no_valid_pixels(self):
        labels = raster(np.full((4, 4), np.nan))
        with pytest.raises(SamplingError):
            sample_min_distance(labels, 5, 0.0, np.random.default_rng(0))

    def test_reproducible_with_seed(self):
        labels = raster(np.zeros((20, 20)))
        a = sample_min_distance(labels, 30, 60.0, np.random.default_rng(42))
        b = sample_min_distance(labels, 30, 60.0, np.random.default_rng(42))
        assert a.points == b.points

    def test_labels_carried_from_raster(self):
        v = np.zeros((4, 4))
        v[0, :] = 0  # landslide
        v[1, :] = 1  # building
        labels = raster(v)
        out = sample_min_distance(labels, 16, 0.0, np.random.default_rng(0))
        for p in out.points:
            if p.subclass == "landslide":
                assert p.label == "landslide"
            else:
                assert p.label == "non-landslide"


class TestSplitDisjoint:
    def _point(self, x, y, year=2005, subclass="forest"):
        label = "landslide" if subclass == "landslide" else "non-landslide"
        return SamplePoint(x=x, y=y, year=year, label=label, subclass=subclass)

    def test_near_point_removed_far_point_kept(self):
        train = SampleSet([self._point(0.0, 0.0)])
        val = SampleSet([self._point(50.0, 0.0), self._point(150.0, 0.0)])
        out = split_disjoint(train, val, 100.0)
        assert [p.x for p in out.points] == [150.0]

    def test_empty_training_returns_validation(self):
        val = SampleSet([self._point(1.0, 1.0)])
        out = split_disjoint(SampleSet([]), val, 100.0)
        assert out.points == val.points

    def test_only_same_year_counts(self):
        train = SampleSet([self._point(0.0, 0.0, year=2005)])
        val = SampleSet([self._point(10.0, 0.0, year=2010)])
        out = split_disjoint(train, val, 100.0)
        assert len(out) == 1

    def test_exactly_at_distance_is_kept(self):
        train = SampleSet([self._point(0.0, 0.0)])
        val = SampleSet([self._point(100.0, 0.0)])
        assert len(split_disjoint(train, val, 100.0)) == 1


def make_pool(per_subclass=900, years=(2005, 2010, 2015), rng=None):
    rng = rng or np.random.default_rng(0)
    pts = []
    i = 0
    for subclass in SUBCLASSES:
        label = "landslide" if subclass == "landslide" else "non-landslide"
        count = per_subclass * 4 if subclass == "landslide" else per_subclass
        for k in range(count):
            year = years[k % len(years)]
            pts.append(SamplePoint(x=float(i), y=float(i), year=year, label=label,
                                   subclass=subclass))
            i += 1
    return SampleSet(pts)


class TestBetaAllocate:
    def test_equal_classes_at_beta_one(self):
        out = beta_allocate(make_pool(), 1.0, 2000, 100, np.random.default_rng(0))
        assert len(out.by_label("landslide")) == 1000
        assert len(out.by_label("non-landslide")) == 1000

    def test_beta_three(self):
        out = beta_allocate(make_pool(), 3.0, 2000, 100, np.random.default_rng(0))
        assert len(out.by_label("landslide")) == 500
        assert len(out.by_label("non-landslide")) == 1500

    def test_beta_four_minimums_respected(self):
        out = beta_allocate(make_pool(), 4.0, 2000, 100, np.random.default_rng(0))
        assert len(out.by_label("non-landslide")) == 1600
        for s in SUBCLASSES[1:]:
            assert sum(1 for p in out.points if p.subclass == s) >= 100

    def test_totals_always_sum(self):
        pool = make_pool()
        for beta in (1.0, 1.7, 2.5, 4.9):
            out = beta_allocate(pool, beta, 1999, 50, np.random.default_rng(1))
            assert len(out) == 1999
            n_ls = len(out.by_label("landslide"))
            assert abs(n_ls - 1999 / (1 + beta)) <= 1

    def test_rounding_half_away_from_zero(self):
        # total/(1+beta) = 1000/3 = 333.33 -> 333; 500/(1+1) = 250 exactly;
        # 45/(1+1) = 22.5 -> 23.
        out = beta_allocate(make_pool(), 1.0, 45, 1, np.random.default_rng(0))
        assert len(out.by_label("landslide")) == 23

    def test_near_even_year_split(self):
        out = beta_allocate(make_pool(), 3.0, 2000, 100, np.random.default_rng(0))
        per_year = [sum(1 for p in out.points if p.year == y) for y in (2005, 2010, 2015)]
        assert max(per_year) - min(per_year) <= len(SUBCLASSES)

    def test_shallow_subclass_reported(self):
        pool = make_pool(per_subclass=40)
        with pytest.raises(AllocationError) as err:
            beta_allocate(pool, 4.0, 2000, 100, np.random.default_rng(0))
        assert err.value.subclass in SUBCLASSES

    def test_missing_subclass_rejected(self):
        pool = SampleSet([p for p in make_pool().points if p.subclass != "water"])
        with pytest.raises(AllocationError):
            beta_allocate(pool, 2.0, 200, 10, np.random.default_rng(0))

    def test_reproducible(self):
        a = beta_allocate(make_pool(), 2.0, 500, 20, np.random.default_rng(9))
        b = beta_allocate(make_pool(), 2.0, 500, 20, np.random.default_rng(9))
        assert a.points == b.points


class TestExtractFeatures:
    def _stack(self, h=4, w=4, nodata_at=None):
        hdr = header(w, h)
        layers = []
        for i, name in enumerate(WINTER_ONLY.layer_names):
            v = np.full((h, w), 0.1 * (i + 1), dtype=np.float32)
            if nodata_at:
                for (r, c) in nodata_at:
                    v[r, c] = np.nan
            layers.append((name, Raster(hdr, v)))
        return FeatureStack(variant=WINTER_ONLY, year=2005, layers=layers)

    def _points(self, coords, subclass="forest"):
        label = "landslide" if subclass == "landslide" else "non-landslide"
        return SampleSet([
            SamplePoint(x=x, y=y, year=2005, label=label, subclass=subclass)
            for x, y in coords
        ])

    def test_full_extraction(self):
        stack = self._stack()
        pts = self._points([(15.0 + 30 * i, 15.0) for i in range(4)])
        tm = extract_features(pts, stack)
        assert tm.features.shape == (4, 9)
        assert tm.n_dropped == 0

    def test_nodata_rows_dropped_and_counted(self):
        stack = self._stack(nodata_at=[(3, 0), (3, 1), (3, 2)])
        # Points in the bottom row (y in [0, 30)) hit the nodata pixels.
        pts = self._points([(15.0, 15.0), (45.0, 15.0), (75.0, 15.0),
                            (15.0, 45.0), (45.0, 45.0)])
        tm = extract_features(pts, stack)
        assert tm.features.shape[0] == 2
        assert tm.n_dropped == 3

    def test_outside_extent_dropped(self):
        stack = self._stack()
        pts = self._points([(15.0, 15.0), (-10.0, 15.0), (1e6, 15.0)])
        tm = extract_features(pts, stack)
        assert tm.features.shape[0] == 1
        assert tm.n_dropped == 2

    def test_boundary_point_goes_to_floor_pixel(self):
        hdr = header(2, 1)
        layers = []
        for name in WINTER_ONLY.layer_names:
            layers.append((name, Raster(hdr, np.array([[1.0, 2.0]], dtype=np.float32))))
        stack = FeatureStack(variant=WINTER_ONLY, year=2005, layers=layers)
        # x = 30.0 sits exactly between the two pixels -> column 1.
        tm = extract_features(self._points([(30.0, 15.0)]), stack)
        assert tm.features[0, 0] == 2.0

    def test_labels_binary(self):
        stack = self._stack()
        pool = SampleSet(
            self._points([(15.0, 15.0)]).points
            + self._points([(45.0, 15.0)], subclass="landslide").points
        )
        tm = extract_features(pool, stack)
        assert sorted(tm.labels.tolist()) == [0, 1]


class TestCsvRoundtrip:
    def test_roundtrip_preserves_order_and_values(self, tmp_path):
        pool = make_pool(per_subclass=5, years=(2005,))
        save_samples(pool, tmp_path / "s.csv")
        back = load_samples(tmp_path / "s.csv")
        assert back.points == pool.points

    def test_bad_columns_rejected(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
        with pytest.raises(InputError):
            load_samples(tmp_path / "bad.csv")

    def test_merge_requires_same_distance(self):
        a = SampleSet([], min_distance=10.0)
        b = SampleSet([], min_distance=20.0)
        with pytest.raises(InputError):
            merge_sets([a, b])
