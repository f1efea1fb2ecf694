import math

import numpy as np
import pytest

from defect_triage.errors import MaskFormatError
from defect_triage.masks import (
    CertaintyMask,
    build_feature_record,
    compute_center_distance,
    compute_eccentricity,
    encode_pgm,
    extract_superpixels,
    load_mask,
)

from oracles import flood_fill_components


def make_mask(rows, image_id="img", mass_scale=1.0):
    arr = np.array(rows, dtype=float)
    return CertaintyMask(image_id, arr.shape[1], arr.shape[0], arr, mass_scale)


TWO_BLOBS = np.zeros((8, 8))
TWO_BLOBS[1, 1] = TWO_BLOBS[1, 2] = 1.0
TWO_BLOBS[6, 6] = 1.0


class TestPgm:
    def test_p2_basic(self):
        mask = load_mask(b"P2\n2 2\n255\n0 255 255 0\n", "m")
        assert mask.values.flatten().tolist() == [0.0, 1.0, 1.0, 0.0]

    def test_p2_comments_and_whitespace(self):
        data = b"P2 # plain\n# comment line\n 2 2 \n255\n0 255\n255 0"
        mask = load_mask(data, "m")
        assert mask.values.flatten().tolist() == [0.0, 1.0, 1.0, 0.0]

    def test_p2_truncated(self):
        with pytest.raises(MaskFormatError, match="truncated"):
            load_mask(b"P2\n2 2\n255\n0 255 255\n", "m")

    def test_p5_matches_p2(self):
        # same grid encoded both ways must yield the same mask
        p2 = b"P2\n3 2\n255\n0 255 128 64 32 255\n"
        p5 = b"P5\n3 2\n255\n" + bytes([0, 255, 128, 64, 32, 255])
        m2 = load_mask(p2, "m")
        m5 = load_mask(p5, "m")
        assert np.array_equal(m2.values, m5.values)
        assert (m2.width, m2.height) == (m5.width, m5.height)

    def test_p5_truncated(self):
        with pytest.raises(MaskFormatError, match="truncated.*byte"):
            load_mask(b"P5\n2 2\n255\n" + bytes([1, 2, 3]), "m")

    def test_bad_magic(self):
        with pytest.raises(MaskFormatError, match="byte 0"):
            load_mask(b"P6\n1 1\n255\n0", "m")

    def test_zero_maxval(self):
        with pytest.raises(MaskFormatError, match="maxval"):
            load_mask(b"P2\n1 1\n0\n0\n", "m")

    def test_value_above_maxval(self):
        with pytest.raises(MaskFormatError, match="exceeds maxval"):
            load_mask(b"P2\n1 1\n100\n101\n", "m")

    def test_16bit_p5(self):
        data = b"P5\n2 1\n65535\n" + (500).to_bytes(2, "big") + (65535).to_bytes(2, "big")
        mask = load_mask(data, "m")
        assert mask.values[0, 1] == 1.0
        assert abs(mask.values[0, 0] - 500 / 65535) < 1e-12

    def test_encode_roundtrip_both_formats(self):
        rng = np.random.RandomState(3)
        grid = np.round(rng.rand(5, 7), 3)
        grid = np.rint(grid * 255) / 255
        mask = CertaintyMask("m", 7, 5, grid)
        for binary in (False, True):
            again = load_mask(encode_pgm(mask, binary=binary), "m")
            assert np.allclose(again.values, mask.values, atol=1e-12)


class TestExtract:
    def test_all_zero(self):
        assert extract_superpixels(make_mask(np.zeros((8, 8))), 0.3) == []

    def test_two_blobs(self):
        sps = extract_superpixels(make_mask(TWO_BLOBS), 0.3)
        # flood-fill oracle agrees on the partition
        oracle = flood_fill_components(TWO_BLOBS.tolist(), 0.3)
        assert {sp.pixels for sp in sps} == oracle
        assert [sp.mass for sp in sps] == [2.0, 1.0]
        assert [sp.superpixel_id for sp in sps] == ["hp_img_1", "hp_img_2"]

    def test_diagonal_is_connected(self):
        grid = np.zeros((4, 4))
        grid[0, 0] = grid[1, 1] = 1.0
        sps = extract_superpixels(make_mask(grid), 0.3)
        assert len(sps) == 1
        assert sps[0].pixels == frozenset({(0, 0), (1, 1)})

    def test_partition_property(self):
        rng = np.random.RandomState(11)
        for _ in range(50):
            h, w = rng.randint(1, 16, size=2)
            grid = np.rint(rng.rand(h, w) * 255) / 255
            mask = make_mask(grid)
            cutoff = float(rng.rand())
            sps = extract_superpixels(mask, cutoff)
            union = set()
            total = 0
            for sp in sps:
                total += len(sp.pixels)
                union |= sp.pixels
            assert total == len(union)  # pairwise disjoint
            expected = {(r, c) for r in range(h) for c in range(w) if grid[r, c] >= cutoff}
            assert union == expected

    def test_oracle_equivalence_random(self):
        rng = np.random.RandomState(5)
        for _ in range(100):
            h, w = rng.randint(1, 33, size=2)
            grid = (rng.rand(h, w) < 0.4) * rng.rand(h, w)
            sps = extract_superpixels(make_mask(grid), 0.3)
            assert {sp.pixels for sp in sps} == flood_fill_components(grid.tolist(), 0.3)

    def test_cutoff_monotonicity(self):
        # pixel count never grows with the cutoff; components always outnumbered by pixels
        rng = np.random.RandomState(23)
        for _ in range(25):
            grid = rng.rand(12, 12)
            mask = make_mask(grid)
            lo = extract_superpixels(mask, 0.2)
            hi = extract_superpixels(mask, 0.6)
            px_lo = sum(len(sp.pixels) for sp in lo)
            px_hi = sum(len(sp.pixels) for sp in hi)
            assert px_hi <= px_lo
            assert len(hi) <= px_lo

    def test_mass_scale_linearity(self):
        grid = TWO_BLOBS * 0.8
        base = extract_superpixels(make_mask(grid), 0.3)
        scaled = extract_superpixels(make_mask(grid, mass_scale=2.5), 0.3)
        for a, b in zip(base, scaled):
            assert b.mass == a.mass * 2.5
            assert b.pixels == a.pixels
            assert b.eccentricity == a.eccentricity
            assert b.center_distance == a.center_distance

    def test_mass_matches_pixel_sum(self):
        rng = np.random.RandomState(2)
        grid = np.rint(rng.rand(10, 10) * 255) / 255
        mask = make_mask(grid, mass_scale=1.7)
        for sp in extract_superpixels(mask, 0.3):
            expected = sum(grid[r, c] for r, c in sp.pixels) * 1.7
            assert abs(sp.mass - expected) < 1e-9


class TestCenterDistance:
    def test_exact_center(self):
        assert compute_center_distance((101, 101), (50.0, 50.0)) == 0.0

    def test_corner(self):
        assert abs(compute_center_distance((100, 100), (0.0, 0.0)) - 1.0) < 1e-12

    def test_edge_midpoint(self):
        # 49.5 / (49.5 * sqrt(2))
        assert abs(compute_center_distance((100, 100), (49.5, 0.0)) - 0.7071) < 1e-3

    def test_single_pixel_image(self):
        assert compute_center_distance((1, 1), (0.0, 0.0)) == 0.0


class TestEccentricity:
    def test_single_pixel(self):
        assert compute_eccentricity({(3, 3)}) == 0.0

    def test_horizontal_segment(self):
        assert compute_eccentricity({(0, c) for c in range(20)}) == 1.0

    def test_full_square(self):
        pixels = {(r, c) for r in range(3) for c in range(3)}
        assert abs(compute_eccentricity(pixels)) < 1e-9

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            compute_eccentricity(set())

    def test_rotation_invariance_on_masks(self):
        # match components through the rotation; both features are preserved
        rng = np.random.RandomState(17)
        for _ in range(20):
            n = 14
            grid = (rng.rand(n, n) < 0.3) * 1.0
            rotated = np.rot90(grid, k=-1).copy()  # (r, c) -> (c, n-1-r)
            comps_a = {sp.pixels: sp for sp in extract_superpixels(make_mask(grid), 0.5)}
            comps_b = {sp.pixels: sp for sp in extract_superpixels(make_mask(rotated), 0.5)}
            assert len(comps_a) == len(comps_b)
            for pixels, sp in comps_a.items():
                image = frozenset((c, n - 1 - r) for r, c in pixels)
                other = comps_b[image]
                assert abs(sp.center_distance - other.center_distance) <= 1e-9
                assert abs(sp.eccentricity - other.eccentricity) <= 1e-9

    def test_rotation_invariance_regular_shapes(self):
        n = 21
        shapes = [
            {(5, c) for c in range(3, 17)},  # line
            {(r, c) for r in range(4, 9) for c in range(3, 14)},  # rectangle
            {(r, c) for r in range(6, 13) for c in range(6, 13)},  # square
            {(r, c) for r in range(n) for c in range(n) if (r - 10) ** 2 + (c - 10) ** 2 <= 36},
        ]
        for pixels in shapes:
            rotated = {(c, n - 1 - r) for r, c in pixels}
            assert abs(compute_eccentricity(pixels) - compute_eccentricity(rotated)) <= 1e-9

    def test_hull_path_matches_bruteforce(self):
        # large sets take the convex-hull path; it must find the same
        # maximizing pairs the all-pairs scan finds
        rng = np.random.RandomState(29)
        rows = rng.randint(0, 60, size=900)
        cols = rng.randint(0, 60, size=900)
        pixels = set(zip(rows.tolist(), cols.tolist()))
        assert len(pixels) > 400
        from defect_triage.masks import _major_axis_pairs

        pts = np.array(sorted(pixels), dtype=np.int64)
        via_hull_pairs, via_hull_d2 = _major_axis_pairs(pts)
        best = -1
        best_pairs = []
        as_list = sorted(pixels)
        for i in range(len(as_list)):
            for j in range(i + 1, len(as_list)):
                d2 = (as_list[i][0] - as_list[j][0]) ** 2 + (as_list[i][1] - as_list[j][1]) ** 2
                if d2 > best:
                    best = d2
                    best_pairs = [(as_list[i], as_list[j])]
                elif d2 == best:
                    best_pairs.append((as_list[i], as_list[j]))
        assert via_hull_d2 == best
        assert via_hull_pairs == best_pairs


class TestFeatureRecord:
    def test_empty(self):
        rec = build_feature_record(make_mask(np.zeros((5, 5))), 0.3)
        assert rec.num_hps == 0
        assert rec.total_volume == 0.0
        assert rec.superpixels == ()

    def test_two_blobs(self):
        rec = build_feature_record(make_mask(TWO_BLOBS), 0.3)
        assert rec.num_hps == 2
        assert abs(rec.total_volume - 3.0) < 1e-9

    def test_mass_scale_doubles_volume(self):
        rec = build_feature_record(make_mask(TWO_BLOBS, mass_scale=2.0), 0.3)
        assert abs(rec.total_volume - 6.0) < 1e-9

    def test_invariant_validation(self):
        with pytest.raises(ValueError):
            build_feature_record(make_mask(TWO_BLOBS), 0.3).__class__(
                "x", (), 1, 0.0
            )


class TestMaskValidation:
    def test_values_out_of_range(self):
        with pytest.raises(ValueError):
            CertaintyMask("m", 2, 1, np.array([[0.0, 1.5]]))

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            CertaintyMask("m", 2, 2, np.array([0.0, 1.0, 0.5]))

    def test_flat_values_accepted(self):
        mask = CertaintyMask("m", 2, 2, [0.0, 1.0, 0.5, 0.25])
        assert mask.values.shape == (2, 2)

    def test_bad_mass_scale(self):
        with pytest.raises(ValueError):
            CertaintyMask("m", 1, 1, [0.5], mass_scale=0.0)
