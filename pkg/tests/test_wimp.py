import numpy as np
import pytest

from wimpvar import ConfigError, check_prudence, plausibility_weights, wimp_combine
from wimpvar.wimp import wimp_bounds


def _weights_with(normalized):
    """Build a weight object whose normalized weights match `normalized`."""
    normalized = np.asarray(normalized, dtype=float)
    # Invert the telescoping construction: choose survival values whose
    # successive differences reproduce the requested weights.
    survival = np.cumsum(normalized)
    stats = -np.log(np.clip(survival, 1e-300, None)) / 0.1  # a = 0.1 at T=100, c1=1
    stats = np.maximum.accumulate(stats[::-1])[::-1]
    w = plausibility_weights(stats, 100, c1=1.0, c2=0.5)
    assert np.allclose(w.normalized, normalized, atol=1e-10)
    return w


def test_worked_example():
    w = _weights_with([2 / 3, 1 / 3])  # reference rank 0, X(1,0) = 0.5
    out = wimp_combine([-1.0, -3.0], [1.0, 0.5], w, gamma=0.05)
    assert out.reference_rank == 0
    assert out.lower == -2.0
    assert out.upper == 1.0


def test_point_mass_reproduces_reference_bit_exactly():
    w = _weights_with([1.0, 0.0, 0.0])
    lowers = np.array([-0.123456789, -5.0, -9.0])
    uppers = np.array([0.987654321, 5.0, 9.0])
    out = wimp_combine(lowers, uppers, w, gamma=0.1)
    assert out.lower == lowers[0]
    assert out.upper == uppers[0]


def test_unit_relative_plausibility_gives_hull():
    w = _weights_with([0.25, 0.25, 0.25, 0.25])  # reference 0, all ratios 1
    rng = np.random.default_rng(50)
    lowers = rng.standard_normal(4)
    uppers = lowers + rng.uniform(0.1, 2.0, size=4)
    out = wimp_combine(lowers, uppers, w, gamma=0.05)
    assert out.lower == pytest.approx(lowers.min(), abs=0)
    assert out.upper == pytest.approx(uppers.max(), abs=0)


def test_containment_chain_random_sweep():
    rng = np.random.default_rng(51)
    for _ in range(10_000):
        k = int(rng.integers(1, 5))
        raw = rng.uniform(0.01, 1.0, size=k + 1)
        w = _weights_with(raw / raw.sum())
        lowers = rng.standard_normal(k + 1) * 3
        uppers = lowers + rng.uniform(0.0, 4.0, size=k + 1)
        out = wimp_combine(lowers, uppers, w, gamma=0.05)
        ref = w.reference_rank
        assert out.lower <= lowers[ref] and out.upper >= uppers[ref]
        assert out.lower >= lowers.min() and out.upper <= uppers.max()


def test_monotone_in_weights():
    # Raising a rival's weight (renormalizing against the reference only)
    # weakly widens the interval.
    lowers = np.array([-1.0, -4.0, -2.0])
    uppers = np.array([1.0, 1.5, 4.0])
    base = wimp_combine(lowers, uppers, _weights_with([0.7, 0.2, 0.1]), 0.05)
    wider = wimp_combine(lowers, uppers, _weights_with([0.6, 0.3, 0.1]), 0.05)
    assert wider.lower <= base.lower
    assert wider.upper >= base.upper


def test_degenerate_agreement():
    lowers = np.full(4, -2.5)
    uppers = np.full(4, 0.75)
    for weights in ([0.97, 0.01, 0.01, 0.01], [0.25, 0.25, 0.25, 0.25]):
        out = wimp_combine(lowers, uppers, _weights_with(weights), 0.05)
        assert out.lower == -2.5 and out.upper == 0.75


def test_combination_requires_all_ranks():
    w = _weights_with([0.5, 0.3, 0.2])
    with pytest.raises(ConfigError):
        wimp_combine([-1.0, -2.0], [1.0, 2.0], w, 0.05)  # one rank missing
    with pytest.raises(ConfigError):
        wimp_combine([-1.0, np.nan, -2.0], [1.0, 2.0, 3.0], w, 0.05)


def test_transform_hook_is_clipped():
    w = _weights_with([0.6, 0.4])
    lowers = np.array([-1.0, -3.0])
    uppers = np.array([1.0, 2.0])
    out = wimp_combine(lowers, uppers, w, 0.05, transform=lambda x: 10 * x)
    assert out.lower == -3.0 and out.upper == 2.0  # clipped at the hull
    out = wimp_combine(lowers, uppers, w, 0.05, transform=lambda x: 0.0)
    assert out.lower == -1.0 and out.upper == 1.0  # reference interval


def test_vectorized_bounds_match_scalar_combination():
    rng = np.random.default_rng(52)
    w = _weights_with([0.5, 0.25, 0.25])
    lowers = rng.standard_normal((3, 7))
    uppers = lowers + rng.uniform(0.1, 1.0, size=(3, 7))
    low, upp = wimp_bounds(lowers, uppers, w)
    for q in range(7):
        single = wimp_combine(lowers[:, q], uppers[:, q], w, 0.05)
        assert low[q] == single.lower
        assert upp[q] == single.upper


def test_prudence_conditions_pass_for_combined_output():
    rng = np.random.default_rng(53)
    for _ in range(100):
        w = _weights_with(np.array([0.4, 0.3, 0.3]))
        lowers = rng.standard_normal(3)
        uppers = lowers + rng.uniform(0.1, 2.0, size=3)
        out = wimp_combine(lowers, uppers, w, 0.05)
        report = check_prudence(lowers, uppers, w, out)
        assert report.covers_reference and report.within_hull
        assert report.all_hold


def test_prudence_distance_ordering_fixture():
    # Two equally plausible rivals at distances 1 and 2 below the reference
    # lower bound: the farther one must extend weakly more.
    w = _weights_with([0.5, 0.25, 0.25])
    lowers = np.array([0.0, -1.0, -2.0])
    uppers = np.array([1.0, 1.0, 1.0])
    out = wimp_combine(lowers, uppers, w, 0.05)
    ext = {c.rank: c.lower_extension for c in out.contributions}
    assert ext[1] <= ext[2]
    assert check_prudence(lowers, uppers, w, out).distance_monotone


def test_contributions_match_relative_plausibility_function():
    # The ratios recorded on the combined interval agree with the
    # standalone relative-plausibility helper (clipped at one).
    from wimpvar import relative_plausibility

    rng = np.random.default_rng(54)
    for _ in range(50):
        raw = rng.uniform(0.01, 1.0, size=4)
        w = _weights_with(raw / raw.sum())
        lowers = rng.standard_normal(4)
        uppers = lowers + rng.uniform(0.1, 1.0, size=4)
        out = wimp_combine(lowers, uppers, w, 0.05)
        for contribution in out.contributions:
            expected = min(
                relative_plausibility(w, contribution.rank, w.reference_rank), 1.0
            )
            assert contribution.relative_plausibility == pytest.approx(expected, abs=1e-12)


def test_prudence_plausibility_ordering_fixture():
    # Equal distances, weights 0.6 vs 0.3 relative weight: the heavier rank
    # must extend weakly more.
    w = _weights_with([0.6, 0.3, 0.1])
    lowers = np.array([0.0, -1.0, -1.0])
    uppers = np.array([1.0, 1.0, 1.0])
    out = wimp_combine(lowers, uppers, w, 0.05)
    ext = {c.rank: c.lower_extension for c in out.contributions}
    assert ext[1] >= ext[2]
    assert check_prudence(lowers, uppers, w, out).plausibility_monotone
