import json
import math
from pathlib import Path

import pytest

from spanmask.stats import betainc, significance_marker, t_two_sided_p, welch_t_test

FIXTURES = json.loads((Path(__file__).parent / "fixtures" / "welch.json").read_text())["cases"]


def test_fixture_count():
    assert len(FIXTURES) == 50


@pytest.mark.parametrize("case", FIXTURES, ids=[f"pair{i}" for i in range(len(FIXTURES))])
def test_welch_matches_reference(case):
    t, p = welch_t_test(case["a"], case["b"])
    assert abs(p - case["p"]) <= 1e-6
    assert t == pytest.approx(case["t"], rel=1e-9)


def test_equal_samples():
    assert welch_t_test([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)
    assert welch_t_test([5.0, 5.0], [5.0, 5.0]) == (0.0, 1.0)


def test_symmetric_noise_equal_mean():
    t, p = welch_t_test([9.0, 10.0, 11.0], [8.0, 10.0, 12.0])
    assert t == 0.0 and p == 1.0


def test_constant_different_means():
    t, p = welch_t_test([1.0, 1.0], [2.0, 2.0])
    assert p == 0.0 and t == -math.inf


def test_pooled_variant():
    # equal sizes and variances: pooled and Welch statistics coincide, df differs only via rounding
    a, b = [1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0]
    assert welch_t_test(a, b)[0] == pytest.approx(welch_t_test(a, b, equal_var=True)[0])


def test_too_few_samples():
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])


def test_betainc_known_values():
    assert betainc(1.0, 1.0, 0.3) == pytest.approx(0.3, abs=1e-14)
    assert betainc(2.0, 3.0, 0.4) == pytest.approx(0.5248, abs=1e-12)
    assert betainc(0.5, 0.5, 0.5) == pytest.approx(0.5, abs=1e-12)


def test_t_p_df_one_is_cauchy():
    assert t_two_sided_p(1.0, 1.0) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("p,gain,mark", [
    (0.001, 1.0, "**"), (0.03, 1.0, "*"), (0.2, 1.0, ""), (0.001, -1.0, "- -"), (0.03, -1.0, "-"),
])
def test_markers(p, gain, mark):
    assert significance_marker(p, gain) == mark
