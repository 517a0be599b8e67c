"""Ordered residual classes below an upper conditional quantile."""

import numpy as np
import pytest

from betaquant.clusters import (
    ClusterAssignment,
    classify_residuals,
    cluster_report,
    write_assignment_csv,
)
from betaquant.errors import (
    ConfigError,
    ConstructionError,
    DataValidationError,
    DegenerateClusterError,
)


def test_equal_width_worked_example():
    a = classify_residuals([-0.5, -0.1, 0.0, 0.1], k=3, scheme="equal-width")
    np.testing.assert_allclose(a.boundaries, (-0.3, -0.1))
    np.testing.assert_array_equal(a.classes, [1, 3, 3, 3])
    assert a.counts() == (1, 0, 3)


def test_equal_count_balanced_split():
    r = np.arange(1.0, 10.0)  # 1..9
    a = classify_residuals(r, k=3, scheme="equal-count")
    assert a.boundaries == (3.0, 6.0)
    assert a.counts() == (3, 3, 3)
    np.testing.assert_array_equal(a.classes, [1, 1, 1, 2, 2, 2, 3, 3, 3])


def test_equal_width_boundary_opens_upper_class():
    a = classify_residuals([0.0, 0.2, 0.4, 0.6], k=3, scheme="equal-width")
    np.testing.assert_allclose(a.boundaries, (0.2, 0.4))
    np.testing.assert_array_equal(a.classes, [1, 2, 3, 3])


def test_equal_count_boundary_closes_lower_class():
    a = classify_residuals([1.0, 2.0, 3.0, 4.0], k=2, scheme="equal-count")
    assert a.boundaries == (2.0,)
    np.testing.assert_array_equal(a.classes, [1, 1, 2, 2])


@pytest.mark.parametrize("scheme", ["equal-width", "equal-count"])
def test_random_vector_invariants(scheme):
    rng = np.random.default_rng(17)
    for _ in range(100):
        n = int(rng.integers(6, 80))
        k = int(rng.integers(2, min(6, n // 2 + 1)))
        r = rng.standard_normal(n)
        a = classify_residuals(r, k=k, scheme=scheme)
        assert a.classes.min() >= 1 and a.classes.max() <= k
        assert sum(a.counts()) == n
        assert len(a.boundaries) == k - 1
        order = np.argsort(r)
        assert np.all(np.diff(a.classes[order]) >= 0)


def test_equal_count_exact_when_divisible():
    rng = np.random.default_rng(18)
    r = rng.standard_normal(30)
    a = classify_residuals(r, k=3, scheme="equal-count")
    assert a.counts() == (10, 10, 10)


def test_mapping_is_permutation_invariant():
    rng = np.random.default_rng(19)
    r = rng.standard_normal(25)
    ids = tuple(f"R{i:03d}" for i in range(25))
    a = classify_residuals(r, k=4, region_ids=ids)
    perm = rng.permutation(25)
    b = classify_residuals(r[perm], k=4, region_ids=tuple(ids[i] for i in perm))
    assert a.mapping == b.mapping


def test_classify_validation():
    r = [0.0, 0.5, 1.0, 1.5]
    with pytest.raises(ConfigError, match="k must be >= 2"):
        classify_residuals(r, k=1)
    with pytest.raises(ConfigError, match="need at least"):
        classify_residuals([0.0, 1.0], k=3)
    with pytest.raises(ConfigError, match="scheme"):
        classify_residuals(r, scheme="quartile")
    with pytest.raises(ConfigError, match="region_ids"):
        classify_residuals(r, region_ids=("a", "b"))
    with pytest.raises(ConfigError, match="strictly inside"):
        classify_residuals(r, tau_u=1.5)


def test_degenerate_residuals():
    with pytest.raises(DegenerateClusterError, match="cannot form"):
        classify_residuals([0.3, 0.3, 0.3, 0.3], k=2)
    # Quantile boundaries collide when too few distinct values exist.
    with pytest.raises(DegenerateClusterError, match="tied"):
        classify_residuals([0.0, 0.0, 0.0, 0.0, 1.0], k=3, scheme="equal-count")


def test_assignment_construction_guards():
    base = dict(
        tau_u=0.9,
        k=3,
        scheme="equal-width",
        boundaries=(-0.3, -0.1),
        region_ids=("a", "b", "c", "d"),
        residuals=np.array([-0.5, -0.1, 0.0, 0.1]),
        classes=np.array([1, 3, 3, 3]),
    )
    ClusterAssignment(**base)  # sanity: the template itself is valid
    with pytest.raises(ConstructionError, match="align"):
        ClusterAssignment(**{**base, "region_ids": ("a", "b")})
    with pytest.raises(ConstructionError, match="expected 2 boundaries"):
        ClusterAssignment(**{**base, "boundaries": (-0.3,)})
    with pytest.raises(ConstructionError, match="strictly increasing"):
        ClusterAssignment(**{**base, "boundaries": (-0.1, -0.3)})
    with pytest.raises(ConstructionError, match="1..k"):
        ClusterAssignment(**{**base, "classes": np.array([0, 3, 3, 3])})
    with pytest.raises(ConstructionError, match="non-decreasing"):
        ClusterAssignment(**{**base, "classes": np.array([3, 1, 1, 1])})


def test_report_structure():
    a = classify_residuals(
        [-0.5, -0.1, 0.0, 0.1],
        k=3,
        scheme="equal-width",
        source={"family": "qr", "tau": 0.9},
    )
    rep = cluster_report(a)
    assert [c["count"] for c in rep["classes"]] == [1, 0, 3]
    assert rep["classes"][1]["residual_mean"] is None  # empty middle class
    assert rep["classes"][0]["residual_min"] == -0.5
    np.testing.assert_allclose(rep["boundaries"], [-0.3, -0.1])
    assert rep["source"] == {"family": "qr", "tau": 0.9}
    assert rep["scheme"] == "equal-width"


def test_report_country_composition(fixture_bundle):
    ds, _, _ = fixture_bundle
    rng = np.random.default_rng(20)
    r = rng.standard_normal(ds.n)
    a = classify_residuals(r, k=3, region_ids=ds.region_ids)
    rep = cluster_report(a, ds)
    comp = rep["country_composition"]
    assert set(comp) == set(ds.countries)
    totals = np.sum(list(comp.values()), axis=0)
    assert tuple(int(t) for t in totals) == a.counts()

    shuffled = classify_residuals(r, k=3, region_ids=tuple(reversed(ds.region_ids)))
    with pytest.raises(DataValidationError, match="do not match"):
        cluster_report(shuffled, ds)


def test_assignment_csv_round_trip(tmp_path):
    a = classify_residuals(
        [-0.512345678, -0.1, 0.0, 0.1],
        k=3,
        region_ids=("r1", "r2", "r3", "r4"),
    )
    path = tmp_path / "clusters.csv"
    write_assignment_csv(a, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "region_id,class,residual"
    assert len(lines) == 5
    assert lines[1] == "r1,1,-0.512346"  # six significant digits
    parsed = {row.split(",")[0]: int(row.split(",")[1]) for row in lines[1:]}
    assert parsed == a.mapping
