import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crlflow.data import (
    EnvironmentSpec,
    MultiEnvDataset,
    bivariate_envs,
    generate,
    metadata_path,
    paired_envs,
    per_node_envs,
    read,
    split,
    write,
)
from crlflow.exceptions import FormatError, InputError
from crlflow.mixing import sample_mixing, unmix
from crlflow.rng import child_rng
from crlflow.scm import bivariate_linear_scm, sample_random_scm


@pytest.fixture(scope="module")
def bivariate():
    rng = child_rng(0, "data-tests")
    s = bivariate_linear_scm(3.0)
    m = sample_mixing(2, rng)
    envs = bivariate_envs(rng)
    return s, m, envs, generate(s, m, envs, 20_000, seed=1)


def test_bivariate_preset_layout():
    envs = bivariate_envs(np.random.default_rng(0))
    assert [e.label for e in envs] == [0, 1, 2]
    assert envs[0].interventions == ()
    assert [e.interventions[0].target for e in envs[1:]] == [1, 2]
    assert all(e.interventions[0].mean in (2.0, -2.0) and e.interventions[0].std == 1.0 for e in envs[1:])


def test_shift_signs_cover_both_values():
    rng = np.random.default_rng(1)
    means = {bivariate_envs(rng)[1].interventions[0].mean for _ in range(50)}
    assert means == {2.0, -2.0}


def test_other_presets():
    assert [e.label for e in per_node_envs(np.random.default_rng(0), 3)] == [1, 2, 3]
    assert [e.label for e in per_node_envs(np.random.default_rng(0), 3, observational=True)] == [0, 1, 2, 3]
    pairs = paired_envs(2)
    assert [(e.label, e.interventions[0].target, e.interventions[0].mean) for e in pairs] == [
        (1, 1, 2.0), (2, 1, -2.0), (3, 2, 2.0), (4, 2, -2.0)]


def test_generate_rows_and_balance():
    rng = np.random.default_rng(2)
    d = generate(bivariate_linear_scm(2.0), sample_mixing(2, rng), bivariate_envs(rng), 1000, seed=3)
    assert len(d) == 3000
    assert np.bincount(d.env).tolist() == [1000, 1000, 1000]


def test_stored_latents_match_unmix(bivariate):
    _, m, _, d = bivariate
    np.testing.assert_allclose(unmix(m, d.X), d.V, atol=1e-6)


def test_observational_covariance(bivariate):
    _, _, _, d = bivariate
    V = d.where_env(0).V
    alpha, N = 3.0, V.shape[0]
    cov = np.cov(V.T)
    expected = np.array([[1.0, alpha], [alpha, 1 + alpha ** 2]])
    # loose 5-sigma band on each entry (var of a sample covariance ~ (s_ii s_jj + s_ij^2) / N)
    band = 5 * np.sqrt((np.outer(np.diag(expected), np.diag(expected)) + expected ** 2) / N)
    assert np.all(np.abs(cov - expected) <= band)


def test_unintervened_mechanism_shared(bivariate):
    _, _, _, d = bivariate
    fits = []
    for label in (0, 1):
        V = d.where_env(label).V
        x, y = V[:, 0], V[:, 1]
        slope, icpt = np.polyfit(x, y, 1)
        resid = y - (slope * x + icpt)
        se = resid.std(ddof=2) / (x.std() * math.sqrt(x.size))
        fits.append((slope, se))
    (s0, e0), (s1, e1) = fits
    assert abs(s0 - s1) <= 3 * math.hypot(e0, e1)


def test_perfect_intervention_marginals(bivariate):
    _, _, envs, d = bivariate
    for e in envs[1:]:
        iv = e.interventions[0]
        col = d.where_env(e.label).V[:, iv.target - 1]
        tol = 4 / math.sqrt(col.size)
        assert abs(col.mean() - iv.mean) < tol
        assert abs(col.std() - iv.std) < tol


def test_split_sizes_disjoint_and_deterministic():
    rng = np.random.default_rng(4)
    d = MultiEnvDataset(rng.integers(0, 3, 3000), rng.normal(size=(3000, 2)))
    parts = split(d, rng=np.random.default_rng(5))
    assert [len(p) for p in parts] == [2100, 450, 450]
    rows = np.concatenate([p.X for p in parts])
    assert sorted(map(tuple, rows)) == sorted(map(tuple, d.X))
    again = split(d, rng=np.random.default_rng(5))
    for a, b in zip(parts, again):
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.env, b.env)


def test_split_rejects_bad_fractions():
    d = MultiEnvDataset(np.zeros(10, dtype=int), np.zeros((10, 2)))
    with pytest.raises(InputError):
        split(d, (0.5, 0.5, 0.0))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (7, 2), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)),
       st.lists(st.integers(0, 3), min_size=7, max_size=7))
def test_csv_round_trip_bit_exact(tmp_path_factory, X, env):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    d = MultiEnvDataset(np.array(env), X, X[:, ::-1].copy(), {"note": "x"})
    write(d, path)
    back = read(path)
    assert back.X.tobytes() == d.X.tobytes()
    assert back.V.tobytes() == d.V.tobytes()
    np.testing.assert_array_equal(back.env, d.env)
    assert back.metadata == d.metadata


def test_generated_dataset_round_trip(tmp_path, bivariate):
    _, _, _, d = bivariate
    small = d.subset(np.arange(0, len(d), 97))
    write(small, tmp_path / "g.csv")
    back = read(tmp_path / "g.csv")
    assert back.X.tobytes() == small.X.tobytes()
    assert back.metadata["envs"] == small.metadata["envs"]


def test_missing_latent_columns_is_format_error(tmp_path):
    d = MultiEnvDataset(np.array([0, 1]), np.ones((2, 2)), np.ones((2, 2)), {"has_latents": True})
    path = tmp_path / "d.csv"
    write(d, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(",".join(r.split(",")[:3]) for r in lines) + "\n")
    with pytest.raises(FormatError, match="missing columns"):
        read(path)


def test_malformed_rows_report_line(tmp_path):
    d = MultiEnvDataset(np.array([0, 1]), np.ones((2, 2)))
    path = tmp_path / "d.csv"
    write(d, path)
    with open(path, "a") as fh:
        fh.write("0,abc,1\n")
    with pytest.raises(FormatError, match="line 4"):
        read(path)


def test_missing_sidecar(tmp_path):
    (tmp_path / "d.csv").write_text("env,x_1\n0,1\n")
    with pytest.raises(FormatError):
        read(tmp_path / "d.csv")


def test_undeclared_environment(tmp_path):
    d = MultiEnvDataset(np.array([0, 1]), np.ones((2, 2)),
                        metadata={"envs": [EnvironmentSpec(0).to_dict(), EnvironmentSpec(1).to_dict()]})
    path = tmp_path / "d.csv"
    write(d, path)
    meta = json.loads(open(metadata_path(path)).read())
    meta["envs"] = meta["envs"][:1]
    open(metadata_path(path), "w").write(json.dumps(meta))
    with pytest.raises(FormatError, match="not declared"):
        read(path)


def test_generate_validates_inputs():
    rng = np.random.default_rng(6)
    s = sample_random_scm("linear-gaussian", 3, rng)
    with pytest.raises(InputError):
        generate(s, sample_mixing(2, rng), per_node_envs(rng, 3), 10, seed=0)
    with pytest.raises(InputError):
        generate(s, sample_mixing(3, rng), per_node_envs(rng, 3) * 2, 10, seed=0)
