import math
import os
import tempfile

import numpy as np
import pytest

import dipp

SMALL = """
[network]
hidden = [8, 8]

[pretrain]
steps = 30
batch = 32

[distill]
steps = 10
batch = 32

[align]
steps = 10
batch = 32
alpha_rew = 2.0

[eval]
samples = 200
"""


@pytest.fixture
def workdir():
    base = os.environ.get("DIPP_TEST_TMP")
    if base:
        os.makedirs(base, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=base) as d:
        yield d


def test_mixture_and_scores():
    mix = dipp.GaussianMixture.ring()
    assert mix.dim == 2 and mix.num_conditions == 3
    x = mix.sample([0, 1, 2, 0], seed=3)
    assert x.shape == (4, 2)
    s = dipp.analytic_score(mix, x, [0.5] * 4, [0, 1, 2, -1])
    assert s.shape == (4, 2) and np.all(np.isfinite(s))

    h = 1e-5
    p = [0.3, -1.2]
    fd = (mix.log_density([p[0] + h, p[1]], 0.5, 1) - mix.log_density([p[0] - h, p[1]], 0.5, 1)) / (2 * h)
    exact = dipp.analytic_score(mix, np.array([p]), [0.5], [1])[0, 0]
    assert fd == pytest.approx(exact, rel=1e-6, abs=1e-8)


def test_kl_and_times():
    assert dipp.gaussian_kl([0.0], 1.0, [1.0], 1.0) == pytest.approx(0.5)
    with pytest.raises(dipp.DomainError):
        dipp.gaussian_kl([0.0], 0.0, [0.0], 1.0)
    t = dipp.sample_times(1000, seed=1)
    assert len(t) == 1000 and min(t) >= 0.01 and max(t) <= 156.6155


def test_errors_share_a_base():
    assert issubclass(dipp.ConfigError, dipp.DippError)
    with pytest.raises(dipp.ConfigError):
        dipp.parse_config("[nope]\n")
    with pytest.raises(dipp.DimensionError):
        dipp.analytic_score(dipp.GaussianMixture.ring(), np.zeros(3), [1.0], [0])


def test_config_round_trip():
    c = dipp.parse_config(SMALL)
    assert c.align_steps == 10 and c.alpha_rew == 2.0
    assert dipp.parse_config(dipp.serialize_config(c)) == c
    d = dipp.default_config()
    d.alpha_cfg = 4.5
    assert dipp.parse_config(dipp.serialize_config(d)).alpha_cfg == 4.5


def test_verify_checks_pass():
    reports = dipp.run_all_checks(0)
    assert len(reports) == 5
    assert all(r.passed for r in reports), [r.detail for r in reports if not r.passed]


def test_small_pipeline(workdir):
    c = dipp.parse_config(SMALL)
    c.out = workdir
    c.seed = 2
    with pytest.raises(dipp.UsageError):
        dipp.run_distill(c)
    pre = dipp.run_pretrain_ref(c)
    assert os.path.exists(pre["artifacts"][0])
    dist = dipp.run_distill(c)
    assert "energy_distance" in dist["metrics"]
    al = dipp.run_align(c)
    assert math.isfinite(al["metrics"]["mean_reward"])

    gen = dipp.load_generator(os.path.join(workdir, "aligned.ckpt"))
    a = gen.sample([0, 1, 2], seed=4)
    b = gen.sample([0, 1, 2], seed=4)
    assert a.shape == (3, 2) and np.array_equal(a, b)
    m = dipp.eval_generator(gen, c, 200, 1)
    assert math.isfinite(m["energy_distance"]) and "mean_reward" in m
    ev = dipp.run_eval(c, os.path.join(workdir, "aligned.ckpt"), 200)
    assert ev["metrics"]["step"] == 10
    with pytest.raises(dipp.LoadError):
        dipp.load_generator(os.path.join(workdir, "reference.ckpt"))
