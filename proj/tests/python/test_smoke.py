import math

import numpy as np
import pytest

import safetune as st


def test_knob_space_round_trip():
    space = st.KnobSpace.from_json(
        '{"knobs":[{"name":"a","kind":"continuous","lower":0,"upper":10,"default":2.5},'
        '{"name":"b","kind":"enum","levels":["x","y","z"],"default":"z"}]}'
    )
    assert len(space) == 2
    assert space.names == ["a", "b"]
    default = space.default_config()
    assert default == {"a": 2.5, "b": "z"}
    p = space.normalize(default)
    np.testing.assert_allclose(p, [0.25, 1.0])
    assert space.denormalize(p) == default
    with pytest.raises(ValueError):
        space.normalize({"a": 11.0, "b": "x"})


def test_embedding_is_unit_and_order_free():
    v = st.embed_query("SELECT a FROM t WHERE b = 1")
    w = st.embed_query("1 b WHERE t FROM a SELECT")
    assert v.shape == (st.EMBEDDING_DIM,)
    assert math.isclose(float(np.linalg.norm(v)), 1.0, rel_tol=1e-12)
    np.testing.assert_allclose(v, w, rtol=0, atol=1e-15)
    assert st.tokenize_sql("Select x,y") == ["select", "x", "y"]


def test_gp_interpolates_noise_free_data():
    rng = np.random.default_rng(0)
    x = rng.random((12, 2))
    c = rng.random((12, st.CONTEXT_DIM))
    y = 10.0 * x[:, 0] + 3.0
    g = st.GpModel.fit(x, c, y)
    mean, sd = g.posterior(x[3], c[3])
    assert abs(mean - y[3]) < 0.5
    assert sd >= 0.0
    assert g.lengthscales.shape == (2,)


def test_tuner_loop_stays_safe_on_generated_env():
    env = st.SyntheticEnv.generate(knobs=3, seed=2)
    contexts = st.generate_contexts("sine", 0.1, 41, 2)
    cfg = st.TunerConfig()
    cfg.seed = 2
    tuner = st.Tuner(env.space, cfg, st.default_rules_json(), env.metrics)
    tau0 = env.default_performance(contexts[0])
    tuner.bootstrap(tau0, contexts[0], tau0)
    for t in range(1, 41):
        c = contexts[t]
        tau = env.default_performance(c)
        rec = tuner.step(c, tau)
        assert set(rec["config"]) == set(env.space.names)
        perf, failed = env.evaluate(rec["config"], c, t)
        tuner.update(c, tau, perf, failed)
    m = tuner.metrics()
    assert m["iterations"] == 40
    assert m["failures"] == 0
    assert tuner.observations == 41


def test_run_episode_is_deterministic():
    env = st.SyntheticEnv.generate(knobs=3, seed=4)
    contexts = st.generate_contexts("alternating", 0.1, 31, 4)
    a = st.run_episode(env, contexts, iterations=30)
    b = st.run_episode(env, contexts, iterations=30)
    assert a["csv"] == b["csv"]
    assert a["iterations"] == 30
    assert len(a["series"]) == 30


def test_conflicting_ablations_are_rejected():
    cfg = st.TunerConfig()
    with pytest.raises(ValueError):
        cfg.apply_ablations({"no-safe", "no-black"})
    cfg.apply_ablations({"no-safe"})
    assert not cfg.use_safe
