import json

import numpy as np
import pytest

from synaptoforge import io
from synaptoforge.core import CONSTRAINT_COEXPRESSION, ModelDims, init_genotype, map_params
from synaptoforge.sampler import choose_alpha, sample_agent


def test_genotype_round_trip(tmp_path, small_genotype):
    io.save_genotype(tmp_path / "g.json", small_genotype, {"env_id": "cartpole", "score": 12.5})
    back = io.load_genotype(tmp_path / "g.json")
    np.testing.assert_array_equal(back.flat, small_genotype.flat)
    assert back.dims == small_genotype.dims
    assert json.loads((tmp_path / "g.json").read_text())["env_id"] == "cartpole"


def test_constrained_round_trip(tmp_path):
    mask = np.eye(4, dtype=np.int64)
    mask[0, 2] = 1
    g = init_genotype(ModelDims((3, 5, 2), 4, 2), seed=2,
                      constraint_mode=CONSTRAINT_COEXPRESSION, coexpression_mask=mask, temperature=0.5)
    io.save_genotype(tmp_path / "g.json", g)
    back = io.load_genotype(tmp_path / "g.json")
    np.testing.assert_array_equal(back.coexpression_mask, mask)
    assert back.temperature == 0.5
    np.testing.assert_array_equal(map_params(back).O[0], map_params(g).O[0])


def test_agent_round_trip(tmp_path, small_genotype):
    f = map_params(small_genotype)
    agent = sample_agent(small_genotype, choose_alpha(f, 500.0), 11, f)
    io.save_agent(tmp_path / "a.json", agent, small_genotype)
    back, g = io.load_agent(tmp_path / "a.json")
    for x, y in zip(agent.weights, back.weights):
        np.testing.assert_array_equal(x, y)
    for x, y in zip(agent.counts, back.counts):
        np.testing.assert_array_equal(x, y)
    assert back.alpha == agent.alpha and back.seed == 11
    io.save_genotype(tmp_path / "g.json", small_genotype)
    with pytest.raises(ValueError, match="not a sampled agent"):
        io.load_agent(tmp_path / "g.json")


def test_float_text_is_exact():
    values = [0.1, 1 / 3, 1e-300, 2.0, -5e300, np.float64(7.25)]
    assert json.loads(io.dumps(values)) == [float(v) for v in values]
    assert io.dumps([2.0]) == "[2.0]"
    with pytest.raises(ValueError):
        io.dumps([float("nan")])


def test_bad_documents(tmp_path, small_genotype):
    doc = io.genotype_to_dict(small_genotype)
    doc["format_version"] = 99
    with pytest.raises(ValueError, match="format"):
        io.genotype_from_dict(doc)
    doc = json.loads(io.dumps(io.genotype_to_dict(small_genotype)))
    doc["matrices"]["Q_hat"][0] = doc["matrices"]["Q_hat"][0][:-1]
    with pytest.raises(ValueError, match="Q_hat"):
        io.genotype_from_dict(doc)
