import json

import numpy as np
import pytest

from manifold_wgan.config import ConfigError, load_experiment, parse_experiment
from manifold_wgan.gan import TrainingLog
from manifold_wgan.geometry import GeometryTag
from manifold_wgan.report import curves_csv, summarize, write_report


def doc(**kw):
    base = {"target": {"preset": "circle"}, "output_dir": "out"}
    base.update(kw)
    return base


def test_minimal_config_uses_defaults():
    exp = parse_experiment(doc())
    assert exp.trainer.geometry is GeometryTag.HSV
    assert exp.trainer.n_critic == 5 and exp.trainer.gp_lambda == 10.0 and exp.trainer.lr == 2e-4
    assert exp.n_train == 2048 and str(exp.output_dir) == "out"


def test_custom_target_components():
    exp = parse_experiment(doc(target={"tag": "sphere", "components": [{"mean": [0, 0, 1], "kappa": 30}],
                                       "dims": [2, 2]}, tag="sphere", iterations=10))
    assert exp.target.tag is GeometryTag.SPHERE and exp.target.dims == (2, 2)
    assert exp.trainer.iterations == 10


@pytest.mark.parametrize("bad", [
    {"unknown_key": 1},
    {"lr": 0},
    {"n_critic": 0},
    {"gp_lambda": -1},
    {"eval_method": "greedy"},
    {"target": {"preset": "circle", "tag": "hsv", "components": [{"hue": 0}]}},
    {"target": {"tag": "hsv"}},
    {"target": {"preset": "nope"}},
    {"tag": "sphere"},
])
def test_schema_violations(bad):
    with pytest.raises(ConfigError):
        parse_experiment(doc(**bad))


def test_missing_required():
    with pytest.raises(ConfigError, match="output_dir"):
        parse_experiment({"target": {"preset": "vmf"}})


def test_load_experiment_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_experiment(p)
    p.write_text(json.dumps(doc()))
    assert load_experiment(p).trainer.tag == "hsv"


def make_log():
    rows = []
    for it in range(0, 31):
        rows.append({"iter": it, "critic_loss": None if it == 0 else -1.0 / (it + 1), "gen_loss": 0.1,
                     "gp_term": 0.01, "w1_eval": (1.0 / (it + 1) if it % 10 == 0 else None), "lr": 1e-4})
    return TrainingLog(rows)


def test_summary():
    s = summarize(make_log())
    assert s.evaluations == 4 and s.first_w1 == 1.0 and s.final_w1 == pytest.approx(1 / 31)
    assert s.spearman == pytest.approx(-1.0) and s.ratio == pytest.approx(1 / 31)


def test_summary_empty_log():
    s = summarize(TrainingLog())
    assert s.evaluations == 0 and s.ratio is None and s.spearman is None


def test_curves_csv():
    lines = curves_csv(make_log()).splitlines()
    assert lines[0] == "iter,neg_critic_cost,w1_eval"
    assert lines[1] == "0,,1.0"
    assert lines[2] == "1,0.5,"


def test_write_report_deterministic(tmp_path):
    a = write_report(make_log(), tmp_path / "a")
    b = write_report(make_log(), tmp_path / "b")
    assert [p.name for p in a] == ["curves.csv", "curves.svg"]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    assert b"<svg" in a[1].read_bytes()


def test_write_report_png(tmp_path):
    paths = write_report(make_log(), tmp_path, formats=("png",))
    assert paths[1].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert np.isfinite(summarize(make_log()).spearman)
