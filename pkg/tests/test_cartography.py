import json
import math

import pytest

from hypscalar.cartography import (RunConfig, ThresholdEntry, ThresholdMap, Verdict, WindowError, Axis,
                                   exists_detector, load_map, payload_bytes, save_map, sweep, threshold_bisect)
from hypscalar.closed_forms import ProblemParams, necessary_lower_bound

SWEEP_CFG = {"dimension": 3, "p_range": [2.0], "q_range": [4.0], "lambda_range": [0.95, 1.0],
             "side": "lower", "methods": ["shooting"], "bisect_width": 0.01}


@pytest.fixture(scope="module")
def serial_map():
    return sweep(RunConfig.from_mapping(SWEEP_CFG))


# ----------------------------------------------------------------------------- detector


def test_detector_below_necessary_bound_is_notfound():
    # lambda = 0 lies below lambda_1 - lambda_pq for (2, 4): no positive H^1 solution can exist
    assert 0.0 < necessary_lower_bound(3, 2.0, 4.0)
    v, ev = exists_detector(ProblemParams(3, 2.0, 4.0, 0.0))
    assert v is Verdict.NotFound
    assert ev.method is None and ev.trace


def test_detector_negative_lambda_notfound():
    v, _ = exists_detector(ProblemParams(3, 2.0, 4.0, -0.5))
    assert v is Verdict.NotFound


def test_detector_sublinear_found():
    v, ev = exists_detector(ProblemParams(3, 3.0, 0.5, -10.0))
    assert v is Verdict.Found
    assert ev.residual < 1e-7 and ev.height > 0


def test_detector_inside_window_found():
    v, ev = exists_detector(ProblemParams(3, 2.0, 4.0, 0.98), RunConfig(methods=("shooting",)))
    assert v is Verdict.Found
    assert ev.method == "shooting"


# ----------------------------------------------------------------------------- configuration


def test_config_nested_sections_and_aliases():
    cfg = RunConfig.from_mapping({"N": 4, "p": 2.0, "q": 3.0, "lambda": 0.5,
                                  "grid": {"r_max": 12.0, "nodes": 400},
                                  "solver": {"method": "shooting", "tol": 1e-8},
                                  "sweep": {"lambda_range": [0.0, 1.0], "parallelism": 2},
                                  "nehari": {"max_iter": 10}})
    assert cfg.dimension == 4 and cfg.lam == 0.5
    assert cfg.methods == ("shooting",)
    assert cfg.r_max == 12.0 and cfg.nodes == 400
    assert cfg.lambda_range == (0.0, 1.0) and cfg.parallelism == 2
    assert cfg.options["nehari"] == {"max_iter": 10}
    assert cfg.params() == ProblemParams(4, 2.0, 3.0, 0.5)
    assert cfg.grid_for(cfg.params()).M == 400


def test_config_linspace_range():
    cfg = RunConfig.from_mapping({"p_range": {"start": 2.0, "stop": 3.0, "num": 5}})
    assert cfg.p_range == [2.0, 2.25, 2.5, 2.75, 3.0]


@pytest.mark.parametrize("bad", [{"nonsense": 1}, {"solver": {"bogus": 1}}, {"methods": ["magic"]},
                                 {"lambda_range": [1.0, 0.0]}, {"dr": 0.0}, {"side": "middle"},
                                 {"parallelism": 0}])
def test_config_rejects(bad):
    with pytest.raises(ValueError):
        RunConfig.from_mapping(bad)


def test_config_from_file_yaml_and_json(tmp_path):
    yml = tmp_path / "c.yaml"
    yml.write_text("dimension: 5\np: 2.0\nlambda: 1.0\nsolver:\n  tol: 1.0e-8\n")
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"dimension": 5, "p": 2.0, "lambda": 1.0, "solver": {"tol": 1e-8}}))
    assert RunConfig.from_file(yml) == RunConfig.from_file(js)


def test_config_round_trip_through_dict():
    cfg = RunConfig.from_mapping(SWEEP_CFG)
    assert RunConfig(**{**cfg.to_dict()}) == cfg


# ----------------------------------------------------------------------------- bisection and sweeps


def test_uniform_window_raises():
    cfg = RunConfig(methods=("shooting",), scan_step=0.5)
    with pytest.raises(WindowError, match="NotFound"):
        threshold_bisect(3, 2.0, 4.0, (-1.0, 0.0), cfg, "lower")


def test_sweep_boundary(serial_map):
    (e,) = serial_map.entries
    assert serial_map.axis is Axis.LambdaAtFixedPQ
    assert e.numeric_boundary == pytest.approx(0.965625, abs=1e-12)
    assert e.numeric_boundary > necessary_lower_bound(3, 2.0, 4.0)
    assert e.gap == pytest.approx(e.numeric_boundary - e.theory_boundary)
    assert serial_map.check_monotone() == []


def test_sweep_independent_of_parallelism(serial_map, tmp_path):
    par = sweep(RunConfig.from_mapping({**SWEEP_CFG, "parallelism": 2}))
    assert par.entries[0].numeric_boundary == serial_map.entries[0].numeric_boundary
    a = save_map(serial_map, tmp_path / "a", started=0.0)
    b = save_map(par, tmp_path / "b", started=1e9)
    # configs differ only in the parallelism field
    da, db = json.loads(payload_bytes(a)), json.loads(payload_bytes(b))
    da["payload"]["config"].pop("parallelism")
    db["payload"]["config"].pop("parallelism")
    assert da == db


def test_sweep_repeat_is_byte_identical(serial_map, tmp_path):
    again = sweep(RunConfig.from_mapping(SWEEP_CFG))
    a = save_map(serial_map, tmp_path / "a", started=0.0)
    b = save_map(again, tmp_path / "b", started=5.0)
    assert payload_bytes(a) == payload_bytes(b)
    assert a.read_bytes() != b.read_bytes()  # sidecar timestamps differ


def test_save_load_round_trip(serial_map, tmp_path):
    path = save_map(serial_map, tmp_path)
    assert load_map(path) == serial_map
    assert (tmp_path / "threshold_map.csv").exists()


def test_round_trip_with_infinite_theory_boundary(tmp_path):
    e = ThresholdEntry(2.0, 0.5, 3, (-1.0, 1.0), "lower", None, -math.inf, None, [], "note")
    tmap = ThresholdMap(Axis.LambdaAtFixedPQ, [e], {"x": 1})
    back = load_map(save_map(tmap, tmp_path))
    assert back == tmap
    assert back.entries[0].theory_boundary == -math.inf


def test_check_monotone_flags_sandwich():
    ev = [{"lambda": x, "verdict": v, "method": None, "residual": None}
          for x, v in [(0.0, "Found"), (0.5, "NotFound"), (1.0, "Found")]]
    e = ThresholdEntry(2.0, 4.0, 3, (0.0, 1.0), "lower", 0.5, -1.0, 1.5, ev)
    assert ThresholdMap(Axis.LambdaAtFixedPQ, [e], {}).check_monotone() == [(2.0, 4.0, 0.5)]
