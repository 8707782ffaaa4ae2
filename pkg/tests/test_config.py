import json

import numpy as np
import pytest

from dissim.cases import consensus_network, oscillator_ring
from dissim.config import (load_config, parse_config, system_from_dict,
                           system_to_dict)
from dissim.exceptions import ConfigError
from dissim.hybrid_model import Nonlinearity
from dissim.network import compose
from dissim.workflows import load_example, resolve_network


def minimal_system(**over):
    d = {"A": [[0.0, 1.0], [-1.0, 0.0]], "B": [[0.0], [1.0]],
         "C1": [[1.0, 0.0]]}
    d.update(over)
    return d


def write(tmp_path, doc, name="p.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_bundled_consensus_builds_nine_state_network():
    cfg = load_example("example1")
    net, _ = resolve_network(cfg, "consensus")
    assert len(net.subsystems) == 3
    assert compose(net.subsystems, net.M).n == 9
    s = net.subsystems[0]
    np.testing.assert_allclose(s.G, 0.4)
    np.testing.assert_allclose(s.R, 0.2)
    assert s.lam.tolist() == [1.0]
    assert net.certs[0].kappa_hat == pytest.approx(19.4)


@pytest.mark.parametrize("name,net_name,factory",
                         [("example1", "consensus", consensus_network),
                          ("example2", "ring", oscillator_ring)])
def test_bundled_files_match_programmatic_cases(name, net_name, factory):
    net, _ = resolve_network(load_example(name), net_name)
    case = factory()
    np.testing.assert_allclose(net.Mhat, case.net.Mhat, atol=1e-12)
    np.testing.assert_allclose(net.Qtilde, case.net.Qtilde)
    for a, b in zip(net.abstractions, case.net.abstractions):
        for blk in ("A", "B", "C1", "C2", "D", "E", "F"):
            np.testing.assert_allclose(getattr(a, blk), getattr(b, blk),
                                       atol=1e-12)
    for c, d in zip(net.certs, case.net.certs):
        for f in ("Mhat", "K", "X", "P", "Q", "H", "What", "L2", "Rtilde"):
            np.testing.assert_allclose(getattr(c, f), getattr(d, f),
                                       atol=1e-12)


def test_empty_project_is_valid():
    cfg = parse_config({"schema_version": 1, "systems": {}})
    assert cfg.systems == {} and cfg.networks == {}


def test_bad_drift_shape_names_block(tmp_path):
    doc = {"schema_version": 1,
           "systems": {"s": minimal_system(A=[[0, 1, 2], [3, 4, 5]])}}
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, doc))
    assert "A" in str(info.value)
    assert info.value.path.startswith("/systems/s")


def test_dimension_mismatch_prints_shapes(tmp_path):
    doc = {"schema_version": 1,
           "systems": {"s": minimal_system(B=[[0.0], [1.0], [2.0]])}}
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, doc))
    assert info.value.path == "/systems/s/B"
    assert "3" in str(info.value) and "2" in str(info.value)


def test_json_syntax_error_has_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema_version": 1,\n "systems": {,}}')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert "line 2" in str(info.value) and "column" in str(info.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/project.json")


def test_dangling_and_unknown_names():
    base = {"schema_version": 1, "systems": {"s": minimal_system()}}
    with pytest.raises(ConfigError) as info:
        parse_config({**base, "networks": {"n": {
            "subsystems": ["s", "ghost"], "certificates": [], "M": []}}})
    assert info.value.path == "/networks/n/subsystems/1"
    with pytest.raises(ConfigError) as info:
        parse_config({**base, "colour": 1})
    assert info.value.path == "/colour"
    with pytest.raises(ConfigError) as info:
        parse_config({**base, "systems": {"s": minimal_system(Z=[[1.0]])}})
    assert info.value.path == "/systems/s/Z"


def test_schema_version_required():
    with pytest.raises(ConfigError) as info:
        parse_config({"systems": {}})
    assert info.value.path == "/schema_version"


def test_run_settings_are_validated():
    with pytest.raises(ConfigError) as info:
        parse_config({"schema_version": 1, "run": {"dt": -1.0}})
    assert info.value.path == "/run/dt"
    cfg = parse_config({"schema_version": 1, "run": {"trials": 7}})
    assert cfg.run["trials"] == 7 and cfg.run["dt"] == 1e-3


def test_system_round_trip():
    case = consensus_network()
    s = case.net.subsystems[0]
    again = system_from_dict(json.loads(json.dumps(system_to_dict(s))))
    for blk in ("A", "B", "C1", "C2", "D", "E", "F", "G", "R", "lam"):
        np.testing.assert_array_equal(getattr(again, blk), getattr(s, blk))
    np.testing.assert_array_equal(again.phi.multiplier, s.phi.multiplier)
    k = np.linspace(-2, 2, 5)[:, None]
    np.testing.assert_array_equal(again.phi(0.0, k), s.phi(0.0, k))


def test_custom_nonlinearity_is_not_serializable():
    phi = Nonlinearity.custom(lambda t, k: k ** 3, 1, np.zeros((2, 2)))
    s = consensus_network().net.subsystems[0].replace(phi=phi)
    with pytest.raises(ValueError):
        system_to_dict(s)
