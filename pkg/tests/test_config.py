"""
Tests for the key-value configuration format
"""

import os

import pytest

from experiments.config import emit_config, load_config, parse_config, read_keys, system_with
from experiments.models import ConfigError, ConfigParseError, ConfigValidationError


def test_parse_reference_config(reference_config):
    system, plan = parse_config(reference_config)

    assert system.chain.L == 5
    assert system.chain.J_s == 1.0
    assert system.chain.U == 0.0
    assert system.epsilon == 0.4
    assert system.left.M == 200
    assert system.left.n_bar == 1.0
    assert system.right.n_bar == 0.1
    assert system.right.side == "right"
    assert plan.method == "exact"
    assert plan.seed == 7
    assert plan.langevin.n_traj == 200
    assert plan.grid == {}


def test_invalid_value_names_key_and_line(reference_config):
    text = reference_config.replace("chain.L = 5", "chain.L = 0")
    with pytest.raises(ConfigValidationError) as exc_info:
        parse_config(text)

    error = exc_info.value
    assert error.key == "chain.L"
    assert error.line == 3
    assert ">= 2" in error.reason
    assert str(error).startswith("line 3: chain.L")


def test_duplicate_key_cites_both_lines(reference_config):
    with pytest.raises(ConfigParseError, match="lines 3 and 19"):
        parse_config(reference_config + "chain.L = 6\n")


def test_unknown_key_is_rejected(reference_config):
    with pytest.raises(ConfigValidationError) as exc_info:
        parse_config(reference_config + "chain.width = 2\n")
    assert exc_info.value.key == "chain.width"
    assert exc_info.value.line == 19


@pytest.mark.parametrize("line,column,reason", [
    ("chain.L 5", 1, "key = value"),
    ("   bad line", 4, "key = value"),
    ("2chain = 1", 1, "invalid key"),
    ("epsilon =", 10, "missing value"),
])
def test_malformed_lines(line, column, reason):
    with pytest.raises(ConfigParseError) as exc_info:
        read_keys(f"# header\n{line}\n")

    assert exc_info.value.line == 2
    assert exc_info.value.column == column
    assert reason in exc_info.value.reason


def test_comments_and_blank_lines_are_ignored():
    entries = read_keys("\n  # only a comment\nepsilon = 0.3  # trailing\n\n")
    assert list(entries) == ["epsilon"]
    assert entries["epsilon"].value == "0.3"
    assert entries["epsilon"].line == 3


def test_emitted_config_parses_back(reference_config):
    text = reference_config + "grid.beta = 0.1, 1, 10\nlangevin.vacuum_half = true\nsweep.g = 0, 0.5\n"
    system, plan = parse_config(text.replace("method = exact", "method = langevin"))

    assert parse_config(emit_config(system, plan)) == (system, plan)


def test_overrides_win(reference_config):
    system, plan = parse_config(reference_config, ["epsilon=0.8", "method = markov", "left.gamma=2"])

    assert system.epsilon == 0.8
    assert system.left.gamma == 2.0
    assert plan.method == "markov"


def test_invalid_override_has_no_line(reference_config):
    with pytest.raises(ConfigValidationError) as exc_info:
        parse_config(reference_config, ["epsilon=-1"])
    assert exc_info.value.key == "epsilon"
    assert exc_info.value.line is None


def test_grid_ranges(reference_config):
    text = reference_config + "grid.gamma = logspace(-2, 2, 5)\ngrid.chain.delta = linspace(-1, 1, 3)\n"
    _, plan = parse_config(text)

    assert plan.grid["gamma"] == pytest.approx([0.01, 0.1, 1.0, 10.0, 100.0])
    assert plan.grid["chain.delta"] == pytest.approx([-1.0, 0.0, 1.0])


def test_bad_range_and_axis(reference_config):
    with pytest.raises(ConfigParseError, match="linspace"):
        parse_config(reference_config + "grid.beta = linspace(a, 1, 3)\n")
    with pytest.raises(ConfigValidationError, match="unknown grid axis"):
        parse_config(reference_config + "grid.colour = 1, 2\n")


def test_interaction_given_twice(reference_config):
    text = reference_config.replace("method = exact", "method = langevin")
    with pytest.raises(ConfigValidationError, match="not both"):
        parse_config(text + "chain.U = 0.1\nchain.g = 0.2\n")


def test_g_sets_interaction(reference_config):
    text = reference_config.replace("method = exact", "method = langevin")
    system, _ = parse_config(text + "chain.g = 0.2\n", ["left.nbar=2"])
    assert system.chain.U == pytest.approx(0.1)


def test_interaction_requires_langevin(reference_config):
    with pytest.raises(ConfigValidationError) as exc_info:
        parse_config(reference_config + "chain.U = 0.1\n")
    assert exc_info.value.key == "method"
    assert exc_info.value.line == 17
    assert "langevin" in exc_info.value.reason

    with pytest.raises(ConfigValidationError, match="langevin"):
        parse_config(reference_config + "grid.chain.g = 0, 0.1\n")


def test_system_with_aliases(reference_config):
    system, _ = parse_config(reference_config)
    changed = system_with(system, {"gamma": 2.0, "chain.g": 0.5, "right.nbar": 0.3})

    assert changed.left.gamma == changed.right.gamma == 2.0
    assert changed.chain.U == pytest.approx(0.5)
    assert changed.right.n_bar == 0.3
    assert system.left.gamma == 0.1

    with pytest.raises(ValueError, match="unknown grid axis"):
        system_with(system, {"colour": 1.0})
    with pytest.raises(ValueError, match="chain.L"):
        system_with(system, {"chain.L": 1})


def test_ring_size_auto(reference_config):
    """With ring_size = auto the given M is a floor raised to ring_size_for(gamma)"""
    fixed, _ = parse_config(reference_config, ["left.gamma=0.01"])
    assert fixed.left.M == 200

    system, plan = parse_config(reference_config, ["left.gamma=0.01", "ring_size=auto"])
    assert plan.ring_size == "auto"
    assert system.left.M == 1257
    assert system.right.M == 200
    assert parse_config(emit_config(system, plan)) == (system, plan)

    with pytest.raises(ConfigValidationError, match="ring_size"):
        parse_config(reference_config, ["ring_size=large"])


def test_load_config(tmp_path, reference_config):
    path = os.path.join(tmp_path, "reference.cfg")
    with open(path, "w") as f:
        f.write(reference_config)

    system, plan = load_config(path, ["seed=3"])
    assert system.chain.L == 5
    assert plan.seed == 3

    with pytest.raises(ConfigError, match="Cannot read"):
        load_config(os.path.join(tmp_path, "missing.cfg"))
