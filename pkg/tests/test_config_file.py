from __future__ import annotations

import pytest

from homog2d.cli.config_file import parse_config
from homog2d.core.errors import CommensurabilityError, ConfigError

INLINE = """
command = "cell"
eps = [0.25]

[coefficients]
name = "inline-laplace"
m = 1
lambda = 1.0
mu = 1.0
A.1.1.1.1.constant = 1.0
A."2.2.1.1" = 1.0
"""


def write(tmp_path, text: str):
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_config_defaults(tmp_path):
    config = parse_config(write(tmp_path, 'preset = "identity"\n'))
    assert config.command == "all"
    assert config.eps == [0.25, 0.125, 0.0625, 0.03125]
    assert config.torus_N == 256
    assert config.lambda_policy is None


def test_fraction_eps_sorted_descending(tmp_path):
    config = parse_config(write(tmp_path, 'preset = "laminate"\neps = ["1/16", 0.25, "1/8"]\n'))
    assert config.eps == [0.25, 0.125, 0.0625]


def test_non_dyadic_eps_is_not_commensurate(tmp_path):
    path = write(tmp_path, 'preset = "identity"\neps = ["1/3", "1/6", "1/12"]\n')
    with pytest.raises(CommensurabilityError) as excinfo:
        parse_config(path)
    assert excinfo.value.exit_code == 2
    assert excinfo.value.details["key"] == "eps"


def test_duplicate_key_reports_line(tmp_path):
    path = write(tmp_path, 'preset = "identity"\npreset = "laminate"\n')
    with pytest.raises(ConfigError) as excinfo:
        parse_config(path)
    assert excinfo.value.details["line"] == 2


def test_unknown_key(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(write(tmp_path, 'preset = "identity"\nbogus = 1\n'))
    assert excinfo.value.details["key"] == "bogus"


def test_unknown_preset(tmp_path):
    with pytest.raises(ConfigError, match="unknown preset"):
        parse_config(write(tmp_path, 'preset = "marble"\n'))


def test_preset_and_inline_are_exclusive(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, 'preset = "identity"\n' + INLINE))


def test_inline_coefficients(tmp_path):
    config = parse_config(write(tmp_path, INLINE))
    coefficients = config.coefficients
    assert coefficients.name == "inline-laplace"
    assert set(coefficients.A) == {"1.1.1.1", "2.2.1.1"}
    assert coefficients.A["2.2.1.1"].constant == 1.0
    assert coefficients.lam == 1.0


def test_rate_study_needs_three_eps(tmp_path):
    with pytest.raises(ConfigError, match="three eps"):
        parse_config(write(tmp_path, 'preset = "identity"\ncommand = "rates"\neps = [0.25, 0.125]\n'))


def test_overrides_replace_file_values(tmp_path):
    path = write(tmp_path, 'preset = "identity"\nthreads = 2\n')
    config = parse_config(path, {"command": "effective", "threads": None, "output_dir": tmp_path / "out"})
    assert config.command == "effective"
    assert config.threads == 2
    assert config.output_dir == tmp_path / "out"


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "absent.toml")
