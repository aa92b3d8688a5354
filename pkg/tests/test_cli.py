from __future__ import annotations

import pytest

from homog2d import __version__
from homog2d.cli.config_file import validate_config
from homog2d.cli.main import build_parser, main, resolve_cache_dir
from homog2d.core.config import Settings


def test_effective_command(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('preset = "laminate"\ntorus_N = 64\n', encoding="utf-8")
    out = tmp_path / "out"
    assert main(["effective", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "effective.csv").is_file()
    assert '"command": "effective"' in (out / "config.effective.json").read_text()


def test_missing_config_exits_with_config_code(tmp_path):
    assert main(["cell", "--config", str(tmp_path / "absent.toml")]) == 2


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["homogenize", "--config", "run.toml"])


def test_version(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--version"])
    assert __version__ in capsys.readouterr().out


def test_cache_precedence(tmp_path):
    config = validate_config({"preset": "identity", "cache_dir": str(tmp_path / "from-config")})
    settings = Settings(HOMOG2D_CACHE=tmp_path / "from-env")
    assert resolve_cache_dir(tmp_path / "from-cli", settings, config) == tmp_path / "from-cli"
    assert resolve_cache_dir(None, settings, config) == tmp_path / "from-env"
    assert resolve_cache_dir(None, Settings(HOMOG2D_CACHE=None), config) == tmp_path / "from-config"
