import json
import math

import pytest
from pydantic import ValidationError

from core.config import Config, SystemParams, dipolar_factor, load_params
from core.errors import ConfigError


def test_defaults(params):
    assert params.d_axial == 0.275
    assert params.j_eff == 0.0175
    assert params.theta == pytest.approx(math.pi / 2)
    assert params.rabi_mhz == pytest.approx(30.0)
    assert params.fe8_start_m == -10
    assert params.budget_convention == "angular"


def test_j0_derives_j_eff():
    p = SystemParams(j0_kelvin=0.01, theta_rad=0.0)
    assert p.j_eff == pytest.approx(-0.02)
    assert p.j0_resolved == 0.01
    assert SystemParams().j0_resolved == pytest.approx(0.0175)
    assert dipolar_factor(math.pi / 2) == pytest.approx(1.0)


def test_inconsistent_coupling_is_rejected():
    with pytest.raises(ValidationError):
        SystemParams(j0_kelvin=0.01, j_eff_kelvin=0.5)
    with pytest.raises(ValidationError):
        SystemParams(theta_rad=math.acos(1 / math.sqrt(3)))
    with pytest.raises(ValidationError):
        SystemParams(d_kelvin=-0.1)
    with pytest.raises(ValidationError):
        SystemParams(colour="red")


def test_snapshot_uses_aliases(params):
    snap = params.snapshot()
    assert snap["j_eff_kelvin"] == 0.0175
    assert snap["j0_kelvin"] == pytest.approx(0.0175)
    assert "d_kelvin" in snap and "d_axial" not in snap


def test_load_params_precedence(tmp_path):
    path = tmp_path / "params.json"
    path.write_text(json.dumps({"j_eff_kelvin": 0.02, "d_kelvin": 0.3}))
    p = load_params(str(path), {"j_eff_kelvin": 0.01, "d_kelvin": None})
    assert p.j_eff == 0.01
    assert p.d_axial == 0.3
    assert load_params().j_eff == 0.0175


def test_load_params_from_configured_path(monkeypatch, tmp_path):
    path = tmp_path / "env_params.json"
    path.write_text(json.dumps({"tunnel_gap_kelvin": 2e-6}))
    monkeypatch.setattr(Config, "PARAMS_PATH", str(path))
    assert load_params().tunnel_gap == 2e-6


@pytest.mark.parametrize("content", ["{not json", "[1, 2]", '{"colour": 1}', '{"linewidth_mhz": -1}'])
def test_load_params_errors(tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_params(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_params(str(tmp_path / "absent.json"))


def test_shipped_parameter_file(programs_dir):
    p = load_params(str(programs_dir.parent / "data" / "params.json"))
    default = SystemParams()
    assert p.rabi == pytest.approx(default.rabi)
    assert p.model_dump(exclude={"rabi"}) == default.model_dump(exclude={"rabi"})
