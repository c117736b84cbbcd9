import csv
import json

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from arraycavity import cli
from arraycavity.config import ExperimentConfig, load_config
from arraycavity.errors import NumericalFailure

BASE = {
    "geometry": {"a": 0.47, "N": 6, "L": 1.5, "w0": 1.2},
    "targets": [{"position": [0, 0, 0], "gamma_a": 1.0}],
}

SECTIONS = {
    "geometry": {"a": 0.47, "N": 6, "L": 1.5, "w0": 1.2},
    "motion": {"regime": "fast", "sigma": 0.01},
    "sweep": {"variable": "w0", "values": [1.0]},
    "grid": {"start": -1.0, "stop": 1.0, "num": 5},
    "beam": {"w0": 1.2},
    "dynamics": {"protocol": "single"},
    "output": {"directory": "x"},
}


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data) if name.endswith(".yaml") else json.dumps(data))
    return p


def _run(tmp_path, command, data, *extra, out="out"):
    cfg = _write(tmp_path, data)
    code = cli.main([command, "--config", str(cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def _header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def _read(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


class TestConfig:
    def test_defaults(self, tmp_path):
        cfg = load_config(_write(tmp_path, {"geometry": {"N": 4}}))
        assert cfg.geometry.a == 0.47 and cfg.geometry.L == 1.5 and cfg.geometry.flat
        assert cfg.output.directory == "out"

    def test_json_and_yaml_agree(self, tmp_path):
        a = load_config(_write(tmp_path, BASE, "c.yaml"))
        b = load_config(_write(tmp_path, BASE, "c.json"))
        assert a == b

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.yaml"
        p.write_text("")
        assert load_config(p) == ExperimentConfig()

    @pytest.mark.parametrize("bad", [
        {"geometry": {"N": 0}}, {"geometry": {"N": 4, "a": -1}},
        {"geometry": {"N": 4, "w0": 2, "flat": True}},
        {"targets": [{"position": [0, 0]}]}, {"motion": {"axes": "xw"}},
        {"motion": {"regime": "slow"}}, {"sweep": {"variable": "T", "values": [1]}}])
    def test_invalid_values(self, bad):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(bad)

    @given(st.sampled_from(sorted(SECTIONS) + ["top"]),
           st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
    def test_unknown_key_always_rejected(self, section, key):
        data = {k: dict(v) for k, v in SECTIONS.items()}
        target = data if section == "top" else data[section]
        if key in target or (section == "top" and key == "targets"):
            return
        target[key] = 1
        with pytest.raises(ValidationError, match=key):
            ExperimentConfig.model_validate(data)


class TestExitCodes:
    def test_help(self):
        assert cli.main(["--help"]) == 0

    def test_unknown_command(self, tmp_path):
        assert cli.main(["plot", "--config", str(_write(tmp_path, BASE))]) == 2

    def test_missing_file(self, tmp_path):
        assert cli.main(["spectrum", "--config", str(tmp_path / "nope.yaml")]) == 2

    @settings(max_examples=10)
    @given(st.text("abcdefghijklmnopqrstuvwxyz", min_size=3, max_size=8))
    def test_unknown_key_fails_before_running(self, tmp_path_factory, key):
        tmp = tmp_path_factory.mktemp("fuzz")
        data = {"geometry": dict(BASE["geometry"], **{key + "_x": 1}), "targets": BASE["targets"]}
        code, out = _run(tmp, "spectrum", data)
        assert code == 2 and not (out / "spectrum.csv").exists()

    def test_missing_section(self, tmp_path, capsys):
        code, _ = _run(tmp_path, "spectrum", {"geometry": BASE["geometry"]})
        assert code == 2 and "target" in capsys.readouterr().err

    def test_negative_seed(self, tmp_path):
        assert _run(tmp_path, "mirror", BASE, "--seed", "-1")[0] == 2

    def test_numerical_failure(self, tmp_path, monkeypatch):
        def broken(cfg, out):
            raise NumericalFailure("singular")
        monkeypatch.setitem(cli.COMMANDS, "mirror", broken)
        assert _run(tmp_path, "mirror", BASE)[0] == 3


class TestCommands:
    def test_spectrum(self, tmp_path):
        code, out = _run(tmp_path, "spectrum", BASE)
        assert code == 0
        assert _header(out / "spectrum.csv") == ["omega", "re_sigma", "im_sigma", "A", "A_subtracted"]
        assert _header(out / "modes.csv") == ["re_lambda", "im_lambda", "re_g2", "im_g2", "g2_over_kappa"]
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "spectrum" and man["config"]["geometry"]["N"] == 6
        assert set(man["versions"]) >= {"arraycavity", "numpy", "scipy", "python"}

    def test_spectrum_without_array(self, tmp_path):
        code, out = _run(tmp_path, "spectrum", {"targets": [{"position": [0, 0, 0], "gamma_a": 0.7}]})
        assert code == 0
        np.testing.assert_allclose(_read(out / "spectrum.csv")["A"], 0.7, rtol=1e-12)

    def test_flat_mirrors_split_modes(self, tmp_path):
        data = {"geometry": {"N": 15, "flat": True}, "targets": BASE["targets"]}
        code, out = _run(tmp_path, "spectrum", data)
        assert code == 0
        assert json.loads((out / "manifest.json").read_text())["summary"]["splitting"] > 0.01

    def test_cavity_params(self, tmp_path):
        data = dict(BASE, sweep={"variable": "w0", "values": [1.0, 1.2]})
        code, out = _run(tmp_path, "cavity-params", data)
        assert code == 0
        rows = _read(out / "params.csv")
        assert list(rows) == ["w0", "a", "L", "N", "g", "kappa", "omega_c", "gamma3d",
                              "gamma3d_reliable", "C", "g_est", "kappa_est", "R_mirror"]
        np.testing.assert_array_equal(rows["w0"], [1.0, 1.2])
        np.testing.assert_allclose(rows["C"], 4 * rows["g"] ** 2 / (rows["kappa"] * rows["gamma3d"]))

    def test_transmission(self, tmp_path):
        code, out = _run(tmp_path, "transmission", {"geometry": BASE["geometry"]})
        assert code == 0
        t = _read(out / "transmission.csv")
        assert list(t) == ["omega", "T_cav", "R_cav", "S_cav", "T_fabry_perot"]
        np.testing.assert_allclose(t["T_cav"] + t["R_cav"] + t["S_cav"], 1.0, atol=1e-12)
        assert _header(out / "far_field.csv") == ["theta", "intensity"]

    def test_mirror(self, tmp_path):
        data = {"geometry": dict(BASE["geometry"], single_mirror=True),
                "grid": {"start": -1, "stop": 1, "num": 11}}
        code, out = _run(tmp_path, "mirror", data)
        assert code == 0
        m = _read(out / "mirror.csv")
        assert len(m["omega"]) == 11
        np.testing.assert_allclose(m["R"], m["r_re"] ** 2 + m["r_im"] ** 2, rtol=1e-12)

    def test_dynamics(self, tmp_path):
        data = {"geometry": BASE["geometry"],
                "targets": [{"position": [-0.3, 0, 0], "gamma_a": 0.1},
                            {"position": [0.3, 0, 0], "gamma_a": 0.1}],
                "dynamics": {"n_t": 101}}
        code, out = _run(tmp_path, "dynamics", data)
        assert code == 0
        d = _read(out / "dynamics.csv")
        assert list(d) == ["t", "e_0", "g2_0", "e_1", "g2_1", "cavity", "array"]
        assert len(d["t"]) == 101 and d["g2_0"][0] == pytest.approx(1.0)
        s = json.loads((out / "manifest.json").read_text())["summary"]
        assert 0 <= s["fidelity"] <= 1

    def test_dynamics_needs_two_targets(self, tmp_path):
        assert _run(tmp_path, "dynamics", BASE)[0] == 2

    def test_motion_fast(self, tmp_path):
        data = dict(BASE, motion={"regime": "fast", "sigma": [0.0, 0.02]})
        code, out = _run(tmp_path, "motion", data)
        assert code == 0
        with open(out / "motion.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["sigma", "axis_mask", "mean_g", "se_g", "mean_kappa", "se_kappa", "n_ok"]
        g0, g1 = float(rows[0]["mean_g"]), float(rows[1]["mean_g"])
        assert g1 / g0 == pytest.approx(np.exp(-(2 * np.pi * 0.02) ** 2), rel=1e-9)

    def test_motion_frozen_reproducible(self, tmp_path):
        data = dict(BASE, motion={"regime": "frozen", "sigma": 0.02, "n_realizations": 3, "seed": 4})
        _, a = _run(tmp_path, "motion", data, out="a")
        _, b = _run(tmp_path, "motion", data, out="b")
        assert (a / "motion.csv").read_bytes() == (b / "motion.csv").read_bytes()
        _, c = _run(tmp_path, "motion", data, "--seed", "5", out="c")
        assert (a / "motion.csv").read_bytes() != (c / "motion.csv").read_bytes()
        assert json.loads((c / "manifest.json").read_text())["seed"] == 5

    def test_manifest_reproduces_run(self, tmp_path):
        data = dict(BASE, motion={"regime": "frozen", "sigma": 0.02, "n_realizations": 2})
        _, a = _run(tmp_path, "motion", data, "--seed", "9", out="a")
        man = json.loads((a / "manifest.json").read_text())
        cfg = _write(tmp_path, man["config"], "again.yaml")
        assert cli.main(["motion", "--config", str(cfg), "--out", str(tmp_path / "b"),
                         "--seed", str(man["seed"])]) == 0
        assert (a / "motion.csv").read_bytes() == (tmp_path / "b" / "motion.csv").read_bytes()

    def test_stark(self, tmp_path):
        data = {"geometry": {"N": 12, "flat": True, "stark": {"alpha": 2000, "w_stark": 500}},
                "sweep": {"variable": "alpha", "values": [2000, 8000]}}
        code, out = _run(tmp_path, "stark", data)
        assert code == 0
        s = _read(out / "stark.csv")
        assert list(s) == ["alpha", "w0_fit", "w0_pred", "g", "g_est", "kappa", "omega_c"]
        assert s["w0_fit"][1] < s["w0_fit"][0]

    def test_stark_needs_flat(self, tmp_path):
        data = {"geometry": dict(BASE["geometry"], stark={"alpha": 1, "w_stark": 500})}
        assert _run(tmp_path, "stark", data)[0] == 2

    def test_threads_flag(self, tmp_path):
        assert _run(tmp_path, "mirror", {"geometry": BASE["geometry"]}, "--threads", "1")[0] == 0
