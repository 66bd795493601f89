import csv
from dataclasses import fields, replace

import numpy as np
import pytest

from impulsym.cli import main
from impulsym.config import RunConfig, case_config, parse_config
from impulsym.errors import ConfigError


def write_cfg(tmp_path, cfg, name="run.cfg"):
    p = tmp_path / name
    p.write_text(cfg.to_text())
    return str(p)


def read_kv(path):
    out = {}
    for line in open(path):
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# -- configuration -------------------------------------------------------------


@pytest.mark.parametrize("cfg", [
    case_config(1), case_config(2), case_config(3), case_config(1, caption_params=True),
    RunConfig(model="pure-linear-nd", params={"n": 2.0, "a": -0.5, "b": 0.5, "c": 1.0, "d": 1.0},
              tau=0.1, p1=2, p2=4, eta=0.05, psi_l=(0.0, 0.0), psi_u=(1.0, 2.0),
              inputs=((0.0, 0.0), (0.5, -0.5)), domain_lower=(-1.0, -1.0),
              domain_upper=(2.0, 3.0), epsilon_free=0.3, delta_free=4.5, h_max=0.01, seed=9,
              horizon=17, trials=3, x0=(0.5, 1.0), deflate=False, name="custom run"),
    RunConfig(model="storage-delivery", params={"a": -0.2, "b": 0.9, "c": 10, "d": 10}, tau=0.2,
              p1=1, p2=5, eta=0.01, psi_l=(25.0,), psi_u=(50.0,), input_range=(-1.0, 1.0),
              input_mu=0.5),
])
def test_config_round_trip_is_lossless(cfg):
    back = parse_config(cfg.to_text())
    for f in fields(RunConfig):
        a, b = getattr(cfg, f.name), getattr(back, f.name)
        if f.name == "params":
            assert {k: float(v) for k, v in a.items()} == b
        else:
            assert a == b, f.name
    assert back.to_text() == cfg.to_text()


def test_config_errors():
    base = case_config(1).to_text()
    with pytest.raises(ConfigError):
        parse_config(base + "bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config(base + "asf.deep.key = 1\n")
    with pytest.raises(ConfigError):
        parse_config(base.replace("eta = 0.01\n", ""))
    with pytest.raises(ConfigError):
        parse_config(base.replace("p1 = 1", "p1 = one"))
    with pytest.raises(ConfigError):
        parse_config(base.replace("inputs = -1.0, 0.0, 1.0", "inputs ="))
    with pytest.raises(ConfigError):
        parse_config(base + "just text\n")
    with pytest.raises(ConfigError):
        case_config(4)


def test_input_range_expands_on_the_mu_lattice():
    cfg = replace(case_config(1), inputs=None, input_range=(-1.0, 1.0), input_mu=0.5)
    assert cfg.input_values()[:, 0].tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert cfg.input_quantization() == 0.5
    assert case_config(1).input_quantization() == 1.0


def test_case_presets():
    c1, c2, c3 = case_config(1), case_config(2), case_config(3)
    assert (c1.p1, c1.p2, c1.params["a"], c1.params["b"], c1.params["c"]) == (1, 5, -0.2, 0.9, 10.0)
    assert (c2.p1, c2.p2, c2.params["b"], c2.psi_l, c2.psi_u) == (5, 7, 1.01, (50.0,), (75.0,))
    assert (c3.p1, c3.p2, c3.params["a"], c3.psi_l, c3.psi_u) == (1, 2, 0.2, (75.0,), (100.0,))
    assert all(c.tau == 0.2 and c.eta == 0.01 and c.asf_psi == 0.99 for c in (c1, c2, c3))
    assert case_config(1, caption_params=True).params["c"] == 5.0
    assert case_config(2, caption_params=True).params["c"] == 15.0
    assert np.allclose(c1.initial_state(), [37.5])


# -- subcommands -----------------------------------------------------------------


def test_certify_cases(tmp_path):
    assert main(["certify", "--case", "1", "--out", str(tmp_path)]) == 0
    kv = read_kv(tmp_path / "certify.txt")
    assert kv["dwell_ok"] == "true" and kv["certificate_ok"] == "true" and kv["regime"] == "DD"
    assert main(["certify", "--case", "2", "--out", str(tmp_path)]) == 0
    assert read_kv(tmp_path / "certify.txt")["regime"] == "FD"


def test_certify_dwell_failure(tmp_path):
    cfg = replace(case_config(1), params={"a": -0.05, "b": 1.2, "c": 10.0, "d": 10.0})
    path = write_cfg(tmp_path, cfg)
    assert main(["certify", "--config", path, "--out", str(tmp_path)]) == 3
    assert read_kv(tmp_path / "certify.txt")["dwell_ok"] == "false"
    assert main(["synthesize", "--config", path, "--out", str(tmp_path)]) == 3


def test_missing_config_is_a_config_error(tmp_path):
    assert main(["certify", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert main(["certify"]) == 2


def test_abstract_counts(tmp_path, capsys):
    assert main(["abstract", "--case", "1", "--out", str(tmp_path)]) == 0
    kv = read_kv(tmp_path / "abstract.txt")
    assert kv["grid_points"] == "2501" and kv["abstract_states"] == "15006"
    assert kv["inputs"] == "3"
    assert (tmp_path / "model.txt").read_text().startswith("# impulsym symbolic model")
    coarse = write_cfg(tmp_path, case_config(1, eta=25.0), "coarse.cfg")
    assert main(["abstract", "--config", coarse, "--out", str(tmp_path / "c")]) == 0
    assert read_kv(tmp_path / "c" / "abstract.txt")["grid_points"] == "2"


def test_abstract_rejects_empty_input_list(tmp_path):
    text = case_config(1).to_text().replace("inputs = -1.0, 0.0, 1.0", "inputs =")
    p = tmp_path / "e.cfg"
    p.write_text(text)
    assert main(["abstract", "--config", str(p)]) == 2


def test_synthesize_and_simulate(tmp_path):
    out = tmp_path / "s"
    assert main(["synthesize", "--case", "1", "--out", str(out)]) == 0
    kv = read_kv(out / "summary.txt")
    assert float(kv["eps_hat"]) == pytest.approx(0.25761, abs=1e-4)
    assert float(kv["eps_hat_paper"]) == 0.25
    assert int(kv["controller_states"]) > 0
    cfg = case_config(1, trials=3, horizon=25)
    path = write_cfg(tmp_path, cfg)
    assert main(["simulate", "--config", path, "--controller", str(out / "controller.txt"),
                 "--out", str(out)]) == 0
    with open(out / "trajectories.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["trial", "k", "t", "x_before", "x_after", "u", "jumped", "u_jump"]
    body = rows[1:]
    assert len(body) == 3 * 26
    keys = [(int(r[0]), int(r[1])) for r in body]
    assert keys == sorted(keys)
    x = np.array([[float(r[3]), float(r[4])] for r in body])
    assert np.all((x >= 25) & (x <= 50))
    for r in body:
        assert (r[6] == "1") == (r[7] != "")


def test_simulate_horizon_zero_and_forced_jumps(tmp_path):
    out = tmp_path / "p"
    cfg = case_config(1, p1=1, p2=1, trials=1, horizon=0)
    path = write_cfg(tmp_path, cfg)
    assert main(["synthesize", "--config", path, "--out", str(out)]) == 0
    ctrl = str(out / "controller.txt")
    assert main(["simulate", "--config", path, "--controller", ctrl, "--out", str(out)]) == 0
    rows = (out / "trajectories.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("0,0,0.0,37.5,37.5,")
    path = write_cfg(tmp_path, replace(cfg, horizon=10), "h10.cfg")
    assert main(["simulate", "--config", path, "--controller", ctrl, "--out", str(out)]) == 0
    jumped = [r.split(",")[6] for r in (out / "trajectories.csv").read_text().splitlines()[1:]]
    assert jumped == ["0"] + ["1"] * 10


def test_simulate_rejects_mismatched_controller_and_losing_start(tmp_path):
    out = tmp_path / "m"
    assert main(["synthesize", "--case", "1", "--out", str(out)]) == 0
    ctrl = str(out / "controller.txt")
    assert main(["simulate", "--case", "2", "--controller", ctrl]) == 2
    path = write_cfg(tmp_path, case_config(1, x0=(25.05,), trials=1, horizon=3))
    assert main(["simulate", "--config", path, "--controller", ctrl, "--out", str(out)]) == 2
    assert main(["simulate", "--case", "1"]) == 2


def test_empty_winning_domain_exit_code(tmp_path):
    path = write_cfg(tmp_path, case_config(1, psi_l=(25.0,), psi_u=(26.0,)))
    assert main(["synthesize", "--config", path, "--out", str(tmp_path)]) == 4


def test_seed_and_caption_flags(tmp_path):
    path = write_cfg(tmp_path, case_config(1))
    assert main(["certify", "--config", path, "--seed", "5", "--case1-caption-params",
                 "--out", str(tmp_path)]) == 0
    with pytest.raises(SystemExit):
        main(["certify", "--case", "7"])
