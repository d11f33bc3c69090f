import json
import subprocess
import sys

import numpy as np
import pytest

from markov_mesh.cli import CliConfig, InputError, format_config, main, parse_config
from markov_mesh.lattice import Scene, read_scene, write_scene
from markov_mesh.pbf import PBF, write_model


@pytest.fixture
def one_cell(tmp_path):
    path = tmp_path / "one.scene"
    write_scene(Scene.full(np.ones((1, 1))), path)
    return path


class TestConfig:
    def test_defaults(self):
        cfg = CliConfig()
        assert (cfg.radius, cfg.p_star, cfg.sigma, cfg.nu) == (5.0, 0.9, 100.0, 0.5)
        assert (cfg.margin, cfg.prob_param_move, cfg.stride) == (20, 0.55, 50)

    def test_round_trip(self):
        assert parse_config(format_config(CliConfig())) == CliConfig()
        custom = CliConfig(radius=3.0, sigma=7.5, iterations=12, burnin=2, seed=9, chains=2)
        assert parse_config(format_config(custom)) == custom

    def test_comments_and_partial(self):
        cfg = parse_config("# run\n\nnu = 0.25   # sharper\nmargin=3\n")
        assert cfg.nu == 0.25 and cfg.margin == 3 and cfg.sigma == 100.0

    @pytest.mark.parametrize("text", ["bogus = 1\n", "nu 0.5\n", "margin = x\n", "margin = -1\n", "p_star = 1.5\n"])
    def test_invalid(self, text):
        with pytest.raises(InputError):
            parse_config(text)

    def test_init_config_file(self, tmp_path):
        out = tmp_path / "run.cfg"
        assert main(["init-config", "-o", str(out), "--sigma", "4"]) == 0
        assert parse_config(out.read_text()) == CliConfig(sigma=4.0)


class TestFit:
    def test_smoke(self, one_cell, tmp_path):
        trace = tmp_path / "t.jsonl"
        assert main(["fit", str(one_cell), "--trace", str(trace), "--iterations", "100", "--margin", "2"]) == 0
        lines = trace.read_text().splitlines()
        assert len(lines) == 101
        assert json.loads(lines[0])["it"] == 0
        final = read_scene(tmp_path / "t.scene")
        assert final.dims == (5, 5) and final.values[2, 2] == 1

    def test_zero_iterations(self, one_cell, tmp_path):
        trace = tmp_path / "t.jsonl"
        assert main(["fit", str(one_cell), "--trace", str(trace), "--iterations", "0"]) == 0
        assert len(trace.read_text().splitlines()) == 1

    def test_missing_scene(self, tmp_path, capsys):
        missing = tmp_path / "nope.scene"
        assert main(["fit", str(missing), "--trace", str(tmp_path / "t.jsonl")]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_bad_config(self, one_cell, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("sigma = -1\n")
        assert main(["fit", str(one_cell), "--trace", str(tmp_path / "t"), "--config", str(cfg)]) == 2

    def test_deterministic(self, one_cell, tmp_path):
        args = ["fit", str(one_cell), "--iterations", "40", "--margin", "2", "--seed", "5", "--trace"]
        main(args + [str(tmp_path / "a.jsonl")])
        main(args + [str(tmp_path / "b.jsonl")])
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_chains(self, one_cell, tmp_path):
        trace = tmp_path / "t.jsonl"
        argv = ["fit", str(one_cell), "--trace", str(trace), "--iterations", "10", "--margin", "1", "--chains", "2"]
        assert main(argv) == 0
        t0, t1 = (tmp_path / "t.0.jsonl").read_text(), (tmp_path / "t.1.jsonl").read_text()
        assert len(t0.splitlines()) == len(t1.splitlines()) == 11
        assert t0 != t1

    def test_abort_exit_code(self, one_cell, tmp_path, monkeypatch):
        from markov_mesh import rjmcmc

        def boom(*args, **kwargs):
            raise RuntimeError("forced")

        monkeypatch.setattr(rjmcmc, "single_site_sweep", boom)
        trace = tmp_path / "t.jsonl"
        assert main(["fit", str(one_cell), "--trace", str(trace), "--iterations", "5"]) == 3
        assert len(trace.read_text().splitlines()) == 1
        assert (tmp_path / "t.model.json").exists()


class TestSimulate:
    def test_all_zero(self, tmp_path):
        model = tmp_path / "m.json"
        write_model(PBF.constant(-50.0), model)
        assert main(["simulate", str(model), "-m", "4", "-n", "6", "--count", "2", "--out-dir", str(tmp_path / "o")]) == 0
        files = sorted((tmp_path / "o").iterdir())
        assert len(files) == 2
        assert all(not read_scene(f).values.any() for f in files)

    def test_count_zero(self, tmp_path):
        model = tmp_path / "m.json"
        write_model(PBF.constant(0.0), model)
        assert main(["simulate", str(model), "-m", "2", "-n", "2", "--count", "0", "--out-dir", str(tmp_path / "o")]) == 0
        assert list((tmp_path / "o").iterdir()) == []

    def test_same_seed(self, tmp_path):
        model = tmp_path / "m.json"
        write_model(PBF.constant(0.0), model)
        for d in ("x", "y"):
            main(["simulate", str(model), "-m", "9", "-n", "9", "--seed", "4", "--out-dir", str(tmp_path / d)])
        assert (tmp_path / "x" / "sim_4.scene").read_bytes() == (tmp_path / "y" / "sim_4.scene").read_bytes()

    @pytest.mark.parametrize(
        "payload",
        [
            {"interactions": [[], [[0, -1], [-1, 0]]], "theta": [0.0, 1.0]},
            {"interactions": [[], [[0, -1]]], "theta": [0.0]},
            "not json",
        ],
    )
    def test_invalid_model(self, tmp_path, payload):
        model = tmp_path / "m.json"
        model.write_text(payload if isinstance(payload, str) else json.dumps(payload))
        assert main(["simulate", str(model), "-m", "2", "-n", "2", "--out-dir", str(tmp_path)]) == 2


class TestAnalyze:
    def _trace(self, tmp_path, one_cell, iterations=100):
        trace = tmp_path / "t.jsonl"
        main(["fit", str(one_cell), "--trace", str(trace), "--iterations", str(iterations), "--margin", "1"])
        return trace

    def test_outputs(self, tmp_path, one_cell):
        trace = self._trace(tmp_path, one_cell)
        out = tmp_path / "out"
        argv = ["analyze", str(trace), "--burnin", "50", "--stride", "10", "--out-dir", str(out),
                "--block-samples", "3", "--dims", "6", "6"]
        assert main(argv) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"neighbors.csv", "interactions.csv", "clusters.csv", "trace_scalars.csv", "block_densities.csv"}
        assert len((out / "neighbors.csv").read_text().splitlines()) == 35
        assert len((out / "block_densities.csv").read_text().splitlines()) == 16 * 3 + 1

    def test_constant_trace_single_cluster(self, tmp_path):
        trace = tmp_path / "c.jsonl"
        line = '{"it":%d,"tau":[],"lambda":[[]],"theta":[0.5],"logp":-1.0,"move":"param","acc":true}\n'
        trace.write_text("".join(line % i for i in range(20)))
        out = tmp_path / "out"
        assert main(["analyze", str(trace), "--burnin", "0", "--stride", "1", "--out-dir", str(out)]) == 0
        rows = (out / "clusters.csv").read_text().splitlines()
        assert len(rows) == 2 and rows[1].startswith("1,1.0,1,")

    def test_burnin_past_end(self, tmp_path, one_cell):
        trace = self._trace(tmp_path, one_cell, 10)
        assert main(["analyze", str(trace), "--burnin", "11", "--out-dir", str(tmp_path / "o")]) == 2

    def test_unparsable(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        assert main(["analyze", str(bad)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "markov_mesh", "init-config"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert parse_config(proc.stdout) == CliConfig()
