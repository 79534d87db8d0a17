import csv
import json
import os

import pytest

from exp3lgc.cli import main
from exp3lgc.config import ConfigError, ExperimentConfig, parse_config, preset_names


def minimal(**kw):
    raw = {"K": 4, "d": 2, "T": 600, "graph": {"type": "complete"},
           "algorithms": ["exp3-lgc-u", "exp3-lgc-ix"]}
    raw.update(kw)
    return raw


class TestConfig:
    def test_fig2_preset(self):
        cfg = parse_config("paper_fig2")
        assert (cfg.K, cfg.d, cfg.T, cfg.trials) == (10, 10, 100000, 100)
        assert len(cfg.algorithms) == 5
        p = cfg.build()
        assert p.adversary.kind == "sudden_change_synthetic"
        assert p.adversary.change_point == 50000
        assert p.adversary.graph_source.edges == frozenset(
            (i, j) for i in range(9) for j in range(9) if i != j)
        assert "paper_fig2_stationary" in preset_names()

    def test_defaults(self):
        cfg = parse_config(minimal())
        assert cfg.trials == 1 and cfg.base_seed == 0 and cfg.output_format == "csv"
        assert cfg.checkpoints == 100

    @pytest.mark.parametrize("field,value", [("T", 0), ("K", 0), ("d", -1), ("trials", 0),
                                             ("T", 2.5), ("K", "ten")])
    def test_domain_errors_name_field(self, field, value):
        with pytest.raises(ConfigError, match=f"^{field}"):
            parse_config(minimal(**{field: value}))

    def test_missing_field(self):
        raw = minimal()
        del raw["T"]
        with pytest.raises(ConfigError, match="T: missing"):
            parse_config(raw)

    def test_unknown_key_suggestion(self):
        with pytest.raises(ConfigError, match="'trails'.*did you mean 'trials'"):
            parse_config(minimal(trails=3))
        with pytest.raises(ConfigError, match="learning_rte"):
            parse_config(minimal(algorithms=[{"name": "exp3-lgc-u", "learning_rte": 0.1}]))
        with pytest.raises(ConfigError, match=r"output: unknown key 'strid'.*'stride'"):
            parse_config(minimal(output={"strid": 5}))

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigError, match=r"algorithms\[1\].name.*exp3-lgc-ix"):
            parse_config(minimal(algorithms=["exp3-lgc-u", "exp3-lgc-xi"]))

    def test_override_types(self):
        with pytest.raises(ConfigError, match=r"algorithms\[0\].eta"):
            parse_config(minimal(algorithms=[{"name": "exp3-lgc-u", "eta": "fast"}]))
        with pytest.raises(ConfigError, match="gamma"):
            parse_config(minimal(algorithms=[{"name": "exp3-lgc-u", "gamma": 1.5}]))
        with pytest.raises(ConfigError, match="adaptive"):
            parse_config(minimal(algorithms=[{"name": "exp3-lgc-ix", "eta": 0.1}]))

    def test_duplicate_algorithms(self):
        with pytest.raises(ConfigError, match="label"):
            parse_config(minimal(algorithms=["exp3-lgc-u", "exp3-lgc-u"]))

    def test_graph_errors(self):
        with pytest.raises(ConfigError, match="graph"):
            parse_config(minimal(graph={"type": "complete_plus_isolated", "clique": 9}))

    def test_loss_bound_checked(self):
        with pytest.raises(ConfigError, match="loss bound"):
            parse_config(minimal(K=10, adversary={"kind": "sudden_change_synthetic",
                                                  "scales": [0.5, 0.1]}))

    def test_custom_table(self, tmp_path):
        import numpy as np
        np.save(tmp_path / "t.npy", np.full((600, 4, 2), 0.1))
        path = tmp_path / "c.json"
        path.write_text(json.dumps(minimal(adversary={"kind": "custom_oblivious",
                                                      "file": "t.npy"})))
        cfg = parse_config(str(path))
        assert cfg.build().adversary.thetas.shape == (600, 4, 2)

    def test_precedence(self, monkeypatch):
        cfg = parse_config(minimal(trials=4, output={"directory": "from-file"}))
        over = cfg.with_overrides(trials=2, horizon=800, seed=9)
        assert (over.trials, over.T, over.base_seed) == (2, 800, 9)
        assert cfg.trials == 4
        monkeypatch.setenv("EXP3LGC_OUT", "from-env")
        assert cfg.output_dir("from-flag") == "from-flag"
        assert cfg.output_dir() == "from-file"
        assert parse_config(minimal()).output_dir() == "from-env"
        monkeypatch.delenv("EXP3LGC_OUT")
        assert parse_config(minimal()).output_dir() == "results"

    def test_horizon_override_rescales_change_point(self):
        cfg = parse_config(minimal(T=1000, adversary={"kind": "sudden_change_synthetic",
                                                       "change_point": 400}))
        assert cfg.with_overrides(horizon=600).build().adversary.change_point == 240

    def test_digest_stable(self):
        assert parse_config(minimal()).digest() == parse_config(minimal()).digest()
        assert parse_config(minimal()).digest() != parse_config(minimal(T=700)).digest()

    def test_json_text(self):
        assert isinstance(parse_config(json.dumps(minimal())), ExperimentConfig)
        with pytest.raises(ConfigError):
            parse_config("no_such_preset")


class TestMain:
    def test_run_csv(self, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["run", "--config", "paper_fig2", "--trials", "2", "--horizon", "1000",
                   "--out", str(out)])
        assert rc == 0
        rows = list(csv.DictReader(open(out / "results.csv")))
        assert list(rows[0]) == ["round", "algorithm", "mean_regret", "std_regret", "trials"]
        assert len({r["algorithm"] for r in rows}) == 5
        assert len(rows) == 5 * 100
        assert rows[99]["round"] == "1000" and rows[0]["trials"] == "2"
        manifest = json.load(open(out / "manifest.json"))
        assert manifest["status"] == "complete"
        assert manifest["base_seed"] == 0 and manifest["horizon"] == 1000
        assert manifest["config_hash"] == parse_config("paper_fig2").with_overrides(
            trials=2, horizon=1000, out=str(out)).digest()
        assert "exp3lgc" in manifest["build"]
        assert not [p for p in os.listdir(out) if p.startswith(".partial")]

    def test_run_jsonl_and_traces(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(minimal(output={"stride": 300})))
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--format", "jsonl", "--out", str(out),
                     "--dump-traces"]) == 0
        rows = [json.loads(line) for line in open(out / "results.jsonl")]
        assert [r["round"] for r in rows] == [300, 600, 300, 600]
        traces = sorted(os.listdir(out / "traces"))
        assert traces == ["exp3-lgc-ix-seed0.jsonl", "exp3-lgc-u-seed0.jsonl"]
        first = json.loads(open(out / "traces" / traces[0]).readline())
        assert first["round"] == 1 and "observation_set" in first

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EXP3LGC_OUT", str(tmp_path / "env"))
        assert main(["run", "--config", json.dumps(minimal())]) == 0
        assert (tmp_path / "env" / "results.csv").exists()

    def test_failure_leaves_no_output(self, tmp_path, capsys):
        out = tmp_path / "bad"
        table = [[[-0.1, 0.0]] * 4] * 5
        raw = minimal(T=5, algorithms=["exp3-lgc-ix"],
                      adversary={"kind": "custom_oblivious", "table": table})
        rc = main(["run", "--config", json.dumps(raw), "--out", str(out), "--dump-traces"])
        assert rc == 1
        assert "nonnegative losses" in capsys.readouterr().err
        assert os.listdir(out) == []

    def test_bad_config(self, capsys):
        assert main(["run", "--config", json.dumps(minimal(T=0))]) == 1
        assert "T:" in capsys.readouterr().err

    def test_verify(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4 and "all audits passed" in out

    def test_show_schedule(self, capsys):
        assert main(["show-schedule", "--config", "paper_fig2", "--algorithm", "exp3-lgc-u"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "exp3-lgc-u: eta=0.00016757179360537533 gamma=0.06702871744215014 " \
                         "(undirected, T=100000)"
        assert main(["show-schedule", "--config", "paper_fig2", "--algorithm", "exp3-lgc-ix"]) == 0
        line = capsys.readouterr().out
        eta = float(line.split("eta_1=")[1].split()[0])
        assert eta == pytest.approx(0.15174271293851464, rel=1e-10)

    def test_module_entry_point(self):
        import subprocess
        import sys
        r = subprocess.run([sys.executable, "-m", "exp3lgc", "show-schedule", "--config",
                            "paper_fig2", "--horizon", "20000", "--algorithm", "exp3-lgc-u"],
                           capture_output=True, text=True)
        assert r.returncode == 0
        assert "eta=0.0003747019216131838" in r.stdout
