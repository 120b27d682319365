import json

import numpy as np
import pytest
from click.testing import CliRunner

from unitrans.applications import load_png, save_png
from unitrans.cli import main
from unitrans.config import RunConfig, load_config
from unitrans.engine import load_latents
from unitrans.errors import ConfigError, MissingArtifactError


@pytest.fixture(scope="module")
def ws(tmp_path_factory, source_generator):
    """Workspace with a small stats cache and two source images."""
    root = tmp_path_factory.mktemp("cli")
    res = CliRunner().invoke(main, ["--root", str(root), "stats", "--domain", "toy", "--n", "500"])
    assert res.exit_code == 0, res.output
    for i in range(2):
        save_png(source_generator.generate(source_generator.sample_w(1, 1000 + i)[0]), root / f"src{i}.png")
    return root


def run(ws, *args):
    return CliRunner().invoke(main, ["--root", str(ws), *args])


def test_stats_prints_kl_table_and_figures(ws):
    assert (ws / "stats" / "toy.stats").exists()
    assert (ws / "stats" / "toy_p_marginals.png").exists() and (ws / "stats" / "toy_kl.png").exists()
    res = run(ws, "stats", "--domain", "toy2", "--n", "200", "--no-figures")
    header, row = res.output.strip().splitlines()
    assert header.startswith("domain\tP(true)||P(pseudo)") and row.startswith("toy2\t")


def test_translate_default_iterations_and_outputs(ws):
    out = ws / "run-default"
    res = run(ws, "translate", "--input", str(ws / "src0.png"), "--domain", "toy",
              "--class-src", "photo", "--class-tar", "cartoon", "--out", str(out))
    assert res.exit_code == 0, res.output
    header, row = res.output.strip().splitlines()
    assert header.split("\t")[:3] == ["run", "iteration", "mse"]
    assert row.split("\t")[1] == "35"
    for name in ("output.png", "trace.csv", "latents.bin", "config.snapshot",
                 "loss_trace.png", "mapper_trajectory.png"):
        assert (out / name).exists()
    snap = json.loads((out / "config.snapshot").read_text())
    assert snap["hyperparams"]["n_iterations"] == 35 and len(snap["input"]["sha256"]) == 64


def test_translate_is_reproducible_from_snapshot(ws):
    args = ["translate", "--input", str(ws / "src0.png"), "--domain", "toy", "--class-src", "photo",
            "--class-tar", "cartoon", "--iters", "3", "--seed", "2", "--no-figures"]
    assert run(ws, *args, "--out", str(ws / "r1")).exit_code == 0
    snap = json.loads((ws / "r1" / "config.snapshot").read_text())
    cfg = {"schema_version": snap["schema_version"], "hyperparams": snap["hyperparams"],
           "adapters": snap["adapters"]}
    (ws / "replay.json").write_text(json.dumps(cfg))
    res = CliRunner().invoke(main, ["--root", str(ws), "--config", str(ws / "replay.json"), "translate",
                                    "--input", str(ws / "src0.png"), "--domain", "toy", "--class-src",
                                    "photo", "--class-tar", "cartoon", "--out", str(ws / "r2"),
                                    "--no-figures"])
    assert res.exit_code == 0, res.output
    a, b = load_latents(ws / "r1" / "latents.bin"), load_latents(ws / "r2" / "latents.bin")
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_batch_matches_sequential(ws):
    manifest = ws / "manifest.jsonl"
    manifest.write_text("\n".join(json.dumps({"input": f"src{i}.png", "domain": "toy", "seed": 10 + i,
                                              "class_src": "photo", "class_tar": "cartoon"})
                                  for i in range(2)))
    res = run(ws, "batch", "--manifest", str(manifest), "--out", str(ws / "batch"), "--iters", "3",
              "--workers", "2")
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    assert lines[0] == "index\tinput\tstatus\tresult" and all("\tok\t" in x for x in lines[1:])
    for i in range(2):
        seq = ws / f"seq{i}"
        r = run(ws, "translate", "--input", str(ws / f"src{i}.png"), "--domain", "toy", "--class-src",
                "photo", "--class-tar", "cartoon", "--iters", "3", "--seed", str(10 + i),
                "--out", str(seq), "--no-figures")
        assert r.exit_code == 0, r.output
        par = ws / "batch" / f"{i:04d}-src{i}"
        a, b = load_latents(seq / "latents.bin"), load_latents(par / "latents.bin")
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert (seq / "output.png").read_bytes() == (par / "output.png").read_bytes()


def test_missing_stats_exit_code(ws):
    res = run(ws, "translate", "--input", str(ws / "src0.png"), "--domain", "nope",
              "--class-src", "a", "--class-tar", "b")
    assert res.exit_code == 5
    assert res.output.strip().startswith("ERROR MISSING_STATS:")
    assert "unitrans stats --domain nope" in res.output


def test_error_contract(ws):
    res = run(ws, "translate", "--input", str(ws / "src0.png"), "--domain", "toy", "--class-src", "a",
              "--class-tar", "b", "--generator", "nope")
    assert res.exit_code == 3 and res.output.startswith("ERROR UNKNOWN_ADAPTER:")
    res = run(ws, "translate", "--input", str(ws / "missing.png"), "--domain", "toy",
              "--class-src", "a", "--class-tar", "b")
    assert res.exit_code == 5
    (ws / "bad.json").write_text(json.dumps({"schema_version": 99}))
    res = CliRunner().invoke(main, ["--config", str(ws / "bad.json"), "translate", "--input",
                                    str(ws / "src0.png"), "--domain", "toy", "--class-src", "a",
                                    "--class-tar", "b"])
    assert res.exit_code == 2 and res.output.startswith("ERROR CONFIG_ERROR:")
    assert len(res.output.strip().splitlines()) == 1


def test_interpolate_mix_eval_dump(ws):
    run_dir = ws / "run-default"
    lat = str(run_dir / "latents.bin")
    other = ws / "r1" / "latents.bin"
    res = run(ws, "interpolate", "--a", lat, "--b", str(other), "--steps", "4", "--out", str(ws / "interp.png"))
    assert res.exit_code == 0, res.output
    assert load_png(ws / "interp.png").shape == (3, 32 + 4, 4 * 32 + 5 * 2)
    res = run(ws, "mix", "--coarse", lat, "--fine", str(other), "--out", str(ws / "mix.png"))
    assert res.exit_code == 0 and (ws / "mix_sheet.png").exists()

    pairs = ws / "pairs.jsonl"
    pairs.write_text(json.dumps({"task": "toy", "result": str(run_dir / "output.png"),
                                 "reference": "src0.png"}))
    res = run(ws, "eval", "--pairs", str(pairs), "--figure", str(ws / "metrics.png"))
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    assert lines[0] == "task,metric,value,bins" and len(lines) == 5
    assert (ws / "metrics.png").exists()

    res = run(ws, "dump-trace", str(run_dir))
    assert res.output.splitlines()[0].startswith("mse,lpips")
    assert len(res.output.strip().splitlines()) == 36
    res = run(ws, "dump-trace", str(run_dir), "--mapper")
    assert res.output.startswith("iteration,lambda_p,h_0")
    assert run(ws, "dump-trace", str(ws / "nowhere")).exit_code == 5


def test_config_file_and_overrides(tmp_path):
    cfg = RunConfig().override(n_iterations=7, generator="toy-generator-2layer", seed=None)
    assert cfg.hyperparams.n_iterations == 7 and cfg.adapters.generator == "toy-generator-2layer"
    assert cfg.hyperparams.seed == 0
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg
    with pytest.raises(ConfigError):
        cfg.override(learning_rate=1)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"schema_version": 1, "extra": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"schema_version": 1, "adapters": {"vae": "x"}})
    with pytest.raises(MissingArtifactError):
        load_config(tmp_path / "none.json")
    path.write_text("{")
    with pytest.raises(ConfigError):
        load_config(path)
