import numpy as np

from unitrans import plotting
from unitrans.applications import load_png


def test_figures_are_written(tmp_path, toy_stats):
    trace = [{k: 1.0 / i for k in ("total", "mse", "lpips", "decoupling", "cycle", "p")} for i in range(1, 6)]
    traj = [{"h": np.ones(3) * i, "j": np.ones(3), "mu": np.zeros(3), "lambda_p": 1 - 0.1 * i} for i in range(5)]
    rng = np.random.default_rng(0)
    paths = [
        plotting.plot_loss_trace(trace, tmp_path / "loss.png"),
        plotting.plot_mapper_trajectory(traj, tmp_path / "traj.png"),
        plotting.plot_p_marginals(rng.normal(size=(500, 6)), np.zeros(6), np.ones(6), tmp_path / "p.png"),
        plotting.plot_kl_bars([toy_stats], tmp_path / "kl.png"),
        plotting.plot_metric_bars([{"task": "a", "metric": "bd", "value": 0.1, "bins": 16},
                                   {"task": "a", "metric": "vol", "value": 2.0, "bins": ""}],
                                  tmp_path / "m.png"),
    ]
    for p in paths:
        img = load_png(p)
        assert img.shape[1] > 50 and img.shape[2] > 50
