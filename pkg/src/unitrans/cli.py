"""Command-line interface.

Every failure prints exactly one line ``ERROR <CLASS>: <message>`` to stderr
and exits with the code of its error family (2 config, 3 adapter, 4 numeric,
5 missing artifact).
"""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

import click
import numpy as np
import torch

from . import plotting
from .adapters import load
from .applications import contact_sheet, interpolate, load_png, mix, save_png
from .config import RunConfig, load_config
from .domain_stats import cache_path, collect_stats, format_kl_table, save_cache, sample_domain
from .engine import load_latents
from .errors import ConfigError, MissingArtifactError, UnitransError
from .evaluation import evaluate_pairs
from .pipeline import run_translation

log = logging.getLogger("unitrans")


def _fail(error_class: str, message: str, code: int):
    click.echo(f"ERROR {error_class}: {' '.join(str(message).split())}", err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UnitransError as exc:
            _fail(exc.error_class, str(exc), exc.exit_code)
        except FileNotFoundError as exc:
            _fail("MISSING_ARTIFACT", str(exc), 5)
    return wrapper


def _config(ctx, **overrides) -> RunConfig:
    cfg = load_config(ctx.obj.get("config"))
    return cfg.override(stats_root=ctx.obj.get("root"), **overrides)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON run configuration.")
@click.option("--root", type=click.Path(), default=None, help="Cache root (default: $UNITRANS_HOME or .).")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, root, verbose):
    """Latent-space image translation between generator domains."""
    logging.basicConfig(level=logging.INFO if verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj.update(config=config_path, root=root)


@main.command()
@click.option("--domain", required=True)
@click.option("--generator", default=None, help="Generator adapter key.")
@click.option("--encoder", default=None, help="Image encoder adapter key.")
@click.option("--n", "n_samples", default=5000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
@guarded
def stats(ctx, domain, generator, encoder, n_samples, seed, figures):
    """Fit domain statistics, write the cache and print the KL table."""
    cfg = _config(ctx, generator=generator, image_encoder=encoder)
    gen = load(cfg.adapters.generator, registry_path=cfg.adapters.registry)
    enc = load(cfg.adapters.image_encoder, role="image", registry_path=cfg.adapters.registry)
    bundle = collect_stats(gen, enc, n=n_samples, seed=seed, domain_name=domain)
    path = save_cache(bundle, cache_path(domain, cfg.stats_root))
    click.echo(format_kl_table(bundle))
    if figures:
        p_codes, _ = sample_domain(gen, enc, min(n_samples, 2000), seed)
        plotting.plot_p_marginals(p_codes, bundle.p_stats.mean, bundle.p_stats.std,
                                  path.with_name(f"{domain}_p_marginals.png"))
        plotting.plot_kl_bars([bundle], path.with_name(f"{domain}_kl.png"))
    log.info("wrote %s", path)


def _run_options(fn):
    for opt in reversed([
        click.option("--iters", "n_iterations", type=int, default=None, help="Iterations (default 35)."),
        click.option("--seed", type=int, default=None),
        click.option("--generator", default=None),
        click.option("--image-encoder", default=None),
        click.option("--text-encoder", default=None),
        click.option("--extractor", default=None),
        click.option("--dtype", type=click.Choice(["float32", "float64"]), default=None),
    ]):
        fn = opt(fn)
    return fn


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--domain", required=True)
@click.option("--class-src", required=True)
@click.option("--class-tar", required=True)
@click.option("--mask", "mask_path", type=click.Path(), default=None, help="PNG; white = observed.")
@click.option("--low-res", is_flag=True, help="Accept an input smaller than the generator output.")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--figures/--no-figures", default=True, show_default=True)
@_run_options
@click.pass_context
@guarded
def translate(ctx, input_path, domain, class_src, class_tar, mask_path, low_res, out_dir, figures, **overrides):
    """Translate one image into DOMAIN; prints the final loss row as TSV."""
    cfg = _config(ctx, **overrides)
    if not Path(input_path).exists():
        raise MissingArtifactError(f"input image {input_path} not found")
    out_dir = Path(out_dir or f"runs/{Path(input_path).stem}-{cfg.hyperparams.seed}")
    record = {"input": input_path, "domain": domain, "class_src": class_src,
              "class_tar": class_tar, "mask": mask_path, "low_res": low_res}
    out = run_translation(record, cfg, out_dir)
    _report_run(out, figures)


def _report_run(out: Path, figures: bool):
    rows = list(csv.DictReader((out / "trace.csv").open()))
    last = rows[-1]
    click.echo("run\titeration\t" + "\t".join(last))
    click.echo(f"{out}\t{len(rows)}\t" + "\t".join(f"{float(v):.6g}" for v in last.values()))
    if figures:
        trace = [{k: float(v) for k, v in r.items()} for r in rows]
        plotting.plot_loss_trace(trace, out / "loss_trace.png")
        traj = _read_trajectory(out / "mapper_trajectory.csv")
        plotting.plot_mapper_trajectory(traj, out / "mapper_trajectory.png")


def _read_trajectory(path) -> list[dict]:
    out = []
    for row in csv.DictReader(Path(path).open()):
        snap = {"lambda_p": float(row["lambda_p"])}
        for key in ("h", "j", "mu"):
            cols = sorted((c for c in row if c.startswith(key + "_")), key=lambda c: int(c.split("_")[-1]))
            snap[key] = np.array([float(row[c]) for c in cols])
        out.append(snap)
    return out


def _batch_worker(args):
    index, record, cfg_dict, out_root = args
    torch.set_num_threads(1)
    logging.disable(logging.WARNING)
    cfg = RunConfig.from_dict(cfg_dict)
    out = Path(out_root) / f"{index:04d}-{Path(record['input']).stem}"
    try:
        return index, str(run_translation(record, cfg, out)), None
    except UnitransError as exc:
        return index, None, (exc.error_class, str(exc), exc.exit_code)


def read_manifest(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"manifest {path} not found")
    records = []
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"manifest line {n} is not valid JSON: {exc}") from exc
        for key in ("input", "mask"):
            if rec.get(key) and not Path(rec[key]).is_absolute():
                rec[key] = str(path.parent / rec[key])
        records.append(rec)
    if not records:
        raise ConfigError(f"manifest {path} has no records")
    return records


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default="runs/batch", show_default=True)
@click.option("--workers", type=int, default=2, show_default=True)
@click.option("--class-src", default=None, help="Default for records without class_src.")
@click.option("--class-tar", default=None, help="Default for records without class_tar.")
@_run_options
@click.pass_context
@guarded
def batch(ctx, manifest, out_dir, workers, class_src, class_tar, **overrides):
    """Translate every record of a JSONL manifest in a bounded process pool."""
    cfg = _config(ctx, **overrides)
    records = read_manifest(manifest)
    for rec in records:
        rec.setdefault("class_src", class_src)
        rec.setdefault("class_tar", class_tar)
        if rec["class_src"] is None or rec["class_tar"] is None:
            raise ConfigError(f"record {rec['input']} has no class_src/class_tar and no default was given")
    jobs = [(i, rec, cfg.to_dict(), out_dir) for i, rec in enumerate(records)]
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        results = [_batch_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers, mp_context=get_context("spawn")) as pool:
            results = list(pool.map(_batch_worker, jobs))
    click.echo("index\tinput\tstatus\tresult")
    failure = None
    for index, path, err in sorted(results):
        status = "ok" if err is None else err[0]
        click.echo(f"{index}\t{records[index]['input']}\t{status}\t{path or err[1]}")
        failure = failure or err
    if failure:
        _fail(*failure)


def _load_w(path) -> torch.Tensor:
    data = load_latents(path)
    if "w" not in data:
        raise ConfigError(f"{path} holds no w code")
    w = torch.as_tensor(data["w"], dtype=torch.float64)
    return w[0] if w.dim() == 2 else w


@main.command("interpolate")
@click.option("--a", "path_a", required=True, type=click.Path())
@click.option("--b", "path_b", required=True, type=click.Path())
@click.option("--steps", default=8, show_default=True)
@click.option("--generator", default=None)
@click.option("--out", "out_path", default="interpolation.png", show_default=True)
@click.pass_context
@guarded
def interpolate_cmd(ctx, path_a, path_b, steps, generator, out_path):
    """Contact sheet of a straight line between two saved W codes."""
    cfg = _config(ctx, generator=generator)
    gen = load(cfg.adapters.generator, registry_path=cfg.adapters.registry)
    with torch.no_grad():
        images = interpolate(_load_w(path_a), _load_w(path_b), steps, gen)
    click.echo(contact_sheet([images], out_path))


@main.command("mix")
@click.option("--coarse", "coarse_path", required=True, type=click.Path())
@click.option("--fine", "fine_path", required=True, type=click.Path())
@click.option("--split", "split_layer", default=4, show_default=True)
@click.option("--generator", default=None)
@click.option("--out", "out_path", default="mix.png", show_default=True)
@click.pass_context
@guarded
def mix_cmd(ctx, coarse_path, fine_path, split_layer, generator, out_path):
    """Coarse layers from one code, fine layers from another; writes mixed image and sheet."""
    cfg = _config(ctx, generator=generator)
    gen = load(cfg.adapters.generator, registry_path=cfg.adapters.registry)
    wc, wf = _load_w(coarse_path), _load_w(fine_path)
    with torch.no_grad():
        mixed = mix(wc, wf, gen, split_layer)
        row = [gen.generate(wc), gen.generate(wf), mixed]
    out = save_png(mixed, out_path)
    sheet = contact_sheet([row], Path(out).with_name(Path(out).stem + "_sheet.png"))
    click.echo(out)
    click.echo(sheet)


@main.command("eval")
@click.option("--pairs", required=True, type=click.Path(),
              help="JSONL of {task, result, reference} image paths.")
@click.option("--metrics", default="clip,bd,vol", show_default=True)
@click.option("--encoder", default=None)
@click.option("--figure", "figure_path", type=click.Path(), default=None)
@click.pass_context
@guarded
def eval_cmd(ctx, pairs, metrics, encoder, figure_path):
    """Metric table as CSV with columns task, metric, value, bins."""
    cfg = _config(ctx, image_encoder=encoder)
    records = read_manifest_pairs(pairs)
    names = [m.strip() for m in metrics.split(",") if m.strip()]
    enc = load(cfg.adapters.image_encoder, role="image", registry_path=cfg.adapters.registry) if "clip" in names else None
    rows = evaluate_pairs(records, names, enc, load=load_png)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["task", "metric", "value", "bins"], lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({**r, "value": f"{r['value']:.6g}"})
    click.echo(buf.getvalue(), nl=False)
    if figure_path:
        plotting.plot_metric_bars(rows, figure_path)


def read_manifest_pairs(path) -> list[dict]:
    records = read_manifest(path)
    for rec in records:
        for key in ("result", "reference"):
            if key not in rec:
                raise ConfigError(f"pair record is missing {key!r}")
            if not Path(rec[key]).is_absolute():
                rec[key] = str(Path(path).parent / rec[key])
            if not Path(rec[key]).exists():
                raise MissingArtifactError(f"image {rec[key]} not found")
    return records


@main.command("dump-trace")
@click.argument("run_dir", type=click.Path())
@click.option("--mapper", is_flag=True, help="Dump the (h, j, mu, lambda_p) trajectory instead of losses.")
@guarded
def dump_trace(run_dir, mapper):
    """Print a run's per-iteration trace as CSV."""
    path = Path(run_dir) / ("mapper_trajectory.csv" if mapper else "trace.csv")
    if not path.exists():
        raise MissingArtifactError(f"{path} not found")
    click.echo(path.read_text(), nl=False)


if __name__ == "__main__":
    main()
