"""Command-line harness: ``cvbl run|validate|summarize``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import KDE_METHOD, circular_kde, error_metrics, in_hdr, kde_grid, snr_db, summarize_chain
from .chain import GibbsConfig
from .config import ExperimentConfig, load_config
from .cvbl_sparse import cvbl_sparse_run
from .cvbl_transform import cvbl_transform_run
from .errors import ConfigError
from .gsampler import CgConfig
from .lasso_baseline import AdmmConfig, default_lambda, lasso_admm_generalized, lasso_admm_sparse
from .linops import OperatorSpec, make_operator, make_sparsifier
from .randkit import GENERATOR_ALGORITHM, GENERATOR_VERSION, RngStream
from .rvbl import rvbl_run
from .signals import gen_observation, gen_signal

log = logging.getLogger("cvbl")

WORKERS_ENV = "CVBL_WORKERS"


def _fmt(v) -> str:
    return repr(float(v))


def _header(fh, cfg_hash, extra=()):
    fh.write(f"# config_hash={cfg_hash}\n")
    fh.write(f"# generator={GENERATOR_ALGORITHM} ({GENERATOR_VERSION})\n")
    for line in extra:
        fh.write(f"# {line}\n")


def _write_complex(path, cfg_hash, values, index_name, extra=()):
    with open(path, "w", newline="") as fh:
        _header(fh, cfg_hash, extra)
        w = csv.writer(fh)
        w.writerow([index_name, "re", "im", "mag", "phase"])
        for j, v in enumerate(values):
            w.writerow([j, _fmt(v.real), _fmt(v.imag), _fmt(abs(v)), _fmt(np.angle(v))])


def _write_json(path, cfg_hash, payload):
    payload = {"config_hash": cfg_hash, **payload}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def build_problem(cfg: ExperimentConfig):
    """Ground truth, operator, sparsifier, data and noise variance for one cell."""
    d = cfg.data
    dims = cfg.dims
    real = d["sampler"] == "rvbl"
    truth = gen_signal(d["signal"]["kind"], dims, d["signal"]["sparsity"], d["signal"]["signal_seed"], real=real)
    op = d["operator"]
    spec = OperatorSpec(op["kind"], dims, nu=op["nu"], mask_seed=op["mask_seed"], blur_sigma=op["blur_sigma"])
    F = make_operator(spec)
    L = make_sparsifier(cfg.sparsifier_kind, dims)
    y, sigma2 = gen_observation(truth, F, d["snr_db"], d["seeds"]["noise"], real_noise=real)
    return truth, F, L, y, sigma2


def gibbs_config(cfg: ExperimentConfig, sigma2: float) -> GibbsConfig:
    c, h = cfg["chain"], cfg["hyper"]
    return GibbsConfig(
        sigma2=sigma2,
        n_iter=c["N_M"],
        burn_in=c["B"],
        r=h["r"],
        delta=h["delta"],
        zero_threshold=c["zero_threshold"],
        eta_mode=h["eta_mode"],
        eta_hat=h["eta_hat"],
        n_s=c["n_s"],
        cg=CgConfig(rel_tol=c["cg_rel_tol"], max_iters=c["cg_max_iters"], preconditioner=c["preconditioner"]),
        phase_method=c["phase_method"],
    )


def _kde_pixels(cfg, truth):
    a = cfg["analysis"]
    if a["kde_pixels"] is not None:
        return list(a["kde_pixels"])
    count = min(a["kde_random_pixels"], truth.shape[0])
    rng = np.random.default_rng(a["kde_seed"])
    return sorted(int(p) for p in rng.choice(truth.shape[0], size=count, replace=False))


def _total_variation(v):
    return float(np.sum(np.abs(np.diff(v))))


def run_cell(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Run one experiment cell into ``out_dir`` and return its manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash
    d = cfg.data
    t0 = time.perf_counter()
    manifest = {
        "config_hash": h,
        "config": d,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        "generator": {"algorithm": GENERATOR_ALGORITHM, "version": GENERATOR_VERSION},
        "seeds": {"signal": d["signal"]["signal_seed"], "mask": d["operator"]["mask_seed"], **d["seeds"]},
        "files": [],
        "status": "running",
    }
    files = manifest["files"]

    def emit(name):
        files.append(name)
        return out_dir / name

    try:
        truth, F, L, y, sigma2 = build_problem(cfg)
        target_snr = float(d["snr_db"])
        manifest["sigma2"] = sigma2
        manifest["snr_db_target"] = target_snr
        manifest["snr_db"] = snr_db(F, truth, F.m, sigma2)
        noise = y - F.apply(truth)
        fz = F.apply(truth)
        manifest["snr_db_realized"] = float(10 * np.log10(np.vdot(fz, fz).real / np.vdot(noise, noise).real))

        _write_complex(emit("truth.csv"), h, truth, "pixel")
        _write_complex(emit("observation.csv"), h, y, "row", [f"sigma2={_fmt(sigma2)}", f"snr_db={target_snr}"])

        gcfg = gibbs_config(cfg, sigma2)
        stream = RngStream(d["seeds"]["chain"], d["seeds"]["stream_id"])
        sampler = d["sampler"]
        if sampler == "rvbl":
            result = rvbl_run(stream, y, F, L, gcfg)
        elif sampler == "cvbl_sparse":
            result = cvbl_sparse_run(stream, y, F, gcfg)
        else:
            result = cvbl_transform_run(stream, y, F, L, gcfg)
        manifest["chain_runtime_s"] = result.runtime
        result.to_csv(emit("chain.csv"), meta={"config_hash": h, "sampler": sampler})
        files.append("chain.json")

        with open(emit("eta_trace.csv"), "w", newline="") as fh:
            _header(fh, h, ["one row per iteration 1..N_M"])
            w = csv.writer(fh)
            w.writerow(["iteration", "eta_inv2"])
            for i, v in enumerate(result.eta_trace, start=1):
                w.writerow([i, _fmt(v)])
        with open(emit("tau2_mean.csv"), "w", newline="") as fh:
            _header(fh, h, ["posterior mean of tau2 per row of L"])
            w = csv.writer(fh)
            w.writerow(["index", "tau2_mean"])
            for i, v in enumerate(result.tau2_mean):
                w.writerow([i, _fmt(v)])

        beta = d["analysis"]["beta"]
        summary = summarize_chain(result, beta, truth)
        summary.write_pixels(emit("pixels.csv"), truth, [f"config_hash={h}", f"beta={beta}"])
        metrics = error_metrics(truth, mag_samples=result.magnitude, phase_samples=result.phase, beta=beta)

        grid = kde_grid(d["analysis"]["kde_grid"])
        kde_report = {}
        for p in _kde_pixels(cfg, truth):
            dens = circular_kde(result.phase[:, p], grid)
            with open(emit(f"kde_pixel_{p}.csv"), "w", newline="") as fh:
                _header(fh, h, [f"pixel={p}", f"kde={KDE_METHOD}"])
                w = csv.writer(fh)
                w.writerow(["angle", "density"])
                for a, v in zip(grid, dens):
                    w.writerow([_fmt(a), _fmt(v)])
            kde_report[str(p)] = {"true_phase": float(np.angle(truth[p])), "in_hdr_90": in_hdr(dens, grid, np.angle(truth[p]), 0.9)}

        baselines = {}
        bl = d["baselines"]
        if bl["lasso"] and sampler != "rvbl":
            eta_bar = summary.eta_mean
            for alpha in bl["alpha"]:
                lam = default_lambda(alpha, sigma2, eta_bar)
                acfg = AdmmConfig(lam=lam, rho=bl["rho"], max_iters=bl["max_iters"])
                if sampler == "cvbl_sparse":
                    z_hat, info = lasso_admm_sparse(y, F, acfg, return_info=True)
                else:
                    z_hat, info = lasso_admm_generalized(y, F, L, acfg, return_info=True)
                tag = f"{alpha:g}"
                _write_complex(emit(f"lasso_alpha_{tag}.csv"), h, z_hat, "pixel", [f"alpha={alpha}", f"lambda={_fmt(lam)}"])
                with open(emit(f"lasso_alpha_{tag}_trace.csv"), "w", newline="") as fh:
                    _header(fh, h, [f"alpha={alpha}"])
                    w = csv.writer(fh)
                    w.writerow(["iteration", "primal_residual", "dual_residual", "objective"])
                    for i, row in enumerate(zip(info.primal_residuals, info.dual_residuals, info.objective), start=1):
                        w.writerow([i, *map(_fmt, row)])
                baselines[tag] = {
                    "lambda": lam,
                    "iterations": info.iterations,
                    "outer_iterations": info.outer_iterations,
                    "outer_change": info.outer_change,
                    "total_variation_mag": _total_variation(np.abs(z_hat)),
                    **error_metrics(truth, estimate=z_hat),
                }

        _write_json(
            emit("summary.json"),
            h,
            {
                "sampler": sampler,
                "n_samples": result.n_samples,
                "posterior": summary.to_dict(),
                "metrics": metrics,
                "kde": kde_report,
                "kde_method": KDE_METHOD,
                "lasso": baselines,
                "rsm_iterations": int(np.sum(result.counters["rsm_used"])) if "rsm_used" in result.counters else 0,
            },
        )
        manifest["status"] = "complete"
    except Exception as exc:  # noqa: BLE001 - reported through the manifest and exit code
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        log.error("cell %s failed: %s", out_dir, manifest["error"])
    manifest["wall_clock_s"] = time.perf_counter() - t0
    _write_json(out_dir / "manifest.json", h, manifest)
    return manifest


def run_experiment(config_path, output_dir=None, workers=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return 2
    out = Path(output_dir or cfg["output_dir"])
    cells = cfg.cells()
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if len(cells) == 1:
        manifests = [run_cell(cells[0], out)]
    else:
        dirs = [out / f"cell_{i:03d}" for i in range(len(cells))]
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            manifests = list(pool.map(run_cell, cells, dirs))
        _write_json(
            out / "manifest.json",
            cfg.config_hash,
            {"cells": [{"dir": p.name, "config_hash": m["config_hash"], "status": m["status"]} for p, m in zip(dirs, manifests)]},
        )
    failed = [m for m in manifests if m["status"] != "complete"]
    for m in failed:
        print(f"error: {m.get('error')}", file=sys.stderr)
    return 1 if failed else 0


def validate_config(config_path) -> int:
    try:
        cfg = load_config(config_path)
        cells = cfg.cells()
    except ConfigError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return 2
    print(f"{config_path}: ok ({len(cells)} cell(s), config hash {cfg.config_hash})")
    return 0


def _file_hash(path: Path):
    if path.suffix == ".json":
        return json.loads(path.read_text()).get("config_hash")
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if line.startswith("# config_hash="):
                return line.strip().split("=", 1)[1]
    return None


def summarize(output_dir) -> int:
    """Print headline numbers of a finished run and check that all files share one config hash."""
    root = Path(output_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        print(f"{root}: no manifest.json", file=sys.stderr)
        return 2
    top = json.loads(manifest_path.read_text())
    dirs = [root / c["dir"] for c in top["cells"]] if "cells" in top else [root]
    status = 0
    for cell in dirs:
        manifest = json.loads((cell / "manifest.json").read_text())
        h = manifest["config_hash"]
        mismatched = [f for f in manifest.get("files", []) if (cell / f).exists() and _file_hash(cell / f) != h]
        missing = [f for f in manifest.get("files", []) if not (cell / f).exists()]
        print(f"[{cell}] status={manifest['status']} config_hash={h}")
        if mismatched or missing:
            status = 1
            for f in mismatched:
                print(f"  config hash mismatch: {f}")
            for f in missing:
                print(f"  missing: {f}")
        summary_path = cell / "summary.json"
        if summary_path.exists():
            s = json.loads(summary_path.read_text())
            m = s["metrics"]
            print(
                f"  snr_db={manifest.get('snr_db', float('nan')):.3f} samples={s['n_samples']} "
                f"mag_rel_l2={m['mag_rel_l2']:.4f} phase_mae_all={m['phase_mae_all']:.4f} "
                f"phase_mae_support={m['phase_mae_support']:.4f} coverage={m['coverage_fraction']:.3f} "
                f"eta_mean={s['posterior']['eta_mean']:.4g}"
            )
            for tag, b in s.get("lasso", {}).items():
                print(f"  lasso alpha={tag}: mag_rel_l2={b['mag_rel_l2']:.4f} tv={b['total_variation_mag']:.3f}")
        if manifest["status"] != "complete":
            status = 1
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cvbl", description="Bayesian LASSO samplers for complex-valued signals")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output-dir", help="override output_dir from the config")
    p_run.add_argument("-j", "--workers", type=int, help=f"parallel grid cells (default: ${WORKERS_ENV} or 1)")
    p_val = sub.add_parser("validate", help="parse and validate a config file without running it")
    p_val.add_argument("config")
    p_sum = sub.add_parser("summarize", help="print headline results of a finished run")
    p_sum.add_argument("output_dir")
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return run_experiment(args.config, args.output_dir, args.workers)
    if args.command == "validate":
        return validate_config(args.config)
    return summarize(args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
