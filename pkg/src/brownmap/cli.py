"""Command-line driver: ``brownmap sample|run|snake|enumerate-small``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    InsufficientData,
    MapSession,
    SmallMapError,
    ball_profile,
    confluence_stat,
    dimension_fit,
    fit_window,
    network_search,
    star_census,
    strong_convergence_probe,
)
from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .excursion import sample_excursion
from .geodesics import EnumerationOverflow, bfs_dag, enumerate_geodesics
from .labels import d_star_chain_oracle, d_star_matrix, root_distance_check, sample_labels
from .maps import (
    MapFormatError,
    enumerate_small,
    label_distance_identity,
    load_qmap,
    read_qm1_header,
    sample_quadrangulation,
    save_qmap,
)

log = logging.getLogger("brownmap")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


class DataError(RuntimeError):
    """Missing or unusable input data."""


def map_path(root: str | Path, n: int, seed: int) -> Path:
    return Path(root) / f"qm_n{n}_s{seed}.qm1"


class RecordWriter:
    """JSON-lines stream (flushed per record) plus an aggregated CSV table."""

    def __init__(self, out: Path, stem: str):
        out.mkdir(parents=True, exist_ok=True)
        self.jsonl = out / f"{stem}.jsonl"
        self.csv = out / f"{stem}.csv"
        self._fh = open(self.jsonl, "w")
        self.rows: list[dict] = []

    def emit(self, rec: dict) -> None:
        self._fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")
        self._fh.flush()
        self.rows.append(rec)

    def close(self) -> None:
        self._fh.close()
        flat = [_flatten(r) for r in self.rows]
        keys = sorted({k for r in flat for k in r})
        with open(self.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(flat)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serialisable: {type(v)}")


def _flatten(rec: dict) -> dict:
    out = {}
    for k, v in rec.items():
        if k == "params":
            out.update({f"p_{pk}": json.dumps(pv, default=_jsonable) if isinstance(pv, (dict, list)) else pv
                        for pk, pv in v.items()})
        elif isinstance(v, (dict, list, tuple, np.ndarray)):
            out[k] = json.dumps(v, default=_jsonable)
        else:
            out[k] = v
    return out


def base_record(cfg: ExperimentConfig, experiment: str, n: int | None, seed: int | None) -> dict:
    return {"experiment": experiment, "n": n, "seed": seed, "params": cfg.params(), "version": __version__}


# --------------------------------------------------------------------------
# experiments on one map


def _fit_record(radii, counts, window) -> dict:
    try:
        fit = dimension_fit(radii, counts, window)
    except InsufficientData as err:
        return {"status": "abstained", "reason": str(err)}
    return {"status": "ok", "exponent": fit.exponent, "stderr": fit.stderr,
            "window": list(fit.window), "radii": fit.radii.tolist(), "counts": fit.counts.tolist()}


def _window(cfg: ExperimentConfig, n: int, diam: int) -> tuple[float, float]:
    lo, hi = fit_window(n, diam)
    return (cfg.fit_lo if cfg.fit_lo is not None else lo, cfg.fit_hi if cfg.fit_hi is not None else hi)


def exp_identity(cfg, q, tree, seed, s):
    if tree is not None:
        dev = label_distance_identity(q, tree)
    else:
        # a loaded map still carries its labels, the pointed vertex one below the minimum
        dev = int(np.abs(s.pointed_dag.dist - (q.labels - q.labels[q.pointed])).max())
    yield {"status": "ok", "max_deviation": dev}


def exp_confluence(cfg, q, tree, seed, s):
    res = confluence_stat(q, s, cfg.eps, cfg.samples, seed)
    yield {"status": "ok", "proportion": res.proportion, "ci": list(res.ci), "hits": res.hits,
           "samples": res.samples, "diameter": res.diameter, **{f"eta_{k}": v for k, v in res.eta_summary.items()}}


def exp_dimension(cfg, q, tree, seed, s):
    rng = np.random.default_rng(seed)
    x = int(rng.integers(q.n_vertices))
    lo, hi = _window(cfg, q.n, s.diameter)
    radii = np.arange(1, int(hi) + 1)
    yield {"x": x, **_fit_record(radii, ball_profile(q, x, radii, s), (lo, hi))}


def exp_cutlocus(cfg, q, tree, seed, s):
    rng = np.random.default_rng(seed)
    x = int(rng.integers(q.n_vertices))
    lo, hi = _window(cfg, q.n, s.diameter)
    radii = np.arange(1, int(hi) + 1)
    for mode in ("weak", "strong"):
        counts = ball_profile(q, x, radii, s, what=mode, delta_beta=cfg.beta)
        yield {"x": x, "mode": mode, **_fit_record(radii, counts, (lo, hi))}


def exp_networks(cfg, q, tree, seed, s):
    found = network_search(q, anchors=cfg.anchors, radius=cfg.radius, delta_beta=cfg.beta,
                           seed=seed, session=s)
    for (j, k), reps in sorted(found.items()):
        ex = reps[0].to_record() if reps else None
        yield {"status": "ok", "j": j, "k": k, "count": len(reps), "example": ex}


def exp_stars(cfg, q, tree, seed, s):
    rng = np.random.default_rng(seed)
    verts = rng.integers(q.n_vertices, size=min(cfg.samples, q.n_vertices))
    sc = star_census(q, cfg.eps, vertices=verts, balls=20, seed=seed, session=s)
    yield {"status": "ok", "length": sc.length, "checked": sc.checked, "centres": int(sc.centres.size),
           "centre_fraction": sc.centre_fraction, "emptiness": sc.emptiness}


def exp_convergence(cfg, q, tree, seed, s):
    rng = np.random.default_rng(seed)
    x = int(rng.integers(q.n_vertices))
    dag = bfs_dag(q, x)
    far = np.flatnonzero(dag.dist >= 8)
    if far.size == 0:
        yield {"status": "abstained", "reason": "no vertex at distance >= 8"}
        return
    y = int(rng.choice(far))
    try:
        g = enumerate_geodesics(dag, y, 1)[0]
    except EnumerationOverflow as err:
        g = err.paths[0]
    r = max(1, int(round(q.n ** 0.25 / 10)))
    res = strong_convergence_probe(q, g, r, cfg.samples, seed)
    yield {"status": "ok", "x": x, "y": y, "length": len(g) - 1, **res}


RUNNERS = {
    "identity": exp_identity,
    "confluence": exp_confluence,
    "dimension": exp_dimension,
    "cutlocus": exp_cutlocus,
    "networks": exp_networks,
    "stars": exp_stars,
    "convergence": exp_convergence,
}
assert set(RUNNERS) == set(EXPERIMENTS)


# --------------------------------------------------------------------------
# subcommands


def cmd_sample(cfg: ExperimentConfig) -> list[Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in cfg.seed_list():
        p = map_path(out, cfg.n, seed)
        if p.exists():
            try:
                h = read_qm1_header(p)
                if h["n"] == cfg.n and h["seed"] == seed:
                    paths.append(p)
                    continue
            except MapFormatError:
                pass
        _, q = sample_quadrangulation(cfg.n, seed)
        save_qmap(q, p)
        log.info("wrote %s", p)
        paths.append(p)
    return paths


def _load_map(cfg: ExperimentConfig, seed: int):
    if cfg.maps_dir:
        p = map_path(cfg.maps_dir, cfg.n, seed)
        if p.exists():
            q = load_qmap(p)
            return None, q
        if not cfg.sample_inline:
            raise DataError(f"missing map file {p}")
    return sample_quadrangulation(cfg.n, seed)


def cmd_run(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    writer = RecordWriter(out, cfg.experiment)
    cfg.write(out / f"{cfg.experiment}.ini")
    try:
        if cfg.experiment == "dimension" and cfg.fixture == "powerlaw":
            radii = np.array([1, 2, 4, 8, 16])
            rec = base_record(cfg, "dimension", None, None)
            rec.update({"fixture": "powerlaw", **_fit_record(radii, radii.astype(float) ** 4, None)})
            writer.emit(rec)
            return writer.jsonl
        runner = RUNNERS[cfg.experiment]
        for seed in cfg.seed_list():
            tree, q = _load_map(cfg, seed)
            s = MapSession(q, tree)
            for stat in runner(cfg, q, tree, seed, s):
                rec = base_record(cfg, cfg.experiment, q.n, seed)
                rec.update(stat)
                writer.emit(rec)
    finally:
        writer.close()
    return writer.jsonl


def cmd_snake(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    writer = RecordWriter(out, "snake")
    cfg.write(out / "snake.ini")
    try:
        for seed in cfg.seed_list():
            ex = sample_excursion(cfg.m, seed)
            lf = sample_labels(ex, seed)
            rng = np.random.default_rng(seed)
            ts = rng.integers(0, cfg.m + 1, size=min(100, cfg.m + 1))
            res = np.abs(root_distance_check(lf, ts, cfg.tol, link_cost=cfg.link_cost))
            rec = base_record(cfg, "snake", None, seed)
            rec.update({"m": cfg.m, "status": "ok", "median_abs_residual": float(np.median(res)),
                        "max_abs_residual": float(res.max()), "radius": lf.radius,
                        "relative_median": float(np.median(res) / lf.radius) if lf.radius > 0 else 0.0})
            if cfg.oracle:
                if cfg.m > 64:
                    raise ConfigError("oracle mode needs m <= 64")
                diff = np.abs(d_star_matrix(lf, cfg.tol, cfg.link_cost)
                              - d_star_chain_oracle(lf, cfg.tol, cfg.link_cost))
                rec["oracle_max_diff"] = float(diff.max())
            writer.emit(rec)
    finally:
        writer.close()
    return writer.jsonl


def cmd_enumerate_small(cfg: ExperimentConfig) -> Path:
    if cfg.n > 3:
        raise ConfigError("enumerate-small supports n <= 3")
    writer = RecordWriter(Path(cfg.out), "enumerate_small")
    try:
        for n in range(1, cfg.n + 1):
            summary = enumerate_small(n)
            summary["status"] = "ok" if (summary["invariants_ok"]
                                         and summary["distinct_pointed"] == summary["inputs"]
                                         and summary["distinct_rooted"] == summary["expected_rooted"]) else "fail"
            rec = base_record(cfg, "enumerate_small", n, None)
            rec.update(summary)
            writer.emit(rec)
    finally:
        writer.close()
    return writer.jsonl


COMMANDS = {"sample": cmd_sample, "run": cmd_run, "snake": cmd_snake, "enumerate-small": cmd_enumerate_small}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brownmap", description="Random quadrangulation and Brownian map experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key-value config file; flags override it")
        p.add_argument("--n", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--seeds", type=int, help="number of seeds")
        p.add_argument("--seed-base", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--link-cost", choices=("label", "zero"))
        p.add_argument("--anchors", type=int)
        p.add_argument("--radius", type=int)
        p.add_argument("--fixture")
        p.add_argument("--maps-dir")
        p.add_argument("--out")
        p.add_argument("--experiment")
        p.add_argument("--oracle", action="store_true", default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.read(args.config) if args.config else ExperimentConfig()
    return cfg.replace(n=args.n, m=args.m, seeds=args.seeds, seed_base=args.seed_base, samples=args.samples,
                       eps=args.eps, beta=args.beta, tol=args.tol, link_cost=args.link_cost,
                       anchors=args.anchors, radius=args.radius, fixture=args.fixture,
                       maps_dir=args.maps_dir, out=args.out, experiment=args.experiment, oracle=args.oracle)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, TypeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, MapFormatError, SmallMapError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    if isinstance(result, list):
        for p in result:
            print(p)
    else:
        print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
