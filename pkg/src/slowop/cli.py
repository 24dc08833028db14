"""Batch experiment runner.

Every verb takes parameter grids (``--h 0:0.6:0.02`` or ``--N 4,5,6``), and a
``--config`` file of ``key=value`` lines overrides the flags.  Results are cached
by a hash of the configuration in ``$SLOWOP_CACHE_DIR`` (default
``~/.cache/slowop``).

Exit status: 0 success, 1 failed verification, 2 invalid configuration,
3 numerical failure at one or more grid points.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import dmrg, dynamics, exact, probes
from .ising import IsingParams, build_h_loc, hamiltonian_mpo
from .opmps import TI_GAUGE, LOCAL_GAUGE, entropy_profile, from_vector

log = logging.getLogger("slowop")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

EXPERIMENTS = ("find", "overlap_sweep", "scaling_sweep", "evolve", "otoc", "entropy", "transition")
VERBS = {
    "find": "find",
    "sweep-overlap": "overlap_sweep",
    "sweep-scaling": "scaling_sweep",
    "evolve": "evolve",
    "otoc": "otoc",
    "entropy": "entropy",
    "transition": "transition",
}
LIST_KEYS = ("g", "h", "N", "L", "times", "bond_dims")
INT_KEYS = ("N", "L", "bond_dims")


class ConfigError(ValueError):
    pass


def parse_values(text: str, as_int: bool = False) -> list:
    """``"0:0.6:0.02"`` (inclusive range), ``"4,5,6"`` or a single value."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ConfigError(f"bad range {text!r}; expected start:stop:step")
            start, stop, step = parts
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = [round(start + i * step, 12) for i in range(count)]
        else:
            vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r}: {exc}") from exc
    if not vals:
        raise ConfigError(f"empty list {text!r}")
    if as_int:
        if any(v != int(v) for v in vals):
            raise ConfigError(f"expected integers in {text!r}")
        return [int(v) for v in vals]
    return vals


@dataclass
class ExperimentConfig:
    experiment: str
    definition: str = "local"
    backend: str = "exact"
    g: list = field(default_factory=lambda: [1.05])
    h: list = field(default_factory=lambda: [0.1])
    N: list = field(default_factory=lambda: [4])
    L: list = field(default_factory=list)
    times: list = field(default_factory=lambda: [0.0, 1.0])
    K: int = 50
    seed: int = 0
    e_bar: str = "1000"
    method: str = "exact"
    axis: str = "z"
    site: str = "center"
    threshold: float = 0.05
    observable: str = "slowest"
    bond_dims: list = field(default_factory=list)
    inner_tol: float | None = None
    outer_tol: float | None = None
    max_sweeps: int = 100
    workers: int = 1
    output: str | None = None

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.definition not in ("local", "ti"):
            raise ConfigError("definition must be local or ti")
        if self.backend not in ("exact", "dmrg"):
            raise ConfigError("backend must be exact or dmrg")
        for key in ("g", "h", "N"):
            if not getattr(self, key):
                raise ConfigError(f"grid {key} is empty")
        if any(n < 1 for n in self.N):
            raise ConfigError("N must be >= 1")
        if self.backend == "exact":
            cap = exact.LOCAL_CAP if self.definition == "local" else exact.TI_CAP
            if max(self.N) > cap:
                raise ConfigError(f"exact backend supports N <= {cap} for {self.definition}")
        if self.backend == "dmrg" and min(self.N) < 2:
            raise ConfigError("dmrg backend needs N >= 2")
        if self.method not in ("exact", "stochastic"):
            raise ConfigError("method must be exact or stochastic")
        if self.axis not in ("x", "y", "z"):
            raise ConfigError("axis must be x, y or z")
        if self.observable not in ("slowest", "optimized_diffusion"):
            raise ConfigError("observable must be slowest or optimized_diffusion")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.e_bar != "auto":
            try:
                if float(self.e_bar) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError("e_bar must be a positive number or auto") from None
        if self.experiment in ("evolve", "otoc"):
            if not self.L:
                raise ConfigError(f"{self.experiment} needs L")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise ConfigError("times must be strictly increasing")
        if self.bond_dims and any(b <= a for a, b in zip(self.bond_dims, self.bond_dims[1:])):
            raise ConfigError("bond_dims must be strictly increasing")

    def digest(self) -> str:
        payload = {k: v for k, v in dataclasses.asdict(self).items() if k not in ("output", "workers")}
        payload["version"] = __version__
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def apply_overrides(cfg: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    names = {f.name: f for f in dataclasses.fields(cfg)}
    for key, raw in pairs.items():
        key = key.strip().replace("-", "_")
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        if key in LIST_KEYS:
            value = parse_values(raw, as_int=key in INT_KEYS)
        elif key in ("K", "seed", "max_sweeps", "workers"):
            try:
                value = int(raw)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
        elif key in ("threshold", "inner_tol", "outer_tol"):
            try:
                value = float(raw)
            except ValueError:
                raise ConfigError(f"{key} must be a number, got {raw!r}") from None
        else:
            value = str(raw).strip()
        setattr(cfg, key, value)
    return cfg


def read_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    pairs = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


# -- solving ------------------------------------------------------------------------------


def _schedule(cfg: ExperimentConfig) -> dmrg.SweepSchedule:
    base = dmrg.SweepSchedule.local_default() if cfg.definition == "local" else dmrg.SweepSchedule.ti_default()
    return dmrg.SweepSchedule(
        cfg.bond_dims or base.bond_dims,
        inner_tol=cfg.inner_tol or base.inner_tol,
        outer_tol=cfg.outer_tol or base.outer_tol,
        max_sweeps=cfg.max_sweeps,
    )


def solve_point(cfg: ExperimentConfig, params: IsingParams, N: int):
    """``(SlowestResult, OperatorMPS or None)`` for one grid point."""
    if cfg.backend == "exact":
        res = exact.find_local(params, N) if cfg.definition == "local" else exact.find_ti(params, N)
        return res, None
    build = dmrg.build_local_effective if cfg.definition == "local" else dmrg.build_ti_effective
    run = dmrg.minimize(build(params, N), _schedule(cfg), seed=cfg.seed)
    if not run.converged:
        log.warning("DMRG did not converge at g=%s h=%s N=%s", params.g, params.h, N)
    return run.result, run.mps


def _grid(cfg: ExperimentConfig):
    return [(g, h, N) for g in cfg.g for h in cfg.h for N in cfg.N]


def _point_task(args):
    fn, cfg, point = args
    start = time.perf_counter()
    try:
        rows = fn(cfg, *point)
        return rows, None, time.perf_counter() - start
    except Exception as exc:  # reported as an error row, the sweep continues
        log.exception("grid point %s failed", point)
        return [], f"{type(exc).__name__}: {exc}", time.perf_counter() - start


def _map_points(fn, cfg: ExperimentConfig, points):
    tasks = [(fn, cfg, p) for p in points]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_point_task, tasks))
    return [_point_task(t) for t in tasks]


def _find_rows(cfg, g, h, N):
    res, mps = solve_point(cfg, IsingParams(g, h), N)
    row = {
        "g": g,
        "h": h,
        "N": N,
        "definition": res.definition,
        "backend": cfg.backend,
        "lambda": res.lam,
        "residuals": {k: v for k, v in res.residuals.items() if k != "wall_time"},
    }
    if res.vector is not None:
        row["degenerate"] = res.degenerate
        row["coeffs"] = json.loads(res.to_json())["coeffs"]
    if mps is not None:
        row["bond_dims"] = mps.bond_dims
    return [row]


def _overlap_rows(cfg, g, h, N):
    params = IsingParams(g, h)
    res, _ = solve_point(cfg, params, N)
    if res.vector is None:
        raise exact.SolverError("overlaps need the operator coefficients; use N <= 10")
    rows = []
    if cfg.definition == "local":
        O = res.operator()
        for tag in probes.PROBE_TAGS:
            if tag in ("diffusion_mode", "energy_flux") and N < 2:
                continue
            val = probes.overlap(O, probes.window_probe(tag, params, N))
            rows.append({"g": g, "h": h, "N": N, "probe": tag, "variant": probes.LOCAL_WINDOW, "value": val})
    else:
        L = max(cfg.L) if cfg.L else 2 * N + 3
        O = res.on_chain(L)
        for tag in probes.PROBE_TAGS:
            if tag in ("diffusion_mode", "energy_flux") and N < 2:
                continue
            val = probes.overlap(O, probes.ti_probe(tag, params, N, L))
            rows.append({"g": g, "h": h, "N": N, "probe": tag, "variant": probes.TRANSLATION_INVARIANT, "value": val})
    return rows


def _scaling_rows(cfg, g, h, N):
    params = IsingParams(g, h)
    if cfg.observable == "optimized_diffusion":
        lam = probes.optimized_diffusion_mode(params, N).lam
    else:
        lam = solve_point(cfg, params, N)[0].lam
    return [{"g": g, "h": h, "N": N, "lambda": lam}]


def _operator_for(cfg, params, N, L):
    res, _ = solve_point(cfg, params, N)
    if res.vector is None:
        raise exact.SolverError("dynamics needs the operator coefficients; use N <= 10")
    return (res.operator() if cfg.definition == "local" else res.on_chain(L)), res


def _evolve_rows(cfg, g, h, N):
    params = IsingParams(g, h)
    rows = []
    for L in cfg.L:
        O, _ = _operator_for(cfg, params, N, L)
        if cfg.method == "exact":
            ts = dynamics.exact_correlator(O, params, L, cfg.times)
        else:
            e_bar = "auto" if cfg.e_bar == "auto" else float(cfg.e_bar)
            ts = dynamics.two_point_correlator(
                O, params, L, cfg.times, K=cfg.K, seed=cfg.seed, cfg=dynamics.ChebyshevConfig(e_bar=e_bar)
            )
        for k, t in enumerate(ts.times):
            rows.append(
                {
                    "g": g,
                    "h": h,
                    "N": N,
                    "L": L,
                    "t": t,
                    "value": ts.values[k],
                    "imag": ts.imag[k] if ts.imag is not None else "",
                    "stderr": ts.stderr[k] if ts.stderr is not None else "",
                }
            )
    return rows


def _otoc_rows(cfg, g, h, N):
    params = IsingParams(g, h)
    rows = []
    for L in cfg.L:
        O, _ = _operator_for(cfg, params, N, L)
        site = int(cfg.site) if cfg.site.lstrip("-").isdigit() else cfg.site
        ts = dynamics.otoc(O, cfg.axis, site, params, L, cfg.times, N=N)
        for t, v in zip(ts.times, ts.values):
            rows.append({"g": g, "h": h, "N": N, "L": L, "axis": cfg.axis, "site": cfg.site, "t": t, "value": v})
    return rows


def _entropy_rows(cfg, g, h, N):
    res, mps = solve_point(cfg, IsingParams(g, h), N)
    if mps is None:
        gauge = LOCAL_GAUGE if cfg.definition == "local" else TI_GAUGE
        mps = from_vector(res.vector, gauge=gauge)
    D = max(cfg.bond_dims) if cfg.bond_dims else None
    prof = entropy_profile(mps.normalized(), D=D)
    bound = prof.bound()
    return [
        {"g": g, "h": h, "N": N, "cut": int(c), "entropy": s, "bound": b, "max_bound": mb}
        for c, s, b, mb in zip(prof.cuts, prof.entropy, bound, prof.max_bound)
    ]


def _transition_rows(cfg, g, h, N):
    raise NotImplementedError  # handled per (g, N) in _run_transition


ROW_FUNCS = {
    "find": _find_rows,
    "overlap_sweep": _overlap_rows,
    "scaling_sweep": _scaling_rows,
    "evolve": _evolve_rows,
    "otoc": _otoc_rows,
    "entropy": _entropy_rows,
}


# -- output ---------------------------------------------------------------------------------


def _csv_text(rows: list[dict], meta: dict) -> str:
    buf = io.StringIO()
    for k in sorted(meta):
        buf.write(f"# {k}={meta[k]}\n")
    if rows:
        fields = []
        for r in rows:
            for k in r:
                if k not in fields:
                    fields.append(k)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _with_slopes(rows: list[dict]) -> list[dict]:
    out = []
    for key in sorted({(r["g"], r["h"]) for r in rows}):
        series = {r["N"]: r["lambda"] for r in rows if (r["g"], r["h"]) == key}
        slopes = {}
        try:
            slopes = {rec.N_pair[1]: rec.instant_slope for rec in probes.instant_slopes(series)}
        except probes.ProbeError as exc:
            log.warning("no slopes for g=%s h=%s: %s", key[0], key[1], exc)
        for N in sorted(series):
            out.append({"g": key[0], "h": key[1], "N": N, "lambda": series[N], "instant_slope": slopes.get(N, "")})
    return out


def _run_transition(cfg: ExperimentConfig):
    rows, errors = [], []
    pairs = [(g, N) for g in cfg.g for N in cfg.N]
    for g, N in pairs:
        records = {}
        for h in cfg.h:
            try:
                recs = _overlap_rows(dataclasses.replace(cfg, definition="ti"), g, h, N)
            except Exception as exc:
                errors.append({"g": g, "h": h, "N": N, "error": f"{type(exc).__name__}: {exc}"})
                continue
            records[h] = [
                probes.OverlapRecord(g, h, N, probes.ProbeKind(r["probe"], r["variant"]), r["value"]) for r in recs
            ]
        if not records:
            continue
        h_star = probes.detect_transition(records, cfg.threshold)
        rows.append({"N": N, "g": g, "threshold": cfg.threshold, "h_star": "" if h_star is None else h_star})
    return rows, errors


def run(cfg: ExperimentConfig, use_cache: bool = True, out=None) -> int:
    """Run an experiment and write its CSV/JSON output; returns the exit status."""
    out = out or sys.stdout
    cfg.validate()
    digest = cfg.digest()
    cache_dir = Path(os.environ.get("SLOWOP_CACHE_DIR", Path.home() / ".cache" / "slowop"))
    cache_file = cache_dir / f"{cfg.experiment}-{digest}.out"
    if use_cache and cache_file.exists():
        log.info("cache hit %s", cache_file)
        _emit(cache_file.read_text(), cfg, out)
        return EXIT_OK
    meta = {"config_hash": digest, "version": __version__, "experiment": cfg.experiment}
    start = time.perf_counter()
    if cfg.experiment == "transition":
        rows, errors = _run_transition(cfg)
    else:
        rows, errors = [], []
        for point, (prow, err, _) in zip(_grid(cfg), _map_points(ROW_FUNCS[cfg.experiment], cfg, _grid(cfg))):
            if err is None:
                rows.extend(prow)
            else:
                errors.append({"g": point[0], "h": point[1], "N": point[2], "error": err})
        if cfg.experiment == "scaling_sweep":
            rows = _with_slopes(rows)
    for r in rows + errors:
        r["config_hash"] = digest
    log.info("wall time %.2fs", time.perf_counter() - start)
    if cfg.experiment == "find":
        text = json.dumps({**meta, "results": rows, "errors": errors}, indent=1) + "\n"
    else:
        text = _csv_text(rows + errors, meta)
    if errors:
        _emit(text, cfg, out)
        return EXIT_NUMERIC
    if use_cache:
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(text)
    _emit(text, cfg, out)
    return EXIT_OK


def _emit(text: str, cfg: ExperimentConfig, out) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        out.write(text)


# -- verify -----------------------------------------------------------------------------------


def _check(name, err, tol, report):
    ok = bool(err <= tol)
    report.append((name, ok, err, tol))
    return ok


def verify(corrupt_mpo: bool = False, out=None) -> int:
    """Cross-backend oracle checks; exit 1 if any fails."""
    out = out or sys.stdout
    report = []
    params = IsingParams(1.05, 0.1)

    mpo = hamiltonian_mpo(params, 5)
    if corrupt_mpo:
        sites = list(mpo.sites)
        sites[2] = sites[2].copy()
        sites[2][2, 0] = sites[2][2, 0] + 0.1 * np.eye(2)
        mpo = dataclasses.replace(mpo, sites=tuple(sites))
    err = np.abs(mpo.contract() - build_h_loc(params, 5).to_dense()).max()
    _check("hamiltonian MPO vs dense", err, 1e-12, report)

    K = dmrg.mpo_to_dense(dmrg.commutator_mpo(params, 3))
    C = exact.commutator_matrix(build_h_loc(params, 3), np.arange(64), 3, 0).toarray()
    _check("commutator MPO vs Pauli algebra", np.abs(K - C).max(), 1e-12, report)

    for label, build, find, N in (
        ("local", dmrg.build_local_effective, exact.find_local, 4),
        ("ti", dmrg.build_ti_effective, exact.find_ti, 3),
    ):
        sched = dmrg.SweepSchedule([64], inner_tol=1e-10)
        lam_d = dmrg.minimize(build(params, N), sched).result.lam
        lam_e = find(params, N).lam
        _check(f"DMRG vs exact ({label}, N={N})", abs(lam_d - lam_e) / lam_e, 1e-6, report)

    L = 8
    O = exact.find_local(params, 4).operator()
    ts = np.linspace(0, 4, 9)
    ex = dynamics.exact_correlator(O, params, L, ts)
    st = dynamics.two_point_correlator(O, params, L, ts, K=50, seed=7, cfg=dynamics.ChebyshevConfig(e_bar="auto"))
    _check("stochastic vs exact correlator (L=8, K=50)", np.abs(ex.values - st.values).max(), 5e-2, report)

    failed = 0
    for name, ok, err, tol in report:
        out.write(f"{'PASS' if ok else 'FAIL'}  {name}  error={err:.3e}  tol={tol:.1e}\n")
        failed += not ok
    return EXIT_VERIFY if failed else EXIT_OK


# -- argparse -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slowop", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        s = sub.add_parser(verb)
        s.add_argument("--config", help="key=value file; its entries override flags")
        s.add_argument("--definition", choices=("local", "ti"))
        s.add_argument("--backend", choices=("exact", "dmrg"))
        for key in ("g", "h", "N", "L", "times", "bond-dims"):
            s.add_argument(f"--{key}", help="value, list a,b,c or range start:stop:step")
        s.add_argument("--K", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--e-bar", help="number or auto")
        s.add_argument("--method", choices=("exact", "stochastic"))
        s.add_argument("--axis", choices=("x", "y", "z"))
        s.add_argument("--site")
        s.add_argument("--threshold", type=float)
        s.add_argument("--observable", choices=("slowest", "optimized_diffusion"))
        s.add_argument("--inner-tol", type=float)
        s.add_argument("--outer-tol", type=float)
        s.add_argument("--max-sweeps", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--output", "-o")
        s.add_argument("--no-cache", action="store_true")
    v = sub.add_parser("verify")
    v.add_argument("--corrupt-mpo", action="store_true", help="negative control")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(VERBS[args.verb])
    flags = {}
    for f in dataclasses.fields(cfg):
        if f.name == "experiment":
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            flags[f.name] = value
    apply_overrides(cfg, {k: str(v) for k, v in flags.items()})
    if args.config:
        apply_overrides(cfg, read_config_file(args.config))
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "verify":
        return verify(corrupt_mpo=args.corrupt_mpo)
    try:
        cfg = config_from_args(args)
        return run(cfg, use_cache=not args.no_cache)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
