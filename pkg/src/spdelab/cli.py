"""Config-driven command line producing CSV artifacts with seed provenance.

Subcommands
-----------
covariance          covariance curves on a lag grid -> one CSV per curve
simulate-field      stochastic field simulation -> one CSV per snapshot
simulate-particles  drift-diffusion-death particles -> one CSV per time
estimate            simulate one dataset and fit it -> observations + estimates
mc-study            replicated simulate/fit study -> summary + raw estimates

Usage::

    spdelab <command> (--config FILE | --preset NAME) --out DIR
                      [--seed U64] [--reps N]

Configs are JSON objects carrying ``"schema_version": 1``.  Validation is
fail-fast: unknown keys are rejected and missing fields are reported by
name.  Bundled presets (``fig1`` .. ``fig4``, ``figB6-fp``, ``figB6-fick``,
``table2``) hold the configs of the standard demonstration runs.

Every run writes its CSV artifacts and then ``manifest.json`` (atomically,
last) recording the command, the full config, the master seed, the package
version, the wall time, and the SHA-256 of every artifact.  CSV floats
carry 17 significant digits, so runs with the same config and seed produce
byte-identical CSV files; only the manifest's wall time varies.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import (
    CovarianceSpec,
    Exponential,
    MaternKernel,
    PowerLaw,
    TransformError,
    cov_by_transform,
    cov_exp_kernel_1d,
    frac_reaction_cov_1d,
    frac_reaction_cov_2d,
    generalized_matern_cov,
    matern_cov,
)
from .estimation import (
    SUMMARY_PARAMS,
    Bounds,
    StudyConfig,
    fit,
    mc_study,
    simulate_observations,
    splitmix64,
)
from .fields import (
    BistableReaction,
    DriftSpec,
    Fickian,
    FokkerPlanck,
    FractionalSpectral,
    Grid,
    KernelConvolution,
    Laplacian,
    LinearReaction,
    SimConfig,
    simulate,
    steady_state_deterministic,
)
from .particles import (
    DiracAt,
    LevyParams,
    ModelParams,
    UniformDisc,
    exact_gaussian_transition,
    init as init_particles,
    step_euler,
)
from .pointprocess import Window

__all__ = ["ConfigError", "main"]

SCHEMA_VERSION = 1


class ConfigError(Exception):
    """A problem with the run configuration (file, schema, or flags)."""


# ---------------------------------------------------------------------------
# Config field access (pop-based so leftovers expose unknown keys)
# ---------------------------------------------------------------------------


def _join(where: str, key: str) -> str:
    return f"{where}.{key}" if where else key


def _pop(d: dict, key: str, where: str, required: bool = True, default=None):
    if key in d:
        return d.pop(key)
    if required:
        raise ConfigError(f"missing required field '{_join(where, key)}'")
    return default


def _reject_unknown(d: dict, where: str) -> None:
    if d:
        names = ", ".join(sorted(str(k) for k in d))
        raise ConfigError(f"unknown key(s) in '{where or 'config'}': {names}")


def _as_number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{path}' must be a number")
    if not math.isfinite(v):
        raise ConfigError(f"field '{path}' must be finite")
    return float(v)


def _as_int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"field '{path}' must be an integer")
    return int(v)


def _as_str(v, path: str) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"field '{path}' must be a string")
    return v


def _as_list(v, path: str) -> list:
    if not isinstance(v, list):
        raise ConfigError(f"field '{path}' must be an array")
    return v


def _as_obj(v, path: str) -> dict:
    if not isinstance(v, dict):
        raise ConfigError(f"field '{path}' must be an object")
    return dict(v)


def _pop_number(d, key, where, required=True, default=None):
    v = _pop(d, key, where, required)
    return default if v is None else _as_number(v, _join(where, key))


def _pop_int(d, key, where, required=True, default=None):
    v = _pop(d, key, where, required)
    return default if v is None else _as_int(v, _join(where, key))


def _pop_str(d, key, where, required=True, default=None):
    v = _pop(d, key, where, required)
    return default if v is None else _as_str(v, _join(where, key))


def _pop_list(d, key, where, required=True, default=None):
    v = _pop(d, key, where, required)
    return default if v is None else _as_list(v, _join(where, key))


def _pop_obj(d, key, where, required=True, default=None):
    v = _pop(d, key, where, required)
    return default if v is None else _as_obj(v, _join(where, key))


def _number_list(v, path: str, length: int | None = None) -> list:
    vals = [_as_number(x, f"{path}[{i}]") for i, x in enumerate(_as_list(v, path))]
    if length is not None and len(vals) != length:
        raise ConfigError(f"field '{path}' must have exactly {length} entries")
    return vals


def _check_schema_version(cfg: dict) -> None:
    v = _pop(cfg, "schema_version", "")
    if v != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {v!r}; this build reads version {SCHEMA_VERSION}")


def _domain(build, *args, **kwargs):
    """Construct a domain object, converting its ValueError to ConfigError."""
    try:
        return build(*args, **kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from e


# ---------------------------------------------------------------------------
# CSV / manifest output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    """Floats with 17 significant digits (round-trip exact for float64)."""
    return format(float(x), ".17g")


def _write_csv(outdir: Path, name: str, header: str, lines: list) -> str:
    text = "\n".join([header] + lines) + "\n"
    (outdir / name).write_bytes(text.encode("utf-8"))
    return name


def _write_manifest(outdir: Path, command: str, config: dict, seed,
                    t_start: float, files: list) -> None:
    entries = [{"name": name,
                "sha256": hashlib.sha256((outdir / name).read_bytes()).hexdigest()}
               for name in files]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "master_seed": seed,
        "version": f"spdelab {__version__}",
        "wall_time_s": round(time.perf_counter() - t_start, 6),
        "files": entries,
    }
    tmp = outdir / "manifest.json.tmp"
    tmp.write_bytes((json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
    os.replace(tmp, outdir / "manifest.json")


def _check_artifact_name(name: str, path: str) -> str:
    ok = name and all(c.isalnum() or c in "._-" for c in name) \
        and not name.startswith(".")
    if not ok:
        raise ConfigError(
            f"field '{path}' must be a plain file-name stem "
            "(letters, digits, '.', '_', '-')")
    return name


# ---------------------------------------------------------------------------
# covariance command
# ---------------------------------------------------------------------------


def _build_lag_grid(obj: dict) -> np.ndarray:
    lo = _pop_number(obj, "min", "lags")
    hi = _pop_number(obj, "max", "lags")
    n = _pop_int(obj, "n", "lags")
    spacing = _pop_str(obj, "spacing", "lags", required=False, default="log")
    _reject_unknown(obj, "lags")
    if not lo < hi:
        raise ConfigError("field 'lags' needs min < max")
    if n < 2:
        raise ConfigError("field 'lags.n' must be at least 2")
    if spacing == "log":
        if lo <= 0:
            raise ConfigError("log-spaced lags need 'lags.min' > 0")
        return np.geomspace(lo, hi, n)
    if spacing == "linear":
        return np.linspace(lo, hi, n)
    raise ConfigError("field 'lags.spacing' must be 'log' or 'linear'")


def _build_kernel(obj: dict, where: str):
    typ = _pop_str(obj, "type", where)
    if typ == "exponential":
        beta = _pop_number(obj, "beta", where)
        _reject_unknown(obj, where)
        return _domain(Exponential, beta)
    if typ == "matern":
        m = _pop_number(obj, "m", where)
        beta = _pop_number(obj, "beta", where)
        _reject_unknown(obj, where)
        return _domain(MaternKernel, m, beta)
    if typ == "power_law":
        alpha = _pop_number(obj, "alpha", where)
        _reject_unknown(obj, where)
        return _domain(PowerLaw, alpha)
    raise ConfigError(
        f"field '{_join(where, 'type')}' must be 'exponential', 'matern' "
        "or 'power_law'")


def _build_curve(entry: dict, where: str):
    """One named covariance curve: returns (name, rho(lag))."""
    name = _check_artifact_name(_pop_str(entry, "name", where),
                                _join(where, "name"))
    family = _pop_str(entry, "family", where)
    if family == "matern":
        d = _pop_int(entry, "d", where)
        kappa = _pop_number(entry, "kappa", where)
        alpha = _pop_number(entry, "alpha", where)
        _reject_unknown(entry, where)
        if alpha <= d / 2.0:
            raise ConfigError(
                f"'{where}': matern needs alpha > d/2 "
                "(use family 'generalized_matern' at alpha = d/2)")
        fn = lambda s: matern_cov(s, alpha, kappa, d)
    elif family == "generalized_matern":
        d = _pop_int(entry, "d", where)
        kappa = _pop_number(entry, "kappa", where)
        _reject_unknown(entry, where)
        fn = lambda s: generalized_matern_cov(s, kappa, d)
    elif family == "frac_reaction":
        d = _pop_int(entry, "d", where)
        kappa = _pop_number(entry, "kappa", where)
        _reject_unknown(entry, where)
        if d == 1:
            fn = lambda s: frac_reaction_cov_1d(s, kappa)
        elif d == 2:
            fn = lambda s: frac_reaction_cov_2d(s, kappa)
        else:
            raise ConfigError(f"'{where}': frac_reaction supports d = 1 or 2")
    elif family == "exp_kernel":
        D = _pop_number(entry, "D", where)
        kappa = _pop_number(entry, "kappa", where)
        beta = _pop_number(entry, "beta", where)
        _reject_unknown(entry, where)

        def fn(s, D=D, kappa=kappa, beta=beta):
            nugget, continuous = cov_exp_kernel_1d(s, D, kappa, beta)
            return continuous + (nugget if s == 0.0 else 0.0)
    elif family == "transform":
        model = _pop_obj(entry, "model", where)
        tol = _pop_number(entry, "tol", where, required=False, default=1e-8)
        _reject_unknown(entry, where)
        mwhere = _join(where, "model")
        mfamily = _pop_str(model, "family", mwhere)
        d = _pop_int(model, "d", mwhere)
        kappa = _pop_number(model, "kappa", mwhere)
        alpha = _pop_number(model, "alpha", mwhere, required=False, default=2.0)
        D = _pop_number(model, "D", mwhere, required=False, default=0.0)
        kobj = _pop_obj(model, "kernel", mwhere, required=False)
        kernel = _build_kernel(kobj, _join(mwhere, "kernel")) if kobj else None
        _reject_unknown(model, mwhere)
        spec = _domain(CovarianceSpec, family=mfamily, d=d, kappa=kappa,
                       alpha=alpha, D=D, kernel=kernel)
        fn = lambda s: cov_by_transform(spec, s, tol=tol)
    else:
        raise ConfigError(
            f"field '{_join(where, 'family')}' must be one of 'matern', "
            "'generalized_matern', 'frac_reaction', 'exp_kernel', 'transform'")
    if kappa <= 0:
        raise ConfigError(f"field '{_join(where, 'kappa')}' must be positive")
    return name, fn


def run_covariance(config: dict, outdir: Path, seed) -> list:
    cfg = copy.deepcopy(config)
    _check_schema_version(cfg)
    lags = _build_lag_grid(_pop_obj(cfg, "lags", ""))
    entries = _pop_list(cfg, "curves", "")
    _reject_unknown(cfg, "")
    if not entries:
        raise ConfigError("field 'curves' must be a non-empty array")
    curves = [_build_curve(_as_obj(e, f"curves[{i}]"), f"curves[{i}]")
              for i, e in enumerate(entries)]
    names = [name for name, _ in curves]
    if len(set(names)) != len(names):
        raise ConfigError("curve names must be unique")
    files = []
    for name, fn in curves:
        lines = [f"{_fmt(h)},{_fmt(fn(float(h)))}" for h in lags]
        files.append(_write_csv(outdir, f"{name}.csv", "h,value", lines))
    return files


# ---------------------------------------------------------------------------
# simulate-field command
# ---------------------------------------------------------------------------


def _build_grid(obj: dict) -> Grid:
    extent = _pop_list(obj, "extent", "grid")
    n = _pop_list(obj, "n", "grid")
    _reject_unknown(obj, "grid")
    pairs = tuple(tuple(_number_list(p, f"grid.extent[{i}]", 2))
                  for i, p in enumerate(extent))
    cells = tuple(_as_int(v, f"grid.n[{i}]") for i, v in enumerate(n))
    return _domain(Grid, pairs, cells)


def _well_diffusivity(obj: dict, where: str):
    """D(x) = D0 + D1 (1 - exp(-|x|^2 / (2 sigma_D^2))): a diffusivity well
    of depth D1 and radius sigma_D around the origin, floor D0."""
    D0 = _pop_number(obj, "D0", where)
    D1 = _pop_number(obj, "D1", where)
    sigma_D = _pop_number(obj, "sigma_D", where)
    if D0 <= 0 or D1 < 0 or sigma_D <= 0:
        raise ConfigError(f"'{where}': need D0 > 0, D1 >= 0, sigma_D > 0")

    def Dfun(pts, t):
        sq = np.sum(np.asarray(pts) ** 2, axis=-1)
        return D0 + D1 * (1.0 - np.exp(-sq / (2.0 * sigma_D ** 2)))

    return Dfun


def _build_operator(obj: dict):
    where = "operator"
    typ = _pop_str(obj, "type", where)
    if typ == "laplacian":
        D = _pop_number(obj, "D", where)
        _reject_unknown(obj, where)
        return _domain(Laplacian, D)
    if typ in ("fokker_planck", "fickian"):
        Dfun = _well_diffusivity(obj, where)
        _reject_unknown(obj, where)
        return FokkerPlanck(Dfun) if typ == "fokker_planck" else Fickian(Dfun)
    if typ == "fractional_spectral":
        alpha = _pop_number(obj, "alpha", where)
        gamma = _pop_number(obj, "gamma", where)
        _reject_unknown(obj, where)
        return _domain(FractionalSpectral, alpha, gamma)
    if typ == "kernel_convolution":
        D = _pop_number(obj, "D", where)
        kernel = _build_kernel(_pop_obj(obj, "kernel", where),
                               _join(where, "kernel"))
        _reject_unknown(obj, where)
        return _domain(KernelConvolution, D, kernel)
    raise ConfigError(
        "field 'operator.type' must be one of 'laplacian', 'fokker_planck', "
        "'fickian', 'fractional_spectral', 'kernel_convolution'")


def _build_reaction(obj: dict | None):
    if obj is None:
        return None
    where = "reaction"
    typ = _pop_str(obj, "type", where)
    if typ == "none":
        _reject_unknown(obj, where)
        return None
    if typ == "linear":
        kappa2 = _pop_number(obj, "kappa2", where)
        _reject_unknown(obj, where)
        return LinearReaction(kappa2)
    if typ == "bistable":
        K = _pop_number(obj, "K", where)
        rho = _pop_number(obj, "rho", where)
        _reject_unknown(obj, where)
        return BistableReaction(K, rho)
    raise ConfigError("field 'reaction.type' must be 'none', 'linear' or 'bistable'")


def _build_drift(obj: dict | None, d: int):
    if obj is None:
        return None
    where = "drift"
    typ = _pop_str(obj, "type", where)
    if typ == "none":
        _reject_unknown(obj, where)
        return None
    if typ == "constant":
        B = _number_list(_pop(obj, "B", where), _join(where, "B"), d)
        _reject_unknown(obj, where)
        Bvec = np.asarray(B)
        return DriftSpec(lambda pts, t: np.broadcast_to(Bvec, pts.shape))
    if typ == "rotating":
        if d != 2:
            raise ConfigError("drift type 'rotating' needs a 2-d grid")
        amp = _pop_number(obj, "amplitude", where)
        period = _pop_number(obj, "period", where)
        soft = _pop_number(obj, "softening", where)
        _reject_unknown(obj, where)
        if period <= 0 or soft <= 0:
            raise ConfigError("'drift': need period > 0 and softening > 0")

        def Bfun(pts, t):
            x1, x2 = pts[..., 0], pts[..., 1]
            r = np.sqrt(soft + x1 ** 2 + x2 ** 2)
            phase = 2.0 * math.pi * t / period
            return np.stack([amp * x2 * math.cos(phase) / r,
                             amp * x1 * math.sin(phase) / r], axis=-1)

        return DriftSpec(Bfun)
    raise ConfigError("field 'drift.type' must be 'none', 'constant' or 'rotating'")


def _build_u0(obj: dict | None, grid: Grid):
    if obj is None:
        return 0.0
    where = "u0"
    typ = _pop_str(obj, "type", where)
    if typ == "constant":
        value = _pop_number(obj, "value", where)
        _reject_unknown(obj, where)
        return value
    if typ == "gaussian":
        center = _number_list(_pop(obj, "center", where),
                              _join(where, "center"), grid.d)
        width = _pop_number(obj, "width", where)
        mass = _pop_number(obj, "mass", where)
        _reject_unknown(obj, where)
        if width <= 0:
            raise ConfigError("field 'u0.width' must be positive")
        pts = grid.centers()
        sq = np.sum((pts - np.asarray(center)) ** 2, axis=-1)
        norm = (2.0 * math.pi * width ** 2) ** (-grid.d / 2.0)
        return mass * norm * np.exp(-sq / (2.0 * width ** 2))
    raise ConfigError("field 'u0.type' must be 'constant' or 'gaussian'")


def _field_csv(outdir: Path, name: str, fld) -> str:
    g = fld.grid
    t = _fmt(fld.time)
    if g.d == 1:
        xs = g.axis_centers(0)
        lines = [f"{_fmt(x)},{t},{_fmt(v)}" for x, v in zip(xs, fld.values)]
        return _write_csv(outdir, name, "x,t,value", lines)
    xs, ys = g.axis_centers(0), g.axis_centers(1)
    vals = fld.values
    lines = [f"{_fmt(xs[i])},{_fmt(ys[j])},{t},{_fmt(vals[i, j])}"
             for i in range(xs.size) for j in range(ys.size)]
    return _write_csv(outdir, name, "x1,x2,t,value", lines)


def run_simulate_field(config: dict, outdir: Path, seed: int) -> list:
    cfg = copy.deepcopy(config)
    _check_schema_version(cfg)
    grid = _build_grid(_pop_obj(cfg, "grid", ""))
    bc = _pop_str(cfg, "bc", "")
    operator = _build_operator(_pop_obj(cfg, "operator", ""))
    reaction = _build_reaction(_pop_obj(cfg, "reaction", "", required=False))
    drift = _build_drift(_pop_obj(cfg, "drift", "", required=False), grid.d)
    sigma = _pop_number(cfg, "sigma", "", required=False, default=0.0)
    u0 = _build_u0(_pop_obj(cfg, "u0", "", required=False), grid)
    dt = _pop_number(cfg, "dt", "")
    t_end = _pop_number(cfg, "t_end", "")
    snapshots = _pop_list(cfg, "snapshots", "", required=False)
    mode = _pop_str(cfg, "mode", "", required=False, default="march")
    steady_tol = _pop_number(cfg, "steady_tol", "", required=False, default=1e-10)
    _reject_unknown(cfg, "")
    if mode not in ("march", "steady"):
        raise ConfigError("field 'mode' must be 'march' or 'steady'")
    if snapshots is None:
        times = [t_end]
    else:
        times = _number_list(snapshots, "snapshots")
    if mode == "steady" and sigma != 0.0:
        raise ConfigError("mode 'steady' requires sigma = 0")
    sim = _domain(SimConfig, grid=grid, operator=operator, dt=dt, t_end=t_end,
                  snapshot_times=[t_end] if mode == "steady" else times,
                  bc=bc, reaction=reaction, drift=drift, sigma=sigma, u0=u0)
    if mode == "steady":
        fld = steady_state_deterministic(sim, tol=steady_tol)
        return [_field_csv(outdir, "steady_state.csv", fld)]
    result = simulate(sim, seed)
    return [_field_csv(outdir, f"snapshot_{k:02d}.csv", snap)
            for k, snap in enumerate(result.snapshots)]


# ---------------------------------------------------------------------------
# simulate-particles command
# ---------------------------------------------------------------------------


def _build_release(obj: dict):
    where = "release"
    typ = _pop_str(obj, "type", where)
    if typ == "disc":
        center = _number_list(_pop(obj, "center", where), _join(where, "center"))
        radius = _pop_number(obj, "radius", where)
        _reject_unknown(obj, where)
        return _domain(UniformDisc, tuple(center), radius)
    if typ == "point":
        at = _number_list(_pop(obj, "at", where), _join(where, "at"))
        _reject_unknown(obj, where)
        return DiracAt(tuple(at))
    raise ConfigError("field 'release.type' must be 'disc' or 'point'")


def run_simulate_particles(config: dict, outdir: Path, seed: int) -> list:
    cfg = copy.deepcopy(config)
    _check_schema_version(cfg)
    alpha = _pop_number(cfg, "alpha", "", required=False, default=2.0)
    gamma = _pop_number(cfg, "gamma", "")
    kappa = _pop_number(cfg, "kappa", "")
    eta0 = _pop_number(cfg, "eta0", "")
    B = _number_list(_pop(cfg, "B", ""), "B")
    sigma = _pop_number(cfg, "sigma", "")
    release = _build_release(_pop_obj(cfg, "release", ""))
    times = _number_list(_pop(cfg, "times", ""), "times")
    method = _pop_str(cfg, "method", "", required=False, default="exact")
    dt = _pop_number(cfg, "dt", "", required=False)
    _reject_unknown(cfg, "")
    if len(B) != release.d:
        raise ConfigError("field 'B' must match the release dimension")
    if not times or times[0] <= 0 or any(a >= b for a, b in zip(times, times[1:])):
        raise ConfigError("field 'times' must be positive and strictly increasing")
    if method not in ("exact", "euler"):
        raise ConfigError("field 'method' must be 'exact' or 'euler'")
    if method == "exact" and alpha != 2.0:
        raise ConfigError("method 'exact' requires alpha = 2")
    if method == "euler":
        if dt is None:
            raise ConfigError("missing required field 'dt' (method 'euler')")
        if dt <= 0:
            raise ConfigError("field 'dt' must be positive")
        for t in times:
            if abs(t / dt - round(t / dt)) > 1e-6:
                raise ConfigError(f"observation time {t} is not a multiple of dt")
    params = _domain(LevyParams, alpha=alpha, gamma=gamma, kappa=kappa,
                     eta0=eta0, p0=release, B=tuple(B), sigma=sigma)

    rng = np.random.default_rng(seed)
    sys_state = init_particles(params, rng)
    coord_header = ",".join(f"x{i + 1}" for i in range(params.d))
    files = []
    summary = []
    for k, t in enumerate(times):
        if method == "exact":
            sys_state = exact_gaussian_transition(sys_state, float(t), params, rng)
        else:
            n_steps = int(round((t - sys_state.t) / dt))
            for _ in range(n_steps):
                sys_state = step_euler(sys_state, dt, params, rng)
        lines = []
        for i in range(sys_state.n_total):
            coords = ",".join(_fmt(c) for c in sys_state.positions[i])
            status = "alive" if sys_state.alive[i] else "deposited"
            lines.append(f"{i},{coords},{status}")
        files.append(_write_csv(outdir, f"particles_{k:02d}.csv",
                                f"id,{coord_header},status", lines))
        n_alive = int(sys_state.alive.sum())
        summary.append(f"{_fmt(t)},{sys_state.n_total},{n_alive},"
                       f"{sys_state.n_total - n_alive}")
    files.append(_write_csv(outdir, "summary.csv",
                            "t,n_total,n_alive,n_deposited", summary))
    return files


# ---------------------------------------------------------------------------
# estimate / mc-study commands
# ---------------------------------------------------------------------------


def _build_model_params(obj: dict, where: str) -> ModelParams:
    vals = [_pop_number(obj, name, where) for name in ("B1", "B2", "sigma", "kappa")]
    _reject_unknown(obj, where)
    return _domain(ModelParams, *vals)


def _build_windows(entries: list) -> tuple:
    wins = []
    for i, w in enumerate(entries):
        axes = _as_list(w, f"windows[{i}]")
        if len(axes) != 2:
            raise ConfigError(f"field 'windows[{i}]' must list 2 axis ranges")
        pairs = tuple(tuple(_number_list(p, f"windows[{i}][{a}]", 2))
                      for a, p in enumerate(axes))
        wins.append(_domain(Window, pairs))
    if not wins:
        raise ConfigError("field 'windows' must be a non-empty array")
    return tuple(wins)


def _build_bounds(obj: dict | None) -> Bounds:
    if obj is None:
        return Bounds()
    where = "bounds"
    kw = {}
    for name in ("B1", "B2", "sigma", "kappa"):
        pair = _pop(obj, name, where, required=False)
        if pair is not None:
            kw[name] = tuple(_number_list(pair, _join(where, name), 2))
    _reject_unknown(obj, where)
    return _domain(Bounds, **kw)


def _pop_study_fields(cfg: dict):
    truth = _build_model_params(_pop_obj(cfg, "truth", ""), "truth")
    eta0 = _pop_number(cfg, "eta0", "")
    windows = _build_windows(_pop_list(cfg, "windows", ""))
    times = tuple(_number_list(_pop(cfg, "times", ""), "times"))
    modes = _pop_list(cfg, "modes", "", required=False,
                      default=["locations", "counts"])
    bounds = _build_bounds(_pop_obj(cfg, "bounds", "", required=False))
    n_starts = _pop_int(cfg, "n_starts", "", required=False, default=5)
    n_nodes = _pop_int(cfg, "n_nodes", "", required=False, default=32)
    maxfev = _pop_int(cfg, "maxfev", "", required=False, default=2000)
    if eta0 <= 0:
        raise ConfigError("field 'eta0' must be positive")
    if len(times) != len(windows):
        raise ConfigError("fields 'times' and 'windows' must have equal length")
    for i, m in enumerate(modes):
        if _as_str(m, f"modes[{i}]") not in ("locations", "counts"):
            raise ConfigError(f"field 'modes[{i}]' must be 'locations' or 'counts'")
    if not modes or len(set(modes)) != len(modes):
        raise ConfigError("field 'modes' must be non-empty without duplicates")
    if n_starts < 1 or n_nodes < 4 or maxfev < 10:
        raise ConfigError("need n_starts >= 1, n_nodes >= 4, maxfev >= 10")
    return truth, eta0, windows, times, tuple(modes), bounds, n_starts, n_nodes, maxfev


def _summary_values(theta: ModelParams) -> tuple:
    return theta.B1, theta.B2, theta.sigma, 1.0 / theta.kappa ** 2


def run_estimate(config: dict, outdir: Path, seed: int) -> list:
    cfg = copy.deepcopy(config)
    _check_schema_version(cfg)
    (truth, eta0, windows, times, modes, bounds,
     n_starts, n_nodes, maxfev) = _pop_study_fields(cfg)
    release_radius = _pop_number(cfg, "release_radius", "",
                                 required=False, default=0.05)
    _reject_unknown(cfg, "")
    if release_radius < 0:
        raise ConfigError("field 'release_radius' must be nonnegative")

    obs = _domain(simulate_observations, truth, eta0, windows, times,
                  np.random.default_rng(splitmix64(seed, 0)), release_radius)
    obs_lines = [f"{k},{_fmt(t)},{pts.shape[0]}"
                 for k, (t, pts) in enumerate(zip(obs.times, obs.points))]
    files = [_write_csv(outdir, "observations.csv", "window,t,count", obs_lines)]

    est_lines = []
    for m_idx, mode in enumerate(modes):
        data = obs if mode == "locations" else obs.to_counts()
        res = fit(data, bounds, eta0=eta0, n_starts=n_starts,
                  seed=splitmix64(seed, 1 + m_idx), n_nodes=n_nodes,
                  maxfev=maxfev)
        flag = int(bool(res.diagnostics["converged"]))
        for param, value in zip(SUMMARY_PARAMS, _summary_values(res.theta)):
            est_lines.append(f"{param},{mode},{_fmt(value)},{flag}")
    files.append(_write_csv(outdir, "estimates.csv",
                            "param,mode,estimate,converged", est_lines))
    return files


def run_mc_study(config: dict, outdir: Path, seed: int) -> list:
    cfg = copy.deepcopy(config)
    _check_schema_version(cfg)
    (truth, eta0, windows, times, modes, bounds,
     n_starts, n_nodes, maxfev) = _pop_study_fields(cfg)
    reps = _pop_int(cfg, "reps", "")
    _reject_unknown(cfg, "")
    study = StudyConfig(truth=truth, eta0=eta0, windows=windows, times=times,
                        bounds=bounds, modes=modes, n_starts=n_starts,
                        n_nodes=n_nodes, maxfev=maxfev)
    result = _domain(mc_study, study, reps, seed)

    rows = [f"{r['param']},{r['mode']},{_fmt(r['mean'])},{_fmt(r['sd'])},"
            f"{r['reps']},{r['excluded']}" for r in result.rows]
    files = [_write_csv(outdir, "study.csv",
                        "param,mode,mean,sd,reps,excluded", rows)]
    raw = []
    for mode in modes:
        for idx, est in enumerate(result.estimates[mode]):
            for param, value in zip(SUMMARY_PARAMS, est):
                raw.append(f"{mode},{idx},{param},{_fmt(value)}")
    files.append(_write_csv(outdir, "estimates.csv",
                            "mode,index,param,value", raw))
    return files


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_KAPPA_LIFETIME3 = 0.5773502691896258  # kappa with mean deposition time 3

PRESETS = {
    "covariance": {
        # two planar curves whose practical ranges are matched at level 0.05
        "fig1": {
            "schema_version": 1,
            "lags": {"min": 0.01, "max": 10.0, "n": 400, "spacing": "log"},
            "curves": [
                {"name": "damped_matern", "family": "generalized_matern",
                 "d": 2, "kappa": 1.0},
                {"name": "fractional_reaction", "family": "frac_reaction",
                 "d": 2, "kappa": 0.78},
            ],
        },
    },
    "simulate-field": {
        # diffusion + absorption + rotating drift, driven by noise
        "fig2": {
            "schema_version": 1,
            "grid": {"extent": [[-5.0, 5.0], [-5.0, 5.0]], "n": [96, 96]},
            "bc": "Dirichlet0",
            "operator": {"type": "laplacian", "D": 0.05},
            "reaction": {"type": "linear", "kappa2": 0.01},
            "drift": {"type": "rotating", "amplitude": 2.0, "period": 10.0,
                      "softening": 0.1},
            "sigma": 1.0,
            "u0": {"type": "constant", "value": 0.0},
            "dt": 0.015,
            "t_end": 6.0,
            "snapshots": [0.0, 3.0, 6.0],
        },
        # stochastic bistable field started at the unstable threshold
        "fig4": {
            "schema_version": 1,
            "grid": {"extent": [[-5.0, 5.0], [-5.0, 5.0]], "n": [200, 200]},
            "bc": "Neumann0",
            "operator": {"type": "laplacian", "D": 0.01},
            "reaction": {"type": "bistable", "K": 2.0, "rho": 1.0},
            "drift": {"type": "none"},
            "sigma": 1.0,
            "u0": {"type": "constant", "value": 1.0},
            "dt": 0.0025,
            "t_end": 10.0,
            "snapshots": [0.0, 5.0, 10.0],
        },
        # steady state of dispersal acting on D*U: U*D tends to a constant
        "figB6-fp": {
            "schema_version": 1,
            "grid": {"extent": [[-2.0, 2.0], [-2.0, 2.0]], "n": [32, 32]},
            "bc": "Neumann0",
            "operator": {"type": "fokker_planck", "D0": 0.001, "D1": 0.1,
                         "sigma_D": 0.5},
            "u0": {"type": "gaussian", "center": [0.0, 0.0], "width": 0.5,
                   "mass": 16.0},
            "dt": 0.015625,
            "t_end": 1.0,
            "mode": "steady",
            "steady_tol": 1e-9,
        },
        # steady state of the flux-form operator: U itself tends to a constant
        "figB6-fick": {
            "schema_version": 1,
            "grid": {"extent": [[-2.0, 2.0], [-2.0, 2.0]], "n": [32, 32]},
            "bc": "Neumann0",
            "operator": {"type": "fickian", "D0": 0.001, "D1": 0.1,
                         "sigma_D": 0.5},
            "u0": {"type": "gaussian", "center": [0.0, 0.0], "width": 0.5,
                   "mass": 16.0},
            "dt": 0.015625,
            "t_end": 1.0,
            "mode": "steady",
            "steady_tol": 1e-9,
        },
    },
    "simulate-particles": {
        # planar drift-diffusion-death cloud observed at three times
        "fig3": {
            "schema_version": 1,
            "alpha": 2.0,
            "gamma": 0.5,
            "kappa": _KAPPA_LIFETIME3,
            "eta0": 10000.0,
            "B": [0.3, 0.5],
            "sigma": 0.3,
            "release": {"type": "disc", "center": [0.0, 0.0], "radius": 0.05},
            "times": [1.0, 3.0, 6.0],
            "method": "exact",
        },
    },
    "estimate": {},
    "mc-study": {
        # three-window benchmark study, both observation modes
        "table2": {
            "schema_version": 1,
            "truth": {"B1": 0.3, "B2": 0.5, "sigma": 0.3,
                      "kappa": _KAPPA_LIFETIME3},
            "eta0": 10000.0,
            "windows": [[[0.0, 1.0], [0.0, 1.0]],
                        [[-1.0, 0.0], [-1.0, 0.0]],
                        [[1.0, 2.0], [2.0, 3.0]]],
            "times": [1.0, 3.0, 6.0],
            "modes": ["locations", "counts"],
            "bounds": {"B1": [-1.0, 1.0], "B2": [-1.0, 1.0],
                       "sigma": [0.01, 1.0], "kappa": [0.1, 10.0]},
            "n_starts": 5,
            "n_nodes": 32,
            "maxfev": 2000,
            "reps": 100,
        },
    },
}

_HANDLERS = {
    "covariance": run_covariance,
    "simulate-field": run_simulate_field,
    "simulate-particles": run_simulate_particles,
    "estimate": run_estimate,
    "mc-study": run_mc_study,
}

_NEEDS_SEED = ("simulate-field", "simulate-particles", "estimate", "mc-study")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _load_config(command: str, config_path, preset) -> dict:
    if (config_path is None) == (preset is None):
        raise ConfigError("give exactly one of --config or --preset")
    if preset is not None:
        table = PRESETS[command]
        if preset not in table:
            avail = ", ".join(sorted(table)) or "none"
            raise ConfigError(
                f"unknown preset '{preset}' for command '{command}' "
                f"(available: {avail})")
        return copy.deepcopy(table[preset])
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {config_path}: {e}") from e
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    return obj


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdelab",
        description="CSV artifact generation for the dispersal laboratory")
    parser.add_argument("--version", action="version",
                        version=f"spdelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "covariance": "evaluate covariance curves on a lag grid",
        "simulate-field": "run one stochastic field simulation",
        "simulate-particles": "run one particle-system simulation",
        "estimate": "simulate one dataset and fit it",
        "mc-study": "replicated simulate/fit study",
    }
    for name, txt in helps.items():
        p = sub.add_parser(name, help=txt)
        p.add_argument("--config", metavar="FILE", help="JSON config file")
        p.add_argument("--preset", metavar="NAME",
                       help="named built-in config")
        p.add_argument("--out", metavar="DIR", required=True,
                       help="output directory (created if absent)")
        p.add_argument("--seed", metavar="U64", help="master seed")
        if name == "mc-study":
            p.add_argument("--reps", metavar="N", help="override replicate count")
    return parser


def _parse_seed(raw, command: str):
    if raw is None:
        if command in _NEEDS_SEED:
            raise ConfigError(f"command '{command}' requires --seed")
        return None
    try:
        seed = int(raw, 0)
    except ValueError:
        raise ConfigError(f"--seed must be an integer, got {raw!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("--seed must fit in an unsigned 64-bit integer")
    return seed


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args.command, args.config, args.preset)
        seed = _parse_seed(args.seed, args.command)
        if args.command == "mc-study" and args.reps is not None:
            try:
                config["reps"] = int(args.reps)
            except ValueError:
                raise ConfigError(
                    f"--reps must be an integer, got {args.reps!r}") from None
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        t_start = time.perf_counter()
        files = _HANDLERS[args.command](config, outdir, seed)
        _write_manifest(outdir, args.command, config, seed, t_start, files)
    except ConfigError as e:
        print(f"spdelab: config error: {e}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError) as e:
        print(f"spdelab: numerical failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
