"""Command-line harness: experiments from flags, CSV reports, SVG plots.

Subcommands: sample, spectrum, ou, scaling, compare.  Every option may
also be given in a flat key=value config file (``--config``), with keys
identical to the flag names; explicit flags override file entries field
by field.  The env var NONREV_SEED overrides the master seed when set.

Exit codes: 0 success, 1 usage error, 2 numerical failure.  Errors are a
single ``error: <kind>: <detail>`` line on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .diagnostics import ComparisonReport, compare
from .drift import DriftField, SkewMatrix, drift_skew_grad, drift_stream_2d, drift_zero
from .errors import NumericalFailure
from .integrate import IntegratorConfig, simulate_chains
from .model import (
    TORUS,
    Potential,
    potential_double_well,
    potential_gaussian,
    potential_torus,
)
from .ou import scaling_study, spectral_abscissa
from .spectrum import Grid, discretize_generator, spectral_gap

_J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Argparse exits the process on bad usage; raise instead so run() can
    # map it to exit code 1 with a one-line message.
    def error(self, message):
        raise _UsageError(message)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in s.split(",") if t.strip() != "")
    if not vals:
        raise ValueError("expected a comma-separated list of numbers")
    return vals


def _parse_ints(s: str) -> tuple[int, ...]:
    vals = tuple(int(t) for t in s.split(",") if t.strip() != "")
    if not vals:
        raise ValueError("expected a comma-separated list of integers")
    return vals


def _parse_torus_coeffs(s: str) -> list[tuple[tuple[int, int], float]]:
    """``k1,k2,amp;k1,k2,amp;...`` with integer wave vectors."""
    out = []
    for group in s.split(";"):
        parts = [t for t in group.split(",") if t.strip() != ""]
        if len(parts) != 3:
            raise ValueError(f"expected k1,k2,amp groups, got {group!r}")
        out.append(((int(parts[0]), int(parts[1])), float(parts[2])))
    return out


def _parse_ranges(s: str) -> tuple[tuple[float, float], ...]:
    """``lo,hi;lo,hi`` box ranges."""
    out = []
    for group in s.split(";"):
        parts = [t for t in group.split(",") if t.strip() != ""]
        if len(parts) != 2:
            raise ValueError(f"expected lo,hi pairs, got {group!r}")
        out.append((float(parts[0]), float(parts[1])))
    return tuple(out)


def _choice(*names: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in names:
            raise ValueError(f"expected one of {'/'.join(names)}, got {s!r}")
        return s

    return parse


def _auto(parse: Callable[[str], object]) -> Callable[[str], object]:
    """Wrap a parser so the literal value ``auto`` means None."""

    def wrapped(s: str):
        return None if s.strip() == "auto" else parse(s)

    return wrapped


@dataclass(frozen=True)
class _Opt:
    flag: str
    parse: Callable[[str], object]
    default: str | None
    help: str
    is_flag: bool = False

    @property
    def dest(self) -> str:
        return self.flag.replace("-", "_")


# Options that are output plumbing, not part of the experiment identity.
_NOT_HASHED = {"out-dir", "plot", "seed"}

_COMMON = [
    _Opt("out-dir", str, "out", "output directory (created if missing)"),
    _Opt("seed", int, "0", "master seed (NONREV_SEED env overrides)"),
    _Opt("plot", _parse_bool, "false", "also write SVG plots", is_flag=True),
]

_POTENTIAL = [
    _Opt("potential", _choice("gauss", "double-well", "torus"), "gauss",
         "potential family"),
    _Opt("d-diag", _parse_floats, "-1,-1",
         "diagonal of the Gaussian curvature matrix D (negative entries)"),
    _Opt("a", float, "1", "double-well stiffness a in a(x^2-1)^2"),
    _Opt("torus-coeffs", _parse_torus_coeffs, "1,0,0.5;0,1,0.5",
         "torus potential modes as k1,k2,amp;..."),
]

_DRIFT = [
    _Opt("drift", _choice("zero", "skew", "stream"), "zero", "perturbation kind"),
    _Opt("skew", _parse_floats, "1",
         "scale factors k applied to the base skew matrix (comma list)"),
    _Opt("skew-entries", _auto(_parse_floats), "auto",
         "upper-triangle entries of the base skew matrix, row-major "
         "(default: the canonical 2-d rotation)"),
    _Opt("stream-amp", float, "1", "amplitude of the sin x1 sin x2 stream field"),
]

_GRID = [
    _Opt("grid", _parse_ints, "48", "grid points per axis (one int, or per-axis list)"),
    _Opt("box", _auto(_parse_floats), "auto",
         "box as lo1,hi1,lo2,hi2 (default: 6 sigma for Gaussian potentials)"),
    _Opt("n-sigma", float, "6", "half-width of the automatic Gaussian box"),
]

_SAMPLE = [
    _Opt("chains", int, "512", "number of independent chains"),
    _Opt("step", float, "0.001", "Euler-Maruyama step size"),
    _Opt("t-final", float, "2", "time horizon"),
    _Opt("snapshots", _auto(_parse_floats), "auto",
         "snapshot times (default: 8 evenly spaced)"),
    _Opt("x0", _auto(_parse_floats), "auto",
         "deterministic start (single value broadcasts; overrides --spread)"),
    _Opt("spread", float, "1", "std of the isotropic normal start"),
]


def _registry(cmd: str) -> list[_Opt]:
    if cmd == "sample":
        return _COMMON + _POTENTIAL + _DRIFT + _SAMPLE
    if cmd == "spectrum":
        return _COMMON + _POTENTIAL + _DRIFT + _GRID
    if cmd == "ou":
        return _COMMON + [
            _Opt("d-diag", _parse_floats, "-1,-1", "diagonal of D"),
            _Opt("skew", _parse_floats, "1", "scale factors k (comma list)"),
            _Opt("skew-entries", _auto(_parse_floats), "auto",
                 "upper-triangle entries of the base skew matrix"),
        ]
    if cmd == "scaling":
        return _COMMON + [
            _Opt("d-diag", _parse_floats, "-1,-4", "diagonal of D"),
            _Opt("skew-entries", _auto(_parse_floats), "auto",
                 "upper-triangle entries of the base skew matrix"),
            _Opt("ks", _parse_floats, "0,0.25,0.5,0.75,1,2,8",
                 "non-decreasing drift scales to sweep"),
        ]
    if cmd == "compare":
        sample = [
            _Opt("chains", int, "4000", "number of independent chains"),
            _Opt("step", float, "0.001", "Euler-Maruyama step size"),
            _Opt("t-final", float, "3", "time horizon"),
            _Opt("snapshots", _auto(_parse_floats), "auto",
                 "snapshot times (default: 12 evenly spaced)"),
            _Opt("x0", _auto(_parse_floats), "3",
                 "deterministic start (single value broadcasts)"),
            _Opt("spread", _auto(float), "auto",
                 "std of the isotropic normal start (overrides nothing if x0 set)"),
        ]
        extra = [
            _Opt("drift-skews", _parse_floats, "1",
                 "k values; each adds a k * base skew drift against the baseline"),
            _Opt("bins", _auto(_parse_ints), "auto", "histogram bins per axis"),
            _Opt("ranges", _auto(_parse_ranges), "auto",
                 "histogram box as lo,hi;lo,hi (default: 6 sigma)"),
            _Opt("use-grid", _parse_bool, "false",
                 "take gaps from a discretized generator instead of the "
                 "closed form", is_flag=True),
        ]
        return _COMMON + _POTENTIAL + sample + extra + _GRID
    raise ValueError(f"unknown subcommand {cmd!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="nonrev", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True, metavar="command")
    for cmd, blurb in [
        ("sample", "simulate chains and report snapshot moments"),
        ("spectrum", "spectral gap of the discretized generator"),
        ("ou", "exact drift-matrix abscissa vs the reversible baseline"),
        ("scaling", "abscissa as a function of the drift scale k"),
        ("compare", "gap + TV-decay pipeline for drifts against the baseline"),
    ]:
        sub = subs.add_parser(cmd, help=blurb, description=blurb)
        sub.add_argument("--config", default=None, metavar="FILE",
                         help="key=value file; flags override individual keys")
        for opt in _registry(cmd):
            if opt.is_flag:
                sub.add_argument(f"--{opt.flag}", nargs="?", const="true",
                                 default=None, metavar="BOOL", help=opt.help)
            else:
                sub.add_argument(f"--{opt.flag}", default=None,
                                 metavar=opt.flag.upper().replace("-", "_"),
                                 help=opt.help)
    return parser


def _load_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise _UsageError(f"cannot read config file: {e}") from e
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _UsageError(f"config lines must be key=value, got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _resolve(
    ns: argparse.Namespace, registry: list[_Opt], file_cfg: dict[str, str]
) -> tuple[dict[str, object], dict[str, str]]:
    """Merge flags > config file > defaults; return (values, canonical strings)."""
    known = {opt.flag for opt in registry}
    for key in file_cfg:
        if key not in known:
            raise _UsageError(f"unknown config key {key!r} for this subcommand")
    values: dict[str, object] = {}
    strings: dict[str, str] = {}
    for opt in registry:
        raw = getattr(ns, opt.dest)
        if raw is None:
            raw = file_cfg.get(opt.flag, opt.default)
        if raw is None:
            values[opt.dest] = None
            strings[opt.flag] = ""
            continue
        try:
            values[opt.dest] = opt.parse(raw)
        except ValueError as e:
            raise _UsageError(f"--{opt.flag}: {e}") from e
        strings[opt.flag] = raw
    return values, strings


def _config_hash(strings: dict[str, str]) -> str:
    payload = "\n".join(
        f"{k}={v}" for k, v in sorted(strings.items()) if k not in _NOT_HASHED
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence],
               seed: int, cfg_hash: str) -> None:
    lines = [f"# seed={seed}, version={__version__}, config-hash={cfg_hash}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _potential_from(v: dict) -> Potential:
    kind = v["potential"]
    if kind == "gauss":
        return potential_gaussian(np.diag(v["d_diag"]))
    if kind == "double-well":
        return potential_double_well(v["a"])
    return potential_torus(v["torus_coeffs"])


def _skew_base(v: dict, dim: int) -> np.ndarray:
    entries = v.get("skew_entries")
    if entries is not None:
        need = dim * (dim - 1) // 2
        if len(entries) != need:
            raise _UsageError(
                f"--skew-entries needs {need} upper-triangle values for dim {dim}"
            )
        s = np.zeros((dim, dim))
        s[np.triu_indices(dim, 1)] = entries
        return s - s.T
    if dim == 2:
        return _J2.copy()
    raise _UsageError("--skew-entries is required for dim != 2")


def _drift_from(v: dict, p: Potential, k: float | None = None) -> DriftField:
    kind = v["drift"]
    if kind == "zero":
        return drift_zero(p.dim)
    if kind == "skew":
        if k is None:
            k = v["skew"][0]
        s = SkewMatrix(k * _skew_base(v, p.dim))
        return replace(drift_skew_grad(s, p), label=f"skew k={k:g}")
    amp = v["stream_amp"]

    def stream(x):
        x = np.asarray(x, dtype=float)
        return amp * np.sin(x[..., 0]) * np.sin(x[..., 1])

    def stream_grad(x):
        x = np.asarray(x, dtype=float)
        return amp * np.stack(
            [np.cos(x[..., 0]) * np.sin(x[..., 1]),
             np.sin(x[..., 0]) * np.cos(x[..., 1])],
            axis=-1,
        )

    return drift_stream_2d(stream, stream_grad, label=f"sin.sin amp={amp:g}")


def _grid_from(v: dict, p: Potential) -> Grid:
    n = v["grid"]
    if len(n) == 1:
        n = n * p.dim
    if len(n) != p.dim:
        raise _UsageError(f"--grid needs 1 or {p.dim} entries")
    if p.domain == TORUS:
        return Grid(lo=(0.0,) * p.dim, hi=tuple(p.periods), n=tuple(n), periodic=True)
    box = v.get("box")
    if box is not None:
        if len(box) != 2 * p.dim:
            raise _UsageError(f"--box needs {2 * p.dim} values for dim {p.dim}")
        lo, hi = tuple(box[0::2]), tuple(box[1::2])
        return Grid(lo=lo, hi=hi, n=tuple(n), periodic=False)
    if p.kind == "gaussian":
        dmat = -np.asarray(p.hessian(np.zeros(p.dim)))
        sig = np.sqrt(np.diag(-np.linalg.inv(dmat)))
        half = v["n_sigma"] * sig
        return Grid(lo=tuple(-half), hi=tuple(half), n=tuple(n), periodic=False)
    raise _UsageError("--box is required for non-Gaussian full-space potentials")


def _snapshot_times(v: dict, n_default: int) -> tuple[float, ...]:
    if v.get("snapshots") is not None:
        return tuple(v["snapshots"])
    t = v["t_final"]
    return tuple(float(t * (i + 1) / n_default) for i in range(n_default))


def _integrator_config(v: dict, seed: int, dim: int, n_snapshots: int) -> IntegratorConfig:
    step = v["step"]
    n_steps = int(round(v["t_final"] / step))
    x0 = v.get("x0")
    spread = v.get("spread")
    if x0 is not None:
        if len(x0) == 1:
            x0 = x0 * dim
        if len(x0) != dim:
            raise _UsageError(f"--x0 needs 1 or {dim} values")
        spread = None
    elif spread is None:
        raise _UsageError("one of --x0 and --spread is required")
    return IntegratorConfig(
        step=step,
        n_steps=n_steps,
        snapshot_times=_snapshot_times(v, n_snapshots),
        n_chains=v["chains"],
        master_seed=seed,
        x0=tuple(x0) if x0 is not None else None,
        spread=spread,
    )


def _plot_xy(path: Path, xs, series: list[tuple[str, np.ndarray]], xlabel: str,
             ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "nonrev"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
    for label, ys in series:
        ax.plot(xs, ys, "o-", ms=3, lw=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _cmd_sample(v: dict, out_dir: Path, seed: int) -> None:
    p = _potential_from(v)
    c = _drift_from(v, p)
    cfg = _integrator_config(v, seed, p.dim, n_snapshots=8)
    batch = simulate_chains(p, c, cfg)
    header = (["time"]
              + [f"mean_{i + 1}" for i in range(p.dim)]
              + [f"var_{i + 1}" for i in range(p.dim)]
              + ["n_chains", "exploded"])
    rows = []
    for k, t in enumerate(batch.times):
        states = batch.states[k]
        rows.append([t, *states.mean(axis=0), *states.var(axis=0),
                     cfg.n_chains, batch.exploded])
    _write_csv(out_dir / "sample.csv", header, rows, seed, v["_hash"])


def _cmd_spectrum(v: dict, out_dir: Path, seed: int) -> None:
    p = _potential_from(v)
    grid = _grid_from(v, p)
    grid_n = "x".join(str(m) for m in grid.n)
    drifts = [drift_zero(p.dim)]
    if v["drift"] != "zero":
        drifts.append(_drift_from(v, p))
    rows = []
    for c in drifts:
        res = spectral_gap(discretize_generator(p, c, grid))
        rows.append([c.label, res.gap, res.kernel_dim, grid_n])
    _write_csv(out_dir / "spectrum.csv", ["label", "gap", "kernel_dim", "grid_n"],
               rows, seed, v["_hash"])


def _cmd_ou(v: dict, out_dir: Path, seed: int, plot: bool) -> None:
    dmat = np.diag(v["d_diag"])
    dim = dmat.shape[0]
    base = _skew_base(v, dim)
    reversible = spectral_abscissa(dmat)
    ks = v["skew"]
    rows = [[k, spectral_abscissa(dmat + (k * base) @ dmat), reversible] for k in ks]
    _write_csv(out_dir / "ou.csv", ["k", "abscissa", "reversible_abscissa"],
               rows, seed, v["_hash"])
    if plot:
        arr = np.array(rows)
        _plot_xy(out_dir / "ou.svg", arr[:, 0],
                 [("abscissa", arr[:, 1]), ("reversible", arr[:, 2])],
                 "k", "spectral abscissa")


def _cmd_scaling(v: dict, out_dir: Path, seed: int, plot: bool) -> None:
    dmat = np.diag(v["d_diag"])
    base = _skew_base(v, dmat.shape[0])
    pairs = scaling_study(dmat, SkewMatrix(base), np.asarray(v["ks"], dtype=float))
    rows = [[k, a] for k, a in pairs]
    _write_csv(out_dir / "scaling.csv", ["k", "abscissa"], rows, seed, v["_hash"])
    if plot:
        arr = np.array(rows)
        _plot_xy(out_dir / "scaling.svg", arr[:, 0], [("abscissa", arr[:, 1])],
                 "k", "spectral abscissa")


def _cmd_compare(v: dict, out_dir: Path, seed: int, plot: bool) -> None:
    p = _potential_from(v)
    base = _skew_base(v, p.dim) if p.dim >= 2 else None
    drifts = [drift_zero(p.dim)]
    for k in v["drift_skews"]:
        if base is None:
            raise _UsageError("skew drifts need dim >= 2")
        s = SkewMatrix(k * base)
        drifts.append(replace(drift_skew_grad(s, p), label=f"skew k={k:g}"))
    cfg = _integrator_config(v, seed, p.dim, n_snapshots=12)
    grid = _grid_from(v, p) if v["use_grid"] else None
    report = compare(p, drifts, cfg, grid=grid, bins=v.get("bins"),
                     ranges=v.get("ranges"))
    rows = []
    nmain = len(report.outcomes) - 1
    for i, out in enumerate(report.outcomes):
        if i == 0:
            # The baseline's rate column reports the reversible-equality flag.
            gap_flag = ""
            rate_flag = "pass" if report.flags[-1].passed else "fail"
        else:
            gap_flag = "pass" if report.flags[2 * (i - 1)].passed else "fail"
            rate_flag = "pass" if report.flags[2 * (i - 1) + 1].passed else "fail"
        vs_gap = "pass" if report.flags[2 * nmain + i].passed else "fail"
        rows.append([out.label, out.gap, out.rate, out.rate_halfwidth,
                     out.prefactor, gap_flag, rate_flag, vs_gap])
    _write_csv(
        out_dir / "compare.csv",
        ["label", "gap", "rho_hat", "rho_ci", "g_hat",
         "gap_vs_baseline", "rate_vs_baseline", "rate_vs_gap"],
        rows, seed, v["_hash"],
    )
    if plot:
        _plot_compare(out_dir / "compare.svg", report)


def _plot_compare(path: Path, report: ComparisonReport) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "nonrev"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
    for curve, out in zip(report.curves, report.outcomes):
        (line,) = ax.semilogy(curve.times, curve.values, "o-", ms=3, lw=1.2,
                              label=out.label)
        ts = np.linspace(out.window[0], out.window[1], 40)
        ax.semilogy(ts, out.prefactor * np.exp(out.rate * ts), "--", lw=1,
                    color=line.get_color())
    ax.set_xlabel("t")
    ax.set_ylabel("TV distance")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        try:
            ns = parser.parse_args(argv)
        except SystemExit as e:  # --help
            return int(e.code or 0)
        registry = _registry(ns.command)
        file_cfg = _load_config(ns.config) if ns.config else {}
        values, strings = _resolve(ns, registry, file_cfg)
        values["_hash"] = _config_hash(strings)

        seed = values["seed"]
        env_seed = os.environ.get("NONREV_SEED")
        if env_seed is not None:
            try:
                seed = int(env_seed)
            except ValueError as e:
                raise _UsageError(f"NONREV_SEED must be an integer: {env_seed!r}") from e

        out_dir = Path(values["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        plot = bool(values.get("plot"))

        if ns.command == "sample":
            _cmd_sample(values, out_dir, seed)
        elif ns.command == "spectrum":
            _cmd_spectrum(values, out_dir, seed)
        elif ns.command == "ou":
            _cmd_ou(values, out_dir, seed, plot)
        elif ns.command == "scaling":
            _cmd_scaling(values, out_dir, seed, plot)
        else:
            _cmd_compare(values, out_dir, seed, plot)
        return 0
    except _UsageError as e:
        print(f"error: usage: {_one_line(e)}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: usage: {_one_line(e)}", file=sys.stderr)
        return 1
    except NumericalFailure as e:
        print(f"error: numerical: {_one_line(e)}", file=sys.stderr)
        return 2


def _one_line(e: BaseException) -> str:
    return " ".join(str(e).split())


def main() -> None:
    sys.exit(run(argv=None))


if __name__ == "__main__":
    main()
