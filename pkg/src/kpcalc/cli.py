"""Batch driver: ``kpcalc {factorize,kp,taylor,prop4,bell}``.

Reports go to stdout as JSON and a short summary goes to stderr.  Exit status
is 0 when every check passes, 1 when one fails and 2 for a bad configuration.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sympy.utilities.iterables import multiset_partitions

from .coeffring import MODE_MAX
from .errors import ConfigError, KPCalcError
from .fio import naive_clh_defect, prop4_check, prop4_convergence
from .hseries import HSeries, birkhoff_factor, growth_audit
from .kpflows import finite_difference_dL, lax_residual, proof_identities, scale_times, solve
from .presets import random_dressing, taylor_regimes, transport_operator
from .symbols import Symbol
from .taylor import bell_table, verify_taylor_theorem

COMMANDS = ("factorize", "kp", "taylor", "prop4", "bell")

DEFAULT_TOLERANCES = {
    "roundtrip": 1e-9,
    "lax": 1e-8,
    "bracket": 1e-12,
    "identity": 1e-8,
    "fd": 1e-4,
    "taylor_identity": 1e-10,
    "taylor_undressed": 1e-9,
    "prop4": 1e-5,
    "order": 1.9,
    "bell": 1e-12,
}

# per-command defaults for the truncation knobs left unset
COMMAND_DEFAULTS = {
    "factorize": {"N": 6, "K": 6, "M": 3, "instances": 10},
    "kp": {"N": 4, "K": 4, "M": 2, "instances": 3},
    "taylor": {"N": 6, "K": 12, "M": 4, "instances": 1},
    "prop4": {"N": 4, "K": 4, "M": 8, "instances": 1},
    "bell": {"N": 8, "K": 8, "M": 0, "instances": 1},
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    N: int
    K: int
    M: int
    M_max: int = MODE_MAX
    d: int = 1
    rk4_steps: int = 32
    t: float = 0.5
    seed: int = 0
    instances: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.N < 0 or self.K < self.N:
            raise ConfigError(f"need 0 <= N <= K, got N={self.N}, K={self.K}")
        if not 0 <= self.M <= self.M_max or self.M_max > MODE_MAX:
            raise ConfigError(f"need 0 <= M <= M_max <= {MODE_MAX}, got M={self.M}, M_max={self.M_max}")
        if self.d < 1:
            raise ConfigError(f"matrix dimension must be positive, got {self.d}")
        if self.rk4_steps < 2 or self.rk4_steps % 2:
            raise ConfigError(f"rk4_steps must be even and >= 2, got {self.rk4_steps}")
        if self.instances < 1:
            raise ConfigError("instances must be positive")
        if not math.isfinite(self.t):
            raise ConfigError("t must be finite")
        for name, tol in self.tolerances.items():
            if not (math.isfinite(tol) and tol > 0):
                raise ConfigError(f"tolerance {name} must be positive, got {tol}")

    def to_json(self) -> dict:
        return asdict(self)


# -- configuration ---------------------------------------------------------------

_KEYS = {"n": "N", "k": "K", "modes": "M", "m_max": "M_max", "dim": "d", "rk4_steps": "rk4_steps",
         "t": "t", "seed": "seed", "instances": "instances"}


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lower()] = value
    return out


def _convert(key: str, value) -> tuple[str, object]:
    try:
        if key.startswith("tol_"):
            return key, float(value)
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr = _KEYS[key]
        return attr, float(value) if attr == "t" else int(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def build_config(command: str, file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    values = dict(COMMAND_DEFAULTS[command])
    tolerances = dict(DEFAULT_TOLERANCES)
    explicit_K = False
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            attr, value = _convert(key, raw)
            if attr.startswith("tol_"):
                name = attr[4:]
                if name not in tolerances:
                    raise ConfigError(f"unknown tolerance {name!r}")
                tolerances[name] = value
            else:
                values[attr] = value
                explicit_K |= attr == "K"
    if command == "kp" and not explicit_K:
        values["K"] = values["N"]
    return RunConfig(command=command, tolerances=tolerances, **values)


# -- reports ----------------------------------------------------------------------

@dataclass
class Report:
    command: str
    config: RunConfig
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def check(self, name: str, residual: float, tolerance: float, passed: bool | None = None) -> None:
        residual = float(residual)
        finite = math.isfinite(residual)
        if passed is None:
            passed = residual <= tolerance
        self.checks.append({"name": name, "residual": residual if finite else None,
                            "tolerance": tolerance, "pass": bool(passed and finite)})

    def failed(self, name: str, exc: Exception) -> None:
        self.checks.append({"name": name, "residual": None, "tolerance": None, "pass": False,
                            "error": f"{type(exc).__name__}: {exc}"})

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self) -> dict:
        return {"command": self.command, "config": self.config.to_json(), "checks": self.checks,
                "info": self.info, "passed": self.passed, "wall_time": self.wall_time}


def _guarded(report: Report, name: str, func) -> None:
    try:
        func()
    except KPCalcError as exc:
        report.failed(name, exc)


# -- commands ---------------------------------------------------------------------

def cmd_factorize(cfg: RunConfig) -> Report:
    rep = Report("factorize", cfg)
    tol = cfg.tolerances

    one = HSeries.one(cfg.N, cfg.d, cfg.K)
    fac = birkhoff_factor(one)
    rep.check("unit_one_roundtrip", fac.recompose().diff_norm(one), 0.0, fac.recompose() == one)

    rng = np.random.default_rng(cfg.seed)
    worst = {"roundtrip": 0.0, "s_differential_part": 0.0}
    growth_ok = deterministic = True
    last = None
    for _ in range(cfg.instances):
        U = HSeries.random_unit(rng, cfg.N, cfg.d, cfg.K, min(cfg.M, 3))
        fac = birkhoff_factor(U)
        worst["roundtrip"] = max(worst["roundtrip"], fac.recompose().diff_norm(U))
        S_minus_1 = fac.s_factor - HSeries.one(cfg.N, cfg.d, cfg.K)
        worst["s_differential_part"] = max(worst["s_differential_part"], S_minus_1.d_part().max_abs())
        growth_ok &= growth_audit(fac.y_factor).ok
        again = birkhoff_factor(U)
        deterministic &= again.s_factor == fac.s_factor and again.y_factor == fac.y_factor
        last = fac
    rep.check("random_roundtrip", worst["roundtrip"], tol["roundtrip"])
    rep.check("s_minus_one_integral", worst["s_differential_part"], 0.0,
              worst["s_differential_part"] == 0)
    rep.check("y_growth", 0.0 if growth_ok else 1.0, 0.0, growth_ok)
    rep.check("refactor_bitwise", 0.0 if deterministic else 1.0, 0.0, deterministic)

    # negative control: an order n+1 term in y_n must be flagged
    n = max(1, cfg.N // 2)
    bad = list(last.y_factor.terms)
    bad[n] = bad[n] + Symbol.d_power(n + 1, cfg.d, cfg.K)
    audit = growth_audit(HSeries(tuple(bad)))
    flagged = not audit.ok and audit.violation == n
    rep.check("corrupted_y_flagged", 0.0 if flagged else 1.0, 0.0, flagged)
    return rep


def cmd_kp(cfg: RunConfig) -> Report:
    rep = Report("kp", cfg)
    tol = cfg.tolerances
    flows = tuple(range(1, min(3, cfg.N) + 1))
    times = scale_times({1: 0.2, 2: 0.1, 3: 0.05}, jets=flows)

    trivial = solve(Symbol.identity(cfg.d, cfg.K), times, cfg.N)
    rep.check("trivial_dressing_lax", max(lax_residual(trivial, n).residual for n in flows), 1e-15)

    rng = np.random.default_rng(cfg.seed)
    worst = dict.fromkeys(("lax", "lax_s_form", "bracket", "d_identity", "s_identity", "fd"), 0.0)

    def run():
        for _ in range(cfg.instances):
            S0 = random_dressing(rng, d=cfg.d, K=cfg.K, M=min(cfg.M, 4))
            sol = solve(S0, times, cfg.N)
            for n in flows:
                lax = lax_residual(sol, n)
                ids = proof_identities(sol, n)
                fd = finite_difference_dL(sol.L0, times, n).diff_norm(sol.jet(n).dL)
                for key, val in (("lax", lax.residual), ("lax_s_form", lax.residual_s_form),
                                 ("bracket", lax.bracket_agreement), ("d_identity", ids.d_identity),
                                 ("s_identity", ids.s_identity), ("fd", fd)):
                    worst[key] = max(worst[key], val)
        rep.check("lax_residual", worst["lax"], tol["lax"])
        rep.check("lax_residual_s_form", worst["lax_s_form"], tol["lax"])
        rep.check("bracket_agreement", worst["bracket"], tol["bracket"])
        rep.check("d_part_identity", worst["d_identity"], tol["identity"])
        rep.check("s_part_identity", worst["s_identity"], tol["identity"])
        rep.check("finite_difference", worst["fd"], tol["fd"])

    _guarded(rep, "kp_suite", run)
    return rep


def cmd_taylor(cfg: RunConfig) -> Report:
    rep = Report("taylor", cfg)
    tol = cfg.tolerances
    regimes = taylor_regimes()
    for name, key in (("identity", "taylor_identity"), ("undressed", "taylor_undressed")):
        r = regimes[name]

        def run(r=r, name=name, key=key):
            out = verify_taylor_theorem(r.S0(r.Ks[0]), r.g, r.f, r.x0, r.N)
            rep.info[name] = [o.abs_diff for o in out.orders]
            rep.check(f"{name}_diffeo" if name == "identity" else "undressed", out.max_diff, tol[key])
        _guarded(rep, name, run)

    r = regimes["general"]

    def general():
        eps = [verify_taylor_theorem(r.S0(K), r.g, r.f, r.x0, r.N).max_diff for K in r.Ks]
        rep.info["general"] = {"K": list(r.Ks), "residual": eps}
        worst_ratio = max(b / a for a, b in zip(eps, eps[1:]))
        rep.check("general_monotone_in_K", worst_ratio, 1.0, worst_ratio < 1.0)
    _guarded(rep, "general", general)
    return rep


def cmd_prop4(cfg: RunConfig) -> Report:
    rep = Report("prop4", cfg)
    tol = cfg.tolerances
    L = transport_operator(cfg.K)

    def run():
        r = prop4_check(L, cfg.t, cfg.M, cfg.rk4_steps)
        rep.info["defect_all_modes"] = r.full_defect
        rep.check("defect", r.defect, tol["prop4"])
        base = max(2, cfg.rk4_steps // 4)
        conv = prop4_convergence(L, cfg.t, cfg.M, (base, 2 * base, 4 * base))
        rep.info["refinement"] = conv
        order = min(conv["orders"])
        rep.check("rk_order", order, tol["order"], order >= tol["order"])
    _guarded(rep, "prop4", run)
    rep.info["naive_clh_gap"] = naive_clh_defect(L, cfg.t, cfg.N)
    return rep


def bell_by_partitions(n: int, k: int, u) -> float:
    return sum(math.prod(u[len(b) - 1] for b in part) for part in multiset_partitions(list(range(n)), k))


def cmd_bell(cfg: RunConfig) -> Report:
    rep = Report("bell", cfg)
    rng = np.random.default_rng(cfg.seed)
    u = list(rng.normal(size=max(cfg.N, 1)))
    table = bell_table(cfg.N, u)
    worst = 0.0
    for n in range(1, cfg.N + 1):
        for k in range(1, n + 1):
            ref = bell_by_partitions(n, k, u)
            worst = max(worst, abs(table[n][k] - ref) / max(1.0, abs(ref)))
    rep.check("partition_enumeration", worst, cfg.tolerances["bell"])
    degenerate = bell_table(cfg.N, [1] + [0] * cfg.N)
    exact = all(degenerate[n][k] == (n == k) for n in range(1, cfg.N + 1) for k in range(1, n + 1))
    rep.check("singleton_family", 0.0 if exact else 1.0, 0.0, exact)
    return rep


RUNNERS = {"factorize": cmd_factorize, "kp": cmd_kp, "taylor": cmd_taylor,
           "prop4": cmd_prop4, "bell": cmd_bell}


def run(cfg: RunConfig) -> Report:
    start = time.perf_counter()
    report = RUNNERS[cfg.command](cfg)
    report.wall_time = time.perf_counter() - start
    return report


# -- entry point ------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kpcalc", description="Run truncated KP verification suites.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="PATH", help="flat key=value file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="h-order N")
    p.add_argument("--k", type=int, help="symbol depth K")
    p.add_argument("--modes", type=int, help="Fourier mode cap M")
    p.add_argument("--dim", type=int, help="matrix dimension d")
    p.add_argument("--json-only", action="store_true", help="suppress the stderr summary")
    return p


def _summary(report: Report) -> str:
    lines = [f"{report.command}: {'PASS' if report.passed else 'FAIL'} ({report.wall_time:.2f}s)"]
    for c in report.checks:
        res = "n/a" if c["residual"] is None else f"{c['residual']:.3e}"
        lines.append(f"  {'ok  ' if c['pass'] else 'FAIL'} {c['name']}: {res}"
                     + (f" [{c['error']}]" if "error" in c else ""))
    return "\n".join(lines)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {"seed": args.seed, "n": args.n, "k": args.k, "modes": args.modes, "dim": args.dim}
        cfg = build_config(args.command, file_values, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    report = run(cfg)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True, default=_jsonable))
    if not args.json_only:
        print(_summary(report), file=sys.stderr)
    return 0 if report.passed else 1


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
