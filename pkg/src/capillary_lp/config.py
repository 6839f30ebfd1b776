"""Run configuration: flat ``key = value`` text with ``#`` comments.

Numeric values may be simple arithmetic in ``pi`` such as ``pi/4``.  Lists
are comma separated; lists of ``phi`` specifications are separated by ``;``
because a specification may itself contain commas.

Example::

    theta = pi/4
    p = 1.5
    phi = even-bump:0.5,0.5
    n_rho = 65
    n_phi = 128
    gamma_fraction = 0.3, 0.6, 0.9
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .cap_geometry import CapDomain, ScalarField, ell_profile, make_domain, read_field_csv, reflect
from .curvature import CurvatureSpec, Kind
from .solver import SolveConfig, model_phi

__all__ = [
    "ConfigError",
    "PhiSpec",
    "RunConfig",
    "parse_number",
    "parse_config",
    "load_config",
    "even_bump",
]

# Relative evenness defect tolerated in user supplied phi files.
FILE_EVENNESS_TOL = 1e-12


class ConfigError(ValueError):
    """Malformed or out-of-range configuration, with key and line context."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None, source: str | None = None):
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        if key is not None:
            message = f"key '{key}': {message}"
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.key = key
        self.line = line


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi}


def parse_number(text: str) -> float:
    """Evaluate a numeric literal or an arithmetic expression in ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(f"not a number: {text!r}")

    try:
        value = ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


def even_bump(domain: CapDomain, amplitude: float, width: float) -> ScalarField:
    """``1 + A a^2 exp(-b^2 / w^2)`` with ``a = x_1 / sin(theta)``, ``b = x_2 / sin(theta)``.

    Both ``a^2`` and ``b^2`` depend on ``rho`` and ``cos(2 phi)`` only, so the
    profile is even and not rotationally symmetric.  It is positive for
    ``A > -1`` since ``a^2 <= 1`` on the cap.
    """
    st = math.sin(domain.theta)

    def f(rho, phi):
        a2 = 0.5 * (np.sin(rho) / st) ** 2 * (1.0 + np.cos(2.0 * phi))
        b2 = 0.5 * (np.sin(rho) / st) ** 2 * (1.0 - np.cos(2.0 * phi))
        return 1.0 + amplitude * a2 * np.exp(-b2 / width**2)

    return domain.even_from_function(f, positive=True)


@dataclass(frozen=True)
class PhiSpec:
    """A named datum: ``model``, ``constant:<v>``, ``even-bump:<A>,<w>`` or ``file:<path>``."""

    kind: str
    args: tuple[float, ...] = ()
    path: str | None = None

    @classmethod
    def parse(cls, text: str, base: Path | None = None) -> "PhiSpec":
        text = text.strip()
        name, _, rest = text.partition(":")
        name = name.strip()
        if name == "model":
            if rest.strip():
                raise ValueError("'model' takes no arguments")
            return cls("model")
        if name == "file":
            if not rest.strip():
                raise ValueError("'file:' needs a path")
            path = Path(rest.strip())
            if base is not None and not path.is_absolute():
                path = base / path
            path = path.resolve()
            return cls("file", path=str(path))
        if name not in ("constant", "even-bump"):
            raise ValueError(f"unknown phi specification {text!r}; expected model, constant:<v>, even-bump:<A>,<w> or file:<path>")
        args = tuple(parse_number(a) for a in rest.split(",")) if rest.strip() else ()
        if name == "constant":
            if len(args) != 1 or not args[0] > 0:
                raise ValueError("constant:<v> needs one positive value")
        else:
            if len(args) != 2:
                raise ValueError("even-bump:<A>,<w> needs an amplitude and a width")
            if not args[0] > -1.0 or not args[1] > 0.0:
                raise ValueError("even-bump needs amplitude > -1 and width > 0")
        return cls(name, args)

    def __str__(self) -> str:
        if self.kind == "model":
            return "model"
        if self.kind == "file":
            return f"file:{self.path}"
        return f"{self.kind}:" + ",".join(repr(a) for a in self.args)

    @property
    def axisymmetric(self) -> bool:
        return self.kind in ("model", "constant")

    def build(self, domain: CapDomain, curvature: CurvatureSpec, p: float, scale: float | None = None) -> ScalarField:
        """Sample the datum on ``domain``; the result is positive and exactly even."""
        if self.kind == "model":
            return model_phi(domain, curvature, p, 1.0 if scale is None else scale)
        if self.kind == "constant":
            return ScalarField(domain, np.full(domain.shape, self.args[0]), positive=True)
        if self.kind == "even-bump":
            return even_bump(domain, *self.args)
        f = read_field_csv(self.path, domain)
        if f.min() <= 0.0:
            raise ValueError(f"{self.path}: phi must be positive, min = {f.min():.3e}")
        asym = float(np.max(np.abs(f.values - reflect(domain, f).values)) / np.max(np.abs(f.values)))
        if asym > FILE_EVENNESS_TOL:
            raise ValueError(f"{self.path}: phi is not even, relative defect {asym:.3e}")
        return ScalarField(domain, 0.5 * (f.values + reflect(domain, f).values), positive=True)

    def profile(self, theta: float, curvature: CurvatureSpec, p: float, scale: float | None = None):
        """The datum as a function of ``rho``, for axisymmetric specifications."""
        if self.kind == "constant":
            return self.args[0]
        if self.kind == "model":
            r = 1.0 if scale is None else scale
            c = curvature.model_value * r**curvature.k
            return lambda rho: c * (r * ell_profile(theta, rho)) ** (1.0 - p)
        raise ValueError(f"phi = {self} is not rotationally symmetric")


@dataclass(frozen=True)
class RunConfig:
    theta: float = math.pi / 4
    n: int = 2
    k: int = 1
    p: float = 2.0
    curvature: str = "sigma_k"
    phi: PhiSpec = PhiSpec("model")
    n_rho: int = 64
    n_phi: int = 128
    newton_tol: float = 1e-10
    max_newton_iters: int = 60
    linear_tol: float = 1e-10
    scale: float | None = None
    # Absolute gamma values; gamma_fraction is relative to 2 (p - 1) / k.
    gamma: tuple[float, ...] = ()
    gamma_fraction: tuple[float, ...] = ()
    oracle_nodes: int = 4096
    run_id: str = "run"
    out: str = "."
    sweep_theta: tuple[float, ...] | None = None
    sweep_p: tuple[float, ...] | None = None
    sweep_phi: tuple[PhiSpec, ...] | None = None
    sweep_grid: tuple[tuple[int, int], ...] | None = None
    sweep_gamma_fraction: tuple[float, ...] | None = None
    lines: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    @property
    def curvature_spec(self) -> CurvatureSpec:
        return CurvatureSpec(Kind(self.curvature), self.k, self.n)

    @property
    def gamma_upper(self) -> float:
        return 2.0 * (self.p - 1.0) / self.k

    @property
    def gammas(self) -> tuple[float, ...]:
        """Absolute gamma values to verify; half the admissible range by default."""
        out = tuple(self.gamma) + tuple(f * self.gamma_upper for f in self.gamma_fraction)
        if not out and self.gamma_upper > 0:
            out = (0.5 * self.gamma_upper,)
        return out

    def domain(self) -> CapDomain:
        return make_domain(self.theta, self.n, self.n_rho, self.n_phi)

    def solve_config(self) -> SolveConfig:
        return SolveConfig(
            newton_tol=self.newton_tol,
            max_newton_iters=self.max_newton_iters,
            linear_tol=self.linear_tol,
            scale=self.scale,
        )

    @property
    def output_dir(self) -> Path:
        return Path(self.out)

    def path(self, suffix: str) -> Path:
        return self.output_dir / f"{self.run_id}.{suffix}"

    def with_overrides(self, out: str | None = None, run_id: str | None = None) -> "RunConfig":
        upd = {}
        if out is not None:
            upd["out"] = out
        if run_id is not None:
            _check_run_id(run_id, None, None)
            upd["run_id"] = run_id
        return replace(self, **upd) if upd else self

    def problem_key(self) -> tuple:
        """Fields that determine the solved problem."""
        return (self.theta, self.n, self.k, self.p, self.curvature, str(self.phi), self.n_rho, self.n_phi, self.scale)

    def to_text(self) -> str:
        """Canonical ``key = value`` text that parses back to an equal config."""
        out = []
        for f in fields(self):
            if f.name == "lines":
                continue
            v = getattr(self, f.name)
            key = _FIELD_TO_KEY.get(f.name, f.name)
            if v is None:
                continue
            if f.name == "sweep_phi":
                text = "; ".join(str(x) for x in v)
            elif f.name == "sweep_grid":
                text = ", ".join(f"{a}x{b}" for a, b in v)
            elif isinstance(v, tuple) and f.name != "phi":
                text = ", ".join(repr(x) for x in v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            out.append(f"{key} = {text}" if text else f"{key} =")
        return "\n".join(out) + "\n"


_FIELD_TO_KEY = {
    "sweep_theta": "sweep.theta",
    "sweep_p": "sweep.p",
    "sweep_phi": "sweep.phi",
    "sweep_grid": "sweep.grid",
    "sweep_gamma_fraction": "sweep.gamma_fraction",
}
_KEY_TO_FIELD = {v: k for k, v in _FIELD_TO_KEY.items()}
_INT_KEYS = {"n", "k", "n_rho", "n_phi", "max_newton_iters", "oracle_nodes"}
_FLOAT_KEYS = {"theta", "p", "newton_tol", "linear_tol", "scale"}
_FLOAT_LIST_KEYS = {"gamma", "gamma_fraction", "sweep.theta", "sweep.p", "sweep.gamma_fraction"}
_STR_KEYS = {"curvature", "run_id", "out"}
KNOWN_KEYS = frozenset(_INT_KEYS | _FLOAT_KEYS | _FLOAT_LIST_KEYS | _STR_KEYS | {"phi", "sweep.phi", "sweep.grid"})


def _check_run_id(value: str, line, source):
    if not value or any(c in value for c in "/\\") or value in (".", ".."):
        raise ConfigError(f"invalid run id {value!r}", "run_id", line, source)


def _int(text: str) -> int:
    v = parse_number(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _grid(text: str) -> tuple[int, int]:
    a, sep, b = text.strip().partition("x")
    if not sep:
        raise ValueError(f"grid must look like 64x128, got {text!r}")
    return _int(a), _int(b)


def _convert(key: str, raw: str, base: Path | None):
    if key in _INT_KEYS:
        return _int(raw)
    if key in _FLOAT_KEYS:
        return parse_number(raw)
    if key in _FLOAT_LIST_KEYS:
        return tuple(parse_number(x) for x in raw.split(",")) if raw.strip() else ()
    if key == "phi":
        return PhiSpec.parse(raw, base)
    if key == "sweep.phi":
        return tuple(PhiSpec.parse(x, base) for x in raw.split(";") if x.strip())
    if key == "sweep.grid":
        return tuple(_grid(x) for x in raw.split(",")) if raw.strip() else ()
    if key == "curvature":
        return Kind(raw.strip()).value
    return raw.strip()


def parse_config(text: str, source: str | None = None, base: Path | None = None) -> RunConfig:
    """Parse configuration text.

    Raises
    ------
    ConfigError
        With the line number and key of the first problem found.
    """
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", key or None, lineno, source)
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown key", key, lineno, source)
        if key in lines:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, lineno, source)
        try:
            values[_KEY_TO_FIELD.get(key, key)] = _convert(key, raw, base)
        except ValueError as exc:
            raise ConfigError(str(exc), key, lineno, source) from None
        lines[key] = lineno
    cfg = RunConfig(**values, lines=lines)
    validate(cfg, source)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, source=str(path), base=path.parent)


def validate(cfg: RunConfig, source: str | None = None) -> None:
    """Check every value against the preconditions of the numerical modules."""

    def fail(key, msg):
        raise ConfigError(msg, key, cfg.lines.get(key), source)

    def check_theta(key, t):
        if not 0.0 < t < 0.5 * math.pi:
            fail(key, f"theta must lie in (0, pi/2), got {t!r}")

    check_theta("theta", cfg.theta)
    if cfg.n != 2:
        fail("n", f"only n = 2 is supported, got {cfg.n}")
    try:
        cfg.curvature_spec
    except ValueError as exc:
        fail("k", str(exc))
    if not math.isfinite(cfg.p):
        fail("p", "p must be finite")
    for key, v in (("n_rho", cfg.n_rho), ("n_phi", cfg.n_phi)):
        if v < 8:
            fail(key, f"must be at least 8, got {v}")
    if cfg.n_phi % 2:
        fail("n_phi", "must be even so the reflection pairs nodes")
    for key in ("newton_tol", "linear_tol"):
        if not getattr(cfg, key) > 0:
            fail(key, "must be positive")
    if cfg.max_newton_iters < 1:
        fail("max_newton_iters", "must be at least 1")
    if cfg.scale is not None and not cfg.scale > 0:
        fail("scale", "must be positive")
    if cfg.oracle_nodes < 2048:
        fail("oracle_nodes", "the oracle needs at least 2048 nodes")
    _check_run_id(cfg.run_id, cfg.lines.get("run_id"), source)
    upper = cfg.gamma_upper
    for g in cfg.gamma:
        if not 0.0 < g < upper:
            fail("gamma", f"gamma = {g!r} must lie strictly inside (0, 2(p-1)/k) = (0, {upper:.6g})")
    for f in cfg.gamma_fraction:
        if not 0.0 < f < 1.0 or upper <= 0:
            fail("gamma_fraction", f"fraction {f!r} must lie strictly inside (0, 1) and needs p > 1")
    for t in cfg.sweep_theta or ():
        check_theta("sweep.theta", t)
    for p in cfg.sweep_p or ():
        if not p > 1.0:
            fail("sweep.p", f"sweep values of p must exceed 1 so that gamma ranges are non-empty, got {p!r}")
    for f in cfg.sweep_gamma_fraction or ():
        if not 0.0 < f < 1.0:
            fail("sweep.gamma_fraction", f"fraction {f!r} must lie strictly inside (0, 1)")
    for a, b in cfg.sweep_grid or ():
        if a < 8 or b < 8 or b % 2:
            fail("sweep.grid", f"grid {a}x{b} needs n_rho, n_phi >= 8 and n_phi even")
    if cfg.phi.kind == "file" and not Path(cfg.phi.path).is_file():
        fail("phi", f"no such file: {cfg.phi.path}")
