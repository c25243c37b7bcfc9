"""Run configuration: ``key = value`` text files with command-line overrides.

Every key has a type and an explicit range; unknown keys are errors.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_text", "KEYS"]


class ConfigError(ValueError):
    pass


def _int(lo, hi):
    def conv(v):
        try:
            x = int(v)
        except ValueError:
            raise ConfigError(f"expected an integer, got {v!r}") from None
        if not lo <= x <= hi:
            raise ConfigError(f"{x} outside [{lo}, {hi}]")
        return x

    return conv


def _float(lo, hi, open_lo=False):
    def conv(v):
        try:
            x = float(v)
        except ValueError:
            raise ConfigError(f"expected a number, got {v!r}") from None
        if x != x or x > hi or x < lo or (open_lo and x == lo):
            raise ConfigError(f"{x} outside {'(' if open_lo else '['}{lo}, {hi}]")
        return x

    return conv


def _choice(*options):
    def conv(v):
        v = str(v).strip()
        if v not in options:
            raise ConfigError(f"{v!r} is not one of {', '.join(options)}")
        return v

    return conv


def _int_list(lo, hi, min_len=1, max_len=64):
    item = _int(lo, hi)

    def conv(v):
        parts = [p for p in str(v).replace(" ", "").split(",") if p]
        if not min_len <= len(parts) <= max_len:
            raise ConfigError(f"expected {min_len}..{max_len} comma-separated integers, got {len(parts)}")
        return tuple(item(p) for p in parts)

    return conv


def _path(v):
    v = str(v).strip()
    if not v:
        raise ConfigError("empty path")
    return v


# key: (converter, default, help)
KEYS = {
    "n": (_int(1, 3), 1, "quaternionic dimension"),
    "side": (_int(4, 64), 8, "grid side length (all axes)"),
    "sides": (_int_list(4, 64, 4, 12), None, "per-axis side lengths, overrides side"),
    "scheme": (_choice("spectral", "fd2"), "spectral", "differentiation scheme"),
    "tol": (_float(0.0, 1.0, open_lo=True), 1e-9, "residual tolerance (relative to max f)"),
    "max_iter": (_int(1, 500), 50, "Newton iteration cap"),
    "normalization": (_choice("max", "mean"), "max", "gauge of the solution"),
    "rhs": (_choice("f", "exp"), "f", "equation right-hand side: A f or A e^f"),
    "f_family": (_choice("const", "cos", "exp", "random", "file"), "const", "right-hand side family"),
    "f_amplitude": (_float(0.0, 10.0), 0.1, "amplitude of the cos/random family"),
    "f_mode": (_int_list(-16, 16, 1, 12), (1,), "integer wave vector of the cos family"),
    "f_file": (_path, None, "QMAG file holding f (f_family = file)"),
    "f_k": (_float(0.0, 20.0), 1.0, "exponent of the exp family"),
    "s_amplitude": (_float(0.0, 5.0), 0.3, "amplitude of the smooth profile s"),
    "ks": (_int_list(0, 20, 2, 32), (0, 1, 2, 3, 4, 5), "sweep exponents k (f_k = exp(k s) / mean)"),
    "refine_side": (_int(0, 64), 0, "second grid side for the stability check (0 = off)"),
    "stability": (_float(0.0, 10.0), 0.2, "allowed relative change of the envelope constants"),
    "eps": (_float(0.0, 1.0), 0.1, "size of the ddJ perturbation of Omega"),
    "perturb": (_choice("flat", "random"), "random", "Omega: flat or flat + eps ddJ s"),
    "theta0": (_choice("omega_n", "flat", "degenerate"), "omega_n", "reference (2n,0)-form"),
    "ratio_min": (_float(1.0, 1e300), 1e3, "required sigma_2 / sigma_1"),
    "green_checks": (_int(0, 10000), 100, "random functions in the reproduction check"),
    "l1_samples": (_int(0, 10000), 50, "random admissible functions in the L1 check"),
    "seed": (_int(0, 2**64 - 1), 0, "random seed"),
    "threads": (_int(1, 256), 1, "worker cap"),
}


@dataclass
class RunConfig:
    n: int = 1
    side: int = 8
    sides: tuple = None
    scheme: str = "spectral"
    tol: float = 1e-9
    max_iter: int = 50
    normalization: str = "max"
    rhs: str = "f"
    f_family: str = "const"
    f_amplitude: float = 0.1
    f_mode: tuple = (1,)
    f_file: str = None
    f_k: float = 1.0
    s_amplitude: float = 0.3
    ks: tuple = (0, 1, 2, 3, 4, 5)
    refine_side: int = 0
    stability: float = 0.2
    eps: float = 0.1
    perturb: str = "random"
    theta0: str = "omega_n"
    ratio_min: float = 1e3
    green_checks: int = 100
    l1_samples: int = 50
    seed: int = 0
    threads: int = 1

    def grid_sides(self, side=None):
        if self.sides is not None and side is None:
            if len(self.sides) != 4 * self.n:
                raise ConfigError(f"sides needs {4 * self.n} entries for n = {self.n}, got {len(self.sides)}")
            out = self.sides
        else:
            out = ((side or self.side),) * (4 * self.n)
        if self.scheme == "spectral" and any(s % 2 for s in out):
            raise ConfigError(f"spectral scheme needs even grid sides, got {out}")
        return tuple(out)

    def validate(self):
        self.grid_sides()
        if self.f_family == "file" and not self.f_file:
            raise ConfigError("f_family = file needs f_file")
        if len(self.f_mode) > 4 * self.n:
            raise ConfigError(f"f_mode has {len(self.f_mode)} entries, at most {4 * self.n} allowed")
        if self.refine_side and self.scheme == "spectral" and self.refine_side % 2:
            raise ConfigError("refine_side must be even for the spectral scheme")
        return self

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_text(text, source="<config>"):
    """``key = value`` pairs; ``#`` comments and blank lines are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value, f"{source}:{lineno}")
    return out


def _apply(cfg, key, value, where):
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    conv = KEYS[key][0]
    try:
        setattr(cfg, key, conv(value))
    except ConfigError as exc:
        raise ConfigError(f"{where}: {key}: {exc}") from None


def load_config(path=None, overrides=(), **kwargs):
    """Build a validated :class:`RunConfig`.

    ``overrides`` are ``key=value`` strings applied after the file; keyword
    arguments (already typed, ``None`` meaning unset) are applied last.
    """
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for key, (value, where) in parse_text(text, str(path)).items():
            _apply(cfg, key, value, where)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        _apply(cfg, key, value, "override")
    for key, value in kwargs.items():
        if value is not None:
            _apply(cfg, key, str(value), f"--{key}")
    return cfg.validate()
