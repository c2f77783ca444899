"""Text formats for void sets, displacements and experiment configs."""
from __future__ import annotations

import configparser
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeDomain, VoidSet


class ValidationError(ValueError):
    """Bad input: a malformed file, an unknown config key, inconsistent dimensions."""


class FormatError(ValidationError):
    def __init__(self, path, lineno, msg):
        self.path, self.lineno = path, lineno
        super().__init__(f"{path}:{lineno}: {msg}")


class ConfigError(ValidationError):
    pass


def fmt(x, digits=12):
    """Number with ``digits`` significant digits; ints stay ints."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.{digits}g}"


def atomic_write(path, text: str):
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- void sets


def format_void_set(E: VoidSet) -> str:
    lines = [f"dim {E.domain.d}", f"eps {fmt(E.domain.epsilon, 17)}", f"count {len(E)}"]
    lines += [" ".join(str(v) for v in row) for row in E]
    return "\n".join(lines) + "\n"


def write_void_set(path, E: VoidSet):
    atomic_write(path, format_void_set(E))


def _header(path, lines, pos, key, conv):
    if pos >= len(lines):
        raise FormatError(path, pos + 1, f"missing '{key}' line")
    lineno, text = lines[pos]
    parts = text.split()
    if len(parts) != 2 or parts[0] != key:
        raise FormatError(path, lineno, f"expected '{key} <value>'")
    try:
        return conv(parts[1])
    except ValueError:
        raise FormatError(path, lineno, f"bad value for '{key}'") from None


def _content_lines(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                out.append((lineno, line))
    return out


def read_void_set_raw(path):
    """(d, eps, indices) with the indices as read (any order, duplicates kept)."""
    lines = _content_lines(path)
    d = _header(path, lines, 0, "dim", int)
    if d not in (2, 3):
        raise FormatError(path, lines[0][0], "dim must be 2 or 3")
    eps = _header(path, lines, 1, "eps", float)
    if not eps > 0:
        raise FormatError(path, lines[1][0], "eps must be positive")
    n = _header(path, lines, 2, "count", int)
    body = lines[3:]
    if len(body) != n:
        where = body[-1][0] if body else lines[2][0]
        raise FormatError(path, where, f"count says {n} sites, found {len(body)}")
    idx = np.zeros((n, d), dtype=np.int64)
    for k, (lineno, text) in enumerate(body):
        parts = text.split()
        if len(parts) != d:
            raise FormatError(path, lineno, f"expected {d} integers")
        try:
            idx[k] = [int(p) for p in parts]
        except ValueError:
            raise FormatError(path, lineno, "indices must be integers") from None
    return d, eps, idx, [ln for ln, _ in body]


def read_void_set(path, domain: LatticeDomain) -> VoidSet:
    d, eps, idx, linenos = read_void_set_raw(path)
    if d != domain.d:
        raise ValidationError(f"{path}: dimension {d} does not match the domain ({domain.d})")
    if not math.isclose(eps, domain.epsilon, rel_tol=1e-12):
        raise ValidationError(f"{path}: eps {eps} does not match the domain ({domain.epsilon})")
    if len(idx):
        ok = domain.in_omega(idx)
        if not np.all(ok):
            k = int(np.flatnonzero(~ok)[0])
            raise FormatError(path, linenos[k], "index lies outside omega")
    return VoidSet(domain, idx)


# ---------------------------------------------------------------- displacements


def format_displacement(u, delta) -> str:
    dom = u.domain
    lines = [f"dim {dom.d}", f"eps {fmt(dom.epsilon, 17)}", f"delta {fmt(delta, 17)}"]
    ulo = dom.u_index_box[0]
    for rel in np.ndindex(*dom.u_shape):
        i = [str(int(a + b)) for a, b in zip(rel, ulo)]
        lines.append(" ".join(i + [fmt(v) for v in u.values[rel]]))
    return "\n".join(lines) + "\n"


def read_displacement(path):
    """(d, eps, delta, indices, values)."""
    lines = _content_lines(path)
    d = _header(path, lines, 0, "dim", int)
    eps = _header(path, lines, 1, "eps", float)
    delta = _header(path, lines, 2, "delta", float)
    idx, vals = [], []
    for lineno, text in lines[3:]:
        parts = text.split()
        if len(parts) != 2 * d:
            raise FormatError(path, lineno, f"expected {d} indices and {d} values")
        try:
            idx.append([int(p) for p in parts[:d]])
            vals.append([float(p) for p in parts[d:]])
        except ValueError:
            raise FormatError(path, lineno, "cannot parse displacement line") from None
    return d, eps, delta, np.array(idx, dtype=np.int64).reshape(-1, d), np.array(vals).reshape(-1, d)


# ---------------------------------------------------------------- configs

# section -> key -> default (None means "no default", the key is optional)
SCHEMA = {
    "run": {"seed": None, "set": None, "out": None},
    "domain": {"dim": 3, "eps": 0.0625, "omega_lo": None, "omega_hi": None, "pad": None},
    "neighbors": {"model": "nearest", "c1": 1.0, "c2": 1.0, "file": None},
    "cells": {"K1": 1.0, "K2": 1.0, "chi_penalty": 0.0, "surf_scale": 1.0},
    "solver": {"tol": 1e-8, "max_iter": 2000, "delta": 1e-3, "init": "affine", "K1": None, "K2": None},
    "strain": {"F": "0.1 0 0 0 0 0 0 0 0"},
    "curvature": {"eta": None, "gamma": 1.0, "q": 2.0, "mode": "generic"},
    "regime": {"eps": "2^-6 2^-7 2^-8 2^-9 2^-10 2^-11 2^-12", "q": 2.0, "s": 0.9, "frac": 0.1,
               "eta": None, "gamma0": 1.0, "rate": 0.9},
    "smooth": {"sigma": 0.3, "t": 0.1, "grid": None},
    "gamma": {"omega_lo": None, "omega_hi": None, "elastic": False},
}


def parse_number(text):
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return float(base) ** float(exp)
    return float(text)


def parse_list(text):
    return [parse_number(t) for t in str(text).replace(",", " ").split()]


def parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    overrides: list = field(default_factory=list)
    source: str | None = None

    @classmethod
    def load(cls, path=None):
        cfg = cls(source=None if path is None else os.fspath(path))
        for sec, keys in SCHEMA.items():
            cfg.values[sec] = {k: v for k, v in keys.items()}
        if path is None:
            return cfg
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str  # keep K1, K2 as written
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for key, val in cp.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"{path}: unknown key '{key}' in section [{sec}]")
                cfg.values[sec][key] = val
        return cfg

    def get(self, sec, key):
        return self.values[sec][key]

    def number(self, sec, key):
        v = self.get(sec, key)
        if v is None:
            return None
        try:
            return parse_number(str(v)) if isinstance(v, str) else float(v)
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: not a number: {v!r}") from None

    def integer(self, sec, key):
        v = self.number(sec, key)
        if v is None:
            return None
        if v != int(v):
            raise ConfigError(f"[{sec}] {key}: not an integer: {v!r}")
        return int(v)

    def numbers(self, sec, key):
        v = self.get(sec, key)
        if v is None:
            return None
        try:
            return parse_list(v) if isinstance(v, str) else [float(x) for x in v]
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: not a list of numbers: {v!r}") from None

    def override(self, sec, key, value, flag):
        if value is None:
            return
        self.values[sec][key] = value
        self.overrides.append(f"{sec}.{key} <- {flag}")

    def header_lines(self):
        out = [f"# config {self.source or '(defaults)'}"]
        for sec in SCHEMA:
            for key, val in self.values[sec].items():
                out.append(f"# {sec}.{key} = {'' if val is None else val}")
        out += [f"# override {o}" for o in self.overrides]
        return out
