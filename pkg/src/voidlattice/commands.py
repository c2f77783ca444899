"""Subcommand implementations behind :mod:`voidlattice.cli`."""
from __future__ import annotations

import itertools
import os
import sys

import numpy as np

from .io import (ConfigError, ExperimentConfig, ValidationError, atomic_write, fmt, format_displacement,
                 format_void_set, parse_bool, read_void_set, read_void_set_raw)
from .lattice import LatticeDomain, VoidSet, VoxelSet


class Runner:
    def __init__(self, args):
        self.args = args
        self.cfg = ExperimentConfig.load(args.config)
        self.cfg.override("run", "seed", args.seed, "--seed")
        self.cfg.override("run", "out", args.out, "--out")
        if getattr(args, "set", None):
            self.cfg.override("run", "set", args.set, "--set")

    def progress(self, msg):
        if not self.args.quiet:
            print(msg, file=sys.stderr)

    def result(self, msg):
        print(msg)

    def path(self, name):
        return os.path.join(self.args.out, name)

    def emit_csv(self, name, columns, rows, extra_header=()):
        lines = self.cfg.header_lines() + [f"# {h}" for h in extra_header]
        lines.append(",".join(columns))
        for r in rows:
            lines.append(",".join(fmt(r[c]) if not isinstance(r[c], str) else r[c] for c in columns))
        p = self.path(name)
        atomic_write(p, "\n".join(lines) + "\n")
        self.progress(f"wrote {p}")
        return p

    def emit_text(self, name, text):
        p = self.path(name)
        atomic_write(p, text)
        self.progress(f"wrote {p}")
        return p

    # ---------------------------------------------------------------- inputs

    def seed(self, required=True):
        s = self.cfg.get("run", "seed")
        if s is None:
            if required:
                raise ConfigError("this command is randomized: --seed (or [run] seed) is required")
            return None
        return int(s)

    def omega(self, d, section="domain"):
        """Omega from the config; unset corners default to the unit cube in dimension d."""
        lo = self.cfg.numbers(section, "omega_lo")
        hi = self.cfg.numbers(section, "omega_hi")
        return ([0.0] * d if lo is None else lo), ([1.0] * d if hi is None else hi)

    def domain_for(self, d, eps):
        cfg = self.cfg
        lo, hi = self.omega(d)
        if len(lo) != d or len(hi) != d:
            raise ValidationError(f"domain box has dimension {len(lo)}, the void set has dimension {d}")
        pad = cfg.number("domain", "pad")
        return LatticeDomain.box(eps, lo, hi, pad=eps if pad is None else pad)

    def config_domain(self):
        d = self.cfg.integer("domain", "dim")
        return self.domain_for(d, self.cfg.number("domain", "eps"))

    def void_set(self, required=True):
        path = self.cfg.get("run", "set")
        if path is None:
            if required:
                raise ConfigError("a void-set file is required (--set or [run] set)")
            return None
        d, eps, _, _ = read_void_set_raw(path)
        dom = self.domain_for(d, eps)
        return read_void_set(path, dom)

    def neighbor_model(self, d):
        from .surface import NeighborModel, load_neighbor_model

        path = getattr(self.args, "neighbors", None) or self.cfg.get("neighbors", "file")
        if path:
            m = load_neighbor_model(path)
        else:
            kind = self.cfg.get("neighbors", "model")
            c1 = self.cfg.number("neighbors", "c1")
            c2 = self.cfg.number("neighbors", "c2")
            if kind == "nearest":
                m = NeighborModel.nearest(d, c1)
            elif kind == "nearest_and_diagonal":
                m = NeighborModel.nearest_and_diagonal(d, c1, c2)
            else:
                raise ConfigError(f"[neighbors] model: unknown model {kind!r}")
        if m.d != d:
            raise ValidationError(f"neighbour model has dimension {m.d}, the void set has dimension {d}")
        return m

    def cell_model(self):
        from .elastic import CellEnergyModel

        c = self.cfg
        K1 = c.number("solver", "K1")
        K2 = c.number("solver", "K2")
        return CellEnergyModel(K1=c.number("cells", "K1") if K1 is None else K1,
                               K2=c.number("cells", "K2") if K2 is None else K2,
                               chi_penalty=c.number("cells", "chi_penalty"),
                               surf_scale=c.number("cells", "surf_scale"))

    def strain(self, d):
        F = self.cfg.numbers("strain", "F")
        if len(F) == d * d:
            return np.array(F).reshape(d, d)
        if len(F) == 9 and d == 2:
            return np.array(F).reshape(3, 3)[:2, :2]
        raise ValidationError(f"[strain] F needs {d * d} entries, got {len(F)}")


# ---------------------------------------------------------------- commands


def cmd_energy(r: Runner):
    from .elastic import Displacement, elastic_energy

    r.cfg.override("solver", "delta", r.args.delta, "--delta")
    E = r.void_set(required=False)
    dom = E.domain if E is not None else r.config_domain()
    F = r.strain(dom.d)
    delta = r.cfg.number("solver", "delta")
    u = Displacement.affine(dom, F, E)
    e = elastic_energy(r.cell_model(), u, E, delta)
    row = dict(eps=dom.epsilon, delta=delta, voids=0 if E is None else len(E), energy=e)
    r.emit_csv("energy.csv", ["eps", "delta", "voids", "energy"], [row])
    r.result(f"energy {fmt(e)}")


def cmd_perimeter(r: Runner):
    from .surface import broken_bond_counts, discrete_perimeter

    E = r.void_set()
    model = r.neighbor_model(E.domain.d)
    counts = broken_bond_counts(E, model)
    total = discrete_perimeter(E, model)
    rows = [dict(xi=" ".join(str(v) for v in xi), coeff=c, broken_bonds=int(n))
            for xi, c, n in zip(model.vectors, model.coeffs, counts)]
    r.emit_csv("perimeter.csv", ["xi", "coeff", "broken_bonds"], rows, [f"F_per = {fmt(total)}"])
    r.result(f"F_per {fmt(total)}")


def cmd_curvature(r: Runner):
    from .curvature import CurvatureModel, curvature_energy, nonflat_count

    E = r.void_set()
    eps = E.domain.epsilon
    n = r.args.eta or r.cfg.integer("curvature", "eta")
    if n is None:
        raise ConfigError("curvature needs --eta (or [curvature] eta)")
    r.cfg.override("curvature", "eta", r.args.eta, "--eta")
    r.cfg.override("curvature", "gamma", r.args.gamma, "--gamma")
    r.cfg.override("curvature", "q", r.args.q, "--q")
    model = CurvatureModel(r.cfg.number("curvature", "gamma"), n * eps, r.cfg.number("curvature", "q"))
    count = nonflat_count(E, model)
    F = curvature_energy(model, E)
    row = dict(eps=eps, eta=model.eta, gamma=model.gamma, q=model.q, nonflat_sites=count, F_curv=F)
    r.emit_csv("curvature.csv", list(row), [row])
    r.result(f"F_curv {fmt(F)} nonflat {count}")


def _block_rows(E: VoidSet, n):
    from .curvature import block_index, cubic_field, detect_laminate, locally_flat_field, make_frame

    dom = E.domain
    fr = make_frame(E, n + 4)
    lf = locally_flat_field(fr, n)
    cu = cubic_field(fr, n, n)
    olo, ohi = dom.omega_index_box
    blo, bhi = block_index(olo, n), block_index(ohi - 1, n)
    eps = dom.epsilon
    for b in itertools.product(*[range(int(a), int(c) + 1) for a, c in zip(blo, bhi)]):
        centre = np.asarray(b) * n
        loc = tuple(int(v) for v in centre - fr.lo)
        inside = all(0 <= v < s for v, s in zip(loc, lf.shape))
        lam = detect_laminate(E, (eps * centre - 0.75 * n * eps, eps * centre + 0.75 * n * eps))
        row = {f"b{k}": int(v) for k, v in enumerate(b)}
        row.update(locally_flat=bool(inside and lf[loc]), cubic=bool(inside and cu[loc]),
                   flat=bool(inside and lf[loc] and cu[loc]), laminate_axis=-1 if lam is None else lam[0])
        yield row


def cmd_flatness(r: Runner):
    E = r.void_set()
    rows = list(_block_rows(E, r.args.eta))
    cols = [f"b{k}" for k in range(E.domain.d)] + ["locally_flat", "cubic", "flat", "laminate_axis"]
    r.emit_csv("flatness.csv", cols, rows)
    nflat = sum(row["flat"] for row in rows)
    r.result(f"blocks {len(rows)} flat {nflat}")


def cmd_replace(r: Runner):
    from .mesoscale import eta_replacement

    E = r.void_set()
    n = r.args.eta
    Eeta = eta_replacement(E, n * E.domain.epsilon)
    r.emit_text("replaced.void", format_void_set(Eeta))
    row = dict(eps=E.domain.epsilon, eta=n * E.domain.epsilon, voids=len(E), replaced=len(Eeta),
               added=len(Eeta) - len(E))
    r.emit_csv("replace.csv", list(row), [row])
    r.result(f"added {row['added']}")


def _raster(sample):
    f = sample.field
    head = [f"dim {f.ndim}", "shape " + " ".join(str(s) for s in f.shape), f"h {fmt(sample.h, 12)}",
            "origin " + " ".join(fmt(v, 12) for v in sample.origin), f"sigma {fmt(sample.sigma)}",
            f"t {fmt(sample.t)}"]
    rows = f.reshape(-1, f.shape[-1]) if f.ndim else f.reshape(1, -1)
    body = [" ".join(f"{v:.9g}" for v in row) for row in rows]
    return "\n".join(head + body) + "\n"


def cmd_smooth(r: Runner):
    from .curvature import block_index
    from .mesoscale import choose_level, eta_replacement, smooth_at_eta_scale

    E = r.void_set()
    n = r.args.eta
    eta = n * E.domain.epsilon
    r.cfg.override("smooth", "sigma", r.args.sigma, "--sigma")
    r.cfg.override("smooth", "t", r.args.t, "--t")
    r.cfg.override("smooth", "grid", r.args.grid, "--grid")
    if r.args.replace:
        E = eta_replacement(E, eta)
    sigma = r.cfg.number("smooth", "sigma")
    grid = r.cfg.integer("smooth", "grid")
    h = None if grid is None else 1.0 / grid
    t = r.cfg.number("smooth", "t")
    if t is None:
        blocks = np.unique(block_index(E.indices, n), axis=0)
        t = choose_level(VoxelSet(1.0, blocks), sigma, h)
    sample = smooth_at_eta_scale(E, eta, sigma, t, h)
    r.emit_text("field.txt", _raster(sample))
    rep = dict(sigma=sigma, t=t, h=sample.h, **sample.report)
    cols = ["sigma", "t", "h", "inclusion", "hausdorff", "bound", "clearance"]
    r.emit_csv("smooth.csv", cols, [rep])
    r.result(f"inclusion {rep['inclusion']} hausdorff {fmt(rep['hausdorff'])} clearance {fmt(rep['clearance'])}")


def cmd_minimize(r: Runner):
    from .elastic import SolverParams, dirichlet_region, minimize_elastic, q_bulk_exact, reference_cell

    E = r.void_set(required=False)
    dom = E.domain if E is not None else r.config_domain()
    F = r.strain(dom.d)
    delta = r.cfg.number("solver", "delta")
    params = SolverParams(tol=r.cfg.number("solver", "tol"), max_iter=r.cfg.integer("solver", "max_iter"),
                          init=r.cfg.get("solver", "init"))
    model = r.cell_model()
    region = dirichlet_region(dom)
    res = minimize_elastic(model, dom, E, lambda x: x @ F.T, delta, params, region=region)
    # energy density per unit volume of the summed cells
    vol = float(np.prod(np.asarray(region[1]) - np.asarray(region[0])))
    half_q = 0.5 * q_bulk_exact(model, 0.5 * (F + F.T) @ reference_cell(dom.d))
    r.emit_text("displacement.txt", format_displacement(res.u, delta))
    row = dict(eps=dom.epsilon, delta=delta, energy=res.energy, initial_energy=res.initial_energy,
               density=res.energy / vol, half_q=half_q, iterations=res.iterations, grad_norm=res.grad_norm,
               converged=res.converged)
    r.emit_csv("minimize.csv", list(row), [row])
    r.result(f"energy {fmt(res.energy)} density {fmt(row['density'])} half_Q {fmt(half_q)}")


def cmd_gamma(r: Runner):
    from .gamma import ExperimentModels, TABLE_COLUMNS, desk_regime, gamma_limsup_experiment, suggest_regime
    from .lattice import voxelize

    path = r.cfg.get("run", "set")
    if path is None:
        raise ConfigError("gamma needs a void-set file (--set or [run] set)")
    d, eps0, idx, _ = read_void_set_raw(path)
    E = voxelize(VoidSet(LatticeDomain.box(eps0, idx.min(axis=0) * eps0 - eps0, idx.max(axis=0) * eps0 + 2 * eps0),
                         idx)) if len(idx) else VoxelSet.empty(eps0, d)
    lo, hi = r.omega(d, "gamma" if r.cfg.get("gamma", "omega_lo") is not None else "domain")
    if len(lo) != d or len(hi) != d:
        raise ValidationError(f"gamma domain has dimension {len(lo)}, the void set has dimension {d}")
    eps = r.cfg.numbers("regime", "eps")
    q = r.cfg.number("regime", "q")
    eta = r.cfg.numbers("regime", "eta")
    if eta is None:
        reg = suggest_regime(eps, q, r.cfg.number("regime", "s"), r.cfg.number("regime", "frac"))
    else:
        reg = desk_regime(eps, eta, q, r.cfg.number("regime", "gamma0"), r.cfg.number("regime", "rate"))
    elastic = parse_bool(r.cfg.get("gamma", "elastic"))
    models = ExperimentModels(r.neighbor_model(d), r.cell_model() if elastic else None,
                              r.strain(d) if elastic else None)
    rows = gamma_limsup_experiment(E, reg, models, (lo, hi))
    for row in rows:
        r.progress(f"eps {fmt(row['eps'])} gap {fmt(row['gap'])} F_curv {fmt(row['F_curv'])}")
    r.emit_csv("gamma.csv", list(TABLE_COLUMNS), rows)
    r.result(f"rows {len(rows)} final gap {fmt(rows[-1]['gap'])}")


def cmd_eam_check(r: Runner):
    from .curvature import CurvatureModel, eam_curvature_energy, eam_lemma_check, eam_phi
    from .sampling import make_rng, random_void_set_2d

    seed = r.seed()
    try:
        W, H = (int(v) for v in r.args.window.lower().split("x"))
    except ValueError:
        raise ValidationError(f"--window must look like 32x32, got {r.args.window!r}") from None
    n = r.args.eta
    rng = make_rng(seed)
    model = CurvatureModel(1.0, float(n), 2.0, "eam2d")
    window = ((0, 0), (W, H))
    ok = 0
    worst = 0.0
    cex = 0
    for _ in range(r.args.trials):
        E = random_void_set_2d(rng, (W, H))
        p = eam_phi(E, window, model)
        c = eam_curvature_energy(E, model, window)
        err = abs(p - c) / max(abs(p), 1e-300)
        worst = max(worst, err)
        ok += err <= 1e-12
        cex += len(eam_lemma_check(E, n, 4))
    text = (f"seed {seed}\nwindow {W}x{H}\neta {n}\n"
            f"identity holds: {ok}/{r.args.trials}\nworst relative error: {worst:.3g}\n"
            f"lemma counterexamples: {cex} over {r.args.trials} sets\n")
    r.emit_text("eam_check.txt", "\n".join(r.cfg.header_lines()) + "\n" + text)
    r.result(f"identity holds: {ok}/{r.args.trials}")
    r.result(f"lemma counterexamples: {cex}")


def cmd_regime(r: Runner):
    from .gamma import MONITORS, suggest_regime

    if r.args.eps:
        r.cfg.override("regime", "eps", r.args.eps, "--eps")
    r.cfg.override("regime", "q", r.args.q, "--q")
    reg = suggest_regime(r.cfg.numbers("regime", "eps"), r.cfg.number("regime", "q"),
                         r.cfg.number("regime", "s"), r.cfg.number("regime", "frac"))
    cols = ["eps", "delta", "eta", "gamma"] + [m for m, _ in MONITORS if m != "eta"]
    r.emit_csv("regime.csv", cols, list(reg.rows()))
    r.result(f"regime ok: {len(reg)} rows")


DISPATCH = {
    "energy": cmd_energy, "perimeter": cmd_perimeter, "curvature": cmd_curvature, "flatness": cmd_flatness,
    "replace": cmd_replace, "smooth": cmd_smooth, "minimize": cmd_minimize, "gamma": cmd_gamma,
    "eam-check": cmd_eam_check, "regime": cmd_regime,
}


def run(args) -> int:
    r = Runner(args)
    DISPATCH[args.command](r)
    return 0
