"""Convergence studies against a fine reference minimizer.

A study compares discrete minimizers on a ladder of uniform meshes with
a P2 reference state on a finer nested mesh.  Coarse states are
prolonged exactly to the reference space, rotated into its phase, and
all norms are integrated there.  The same table carries the errors of
the H^1_kappa best approximation, which is free of pollution.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AlignmentError, GLFemError, InputError, StructuralError
from .fe_space import (
    ComplexField, FESpace, Integrator, build_space, prolongate, prolongation_matrix,
)
from .gl_model import ModelParams, get_problem, initial_guess, INITIAL_GUESSES
from .io import dump_field, load_field
from .mesh import build_uniform, is_refinement_of
from .numerics import smallest_eigenpairs, solve_spd
from .optimizer import HESSIAN_SHIFT, SolverConfig, ncg_minimize

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "kappa", "p", "level", "h", "energy", "energy_err", "l2_err", "h1semi_over_kappa",
    "h1kappa_err", "ba_l2_err", "ba_h1kappa_err", "eoc_energy", "eoc_l2", "eoc_h1kappa",
    "status",
)

NAN = float("nan")


@dataclass
class StudyRecord:
    kappa: float
    p: int
    level: int
    h: float
    energy: float = NAN
    energy_err: float = NAN
    l2_err: float = NAN
    h1semi_over_kappa: float = NAN
    h1kappa_err: float = NAN
    ba_l2_err: float = NAN
    ba_h1kappa_err: float = NAN
    eoc_energy: float = NAN
    eoc_l2: float = NAN
    eoc_h1kappa: float = NAN
    status: str = "ok"
    # not part of the CSV contract
    lambda1: float = field(default=NAN, repr=False)
    iterations: int = field(default=0, repr=False)


@dataclass
class ReferenceSolution:
    state: ComplexField
    energy: float
    kappa: float
    metadata: dict = field(default_factory=dict)

    @property
    def level(self) -> int:
        return self.state.space.mesh.level

    @property
    def space(self) -> FESpace:
        return self.state.space


# ----------------------------------------------------------------------------
# reference solutions
# ----------------------------------------------------------------------------

def _config_hash(mp: ModelParams, cfg: SolverConfig, extra) -> str:
    text = repr((mp.kappa, mp.potential.tag, sorted(asdict(cfg).items()), extra))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _log_digest(history) -> str:
    h = hashlib.sha256()
    for rec in history:
        h.update(np.array([rec.iter, rec.energy, rec.energy_diff, rec.tau]).tobytes())
    return h.hexdigest()[:16]


def random_start(s: FESpace, seed: int, amplitude=0.5) -> ComplexField:
    """Complex Gaussian dof values; a cheap generic start for basin search."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(s.dof_count) + 1j * rng.standard_normal(s.dof_count)
    return ComplexField(s, amplitude * c)


def search_minimizers(s: FESpace, mp: ModelParams, cfg: SolverConfig = None,
                      n_random=8, seed=0):
    """Run the solver from every preset and ``n_random`` random starts.

    Returns the list of ``(label, MinimizerResult)`` pairs, lowest
    verified energy first.  Failed runs are logged and skipped.
    """
    cfg = cfg or SolverConfig()
    starts = [(name, initial_guess(name, s)) for name in INITIAL_GUESSES]
    starts += [(f"random:{seed + k}", random_start(s, seed + k)) for k in range(n_random)]
    found = []
    for label, u0 in starts:
        try:
            res = ncg_minimize(s, mp, cfg, u0=u0)
        except GLFemError as exc:
            log.warning("start %s failed: %s", label, exc)
            continue
        log.info("start %s: E=%.10f status=%s", label, res.energy, res.status)
        found.append((label, res))
    ranked = sorted(found, key=lambda lr: (lr[1].status != "minimizer", lr[1].energy))
    return ranked


def default_search_level(kappa: float) -> int:
    return max(2, int(math.ceil(math.log2(2.0 * kappa) - 1e-12)))


def compute_reference(mp: ModelParams, ref_level: int, cfg: SolverConfig = None,
                      search_level: Optional[int] = None, n_random=8, seed=0,
                      degree=2) -> ReferenceSolution:
    """Lowest-energy verified P2 minimizer found on ``ref_level``.

    The basin search runs on the coarser ``search_level`` from all
    presets plus ``n_random`` seeded random starts; the best verified
    minimizer is then carried up the nested hierarchy, re-converging on
    every level.  The default search level is the first one with
    ``h <= 1 / (2 kappa)``: fine enough to resolve the vortex cores, cheap
    enough for many starts, and coarse meshes reach the low-energy basins
    from random data more often than fine ones.
    """
    cfg = cfg or SolverConfig()
    if search_level is None:
        search_level = default_search_level(mp.kappa)
    search_level = max(0, min(search_level, ref_level))
    s = build_space(build_uniform(search_level), degree)
    ranked = search_minimizers(s, mp, cfg, n_random=n_random, seed=seed)
    if not ranked or ranked[0][1].status != "minimizer":
        raise GLFemError("basin search found no verified minimizer")
    label, res = ranked[0]
    candidates = sorted({round(r.energy, 9) for _, r in ranked if r.status == "minimizer"})
    history = list(res.history)
    for level in range(search_level + 1, ref_level + 1):
        sf = build_space(build_uniform(level), degree)
        res = ncg_minimize(sf, mp, cfg, u0=prolongate(res.state, sf))
        history += res.history
        log.info("continuation level %d: E=%.12f status=%s", level, res.energy, res.status)
    if res.status != "minimizer":
        raise GLFemError(f"reference state on level {ref_level} is a {res.status}")
    meta = {
        "kind": "reference",
        "kappa": repr(mp.kappa),
        "potential": mp.potential.tag,
        "degree": degree,
        "level": ref_level,
        "energy": f"{res.energy:.17g}",
        "lambda1": f"{res.lambda1:.6e}",
        "lambda2": f"{res.lambda2:.6e}",
        "search_level": search_level,
        "search_start": label,
        "search_energies": " ".join(f"{e:.9f}" for e in candidates),
        "config_hash": _config_hash(mp, cfg, (ref_level, search_level, n_random, seed)),
        "log_digest": _log_digest(history),
    }
    return ReferenceSolution(res.state, res.energy, mp.kappa, meta)


def save_reference(ref: ReferenceSolution, path) -> None:
    dump_field(ref.state, path, ref.metadata)


def load_reference(path, space: FESpace = None) -> ReferenceSolution:
    u, meta = load_field(path, space)
    if "kappa" not in meta:
        raise StructuralError(f"{path}: field dump carries no kappa metadata")
    energy = float(meta["energy"]) if "energy" in meta else NAN
    return ReferenceSolution(u, energy, float(meta["kappa"]), meta)


# ----------------------------------------------------------------------------
# comparison tools
# ----------------------------------------------------------------------------

def _as_fine(u_h: ComplexField, s_ref: FESpace) -> ComplexField:
    if u_h.space is s_ref:
        return u_h
    return prolongate(u_h, s_ref)


def _mass(s: FESpace):
    return Integrator(s, 2 * s.degree).weighted_mass()


def _stiffness(s: FESpace):
    return Integrator(s, 2 * s.degree).stiffness()


class _Metric:
    """Mass and stiffness of one space, assembled once."""

    _cache = {}

    def __init__(self, s: FESpace):
        self.M = _mass(s)
        self.S = _stiffness(s)

    @classmethod
    def of(cls, s: FESpace):
        key = id(s)
        hit = cls._cache.get(key)
        if hit is None or hit[0] is not s:
            if len(cls._cache) >= 4:
                cls._cache.clear()
            hit = (s, cls(s))
            cls._cache[key] = hit
        return hit[1]


def phase_align(u_ref: ComplexField, u_h: ComplexField):
    """Rotate ``u_h`` into the phase of ``u_ref``.

    ``u_h`` may live on any coarser nested space; it is prolonged first.

    Returns
    -------
    alpha : complex
        ``int u_ref conj(u_h) / |int u_ref conj(u_h)|``.
    aligned : ComplexField
        ``alpha * u_h`` on the reference space.
    """
    s = u_ref.space
    v = _as_fine(u_h, s)
    M = _Metric.of(s).M
    overlap = np.vdot(v.coefficients, M @ u_ref.coefficients)
    scale = np.sqrt(abs(np.vdot(u_ref.coefficients, M @ u_ref.coefficients))
                    * abs(np.vdot(v.coefficients, M @ v.coefficients)))
    if not abs(overlap) > 1e-14 * max(scale, 1e-300):
        raise AlignmentError("states are L2-orthogonal; the phase factor is undefined")
    alpha = overlap / abs(overlap)
    return complex(alpha), ComplexField(s, alpha * v.coefficients)


def error_norms(u_ref: ComplexField, u_h: ComplexField, kappa: float):
    """``(L2, kappa^{-1} H1-seminorm, their sum)`` of ``u_ref - u_h``.

    No alignment is performed here; ``u_h`` is prolonged if needed.
    """
    s = u_ref.space
    if not (u_h.space is s or is_refinement_of(s.mesh, u_h.space.mesh)):
        raise StructuralError("error_norms needs u_h on a space nested in the reference space")
    v = _as_fine(u_h, s)
    e = u_ref.coefficients - v.coefficients
    met = _Metric.of(s)
    l2 = math.sqrt(max(np.vdot(e, met.M @ e).real, 0.0))
    semi = math.sqrt(max(np.vdot(e, met.S @ e).real, 0.0)) / kappa
    return l2, semi, l2 + semi


def best_approximation(u_ref: ComplexField, s: FESpace, kappa: float,
                       rel_tol=1e-12) -> ComplexField:
    """H^1_kappa-orthogonal projection of ``u_ref`` onto the nested space ``s``."""
    P = prolongation_matrix(s, u_ref.space)
    fine = _Metric.of(u_ref.space)
    coarse = _Metric.of(s)
    G_f = fine.S / kappa**2 + fine.M
    G_c = (coarse.S / kappa**2 + coarse.M).tocsr()
    rhs = P.T @ (G_f @ u_ref.coefficients)
    c = solve_spd(G_c, rhs, rel_tol=rel_tol, max_iter=max(5000, 4 * s.dof_count))
    return ComplexField(s, c)


def estimate_rho(u: ComplexField, mp: ModelParams, tol=1e-8) -> float:
    """``1 / lambda_min`` of ``E''(u)`` in the H^1_kappa metric on ``(iu)^perp``.

    The constraint is M-orthogonality to ``vec(i u)`` in the real layout.
    """
    prob = get_problem(u.space, mp)
    H = prob.hessian(u.coefficients)
    G = prob.h1kappa_gram()
    t = np.concatenate([-u.coefficients.imag, u.coefficients.real])  # vec(i u)
    # H >= -M >= -G, so the mass-based shift also lies below this spectrum
    rep = smallest_eigenpairs(H, G, k=1, tol=tol, shift=HESSIAN_SHIFT,
                              deflate=_deflation(prob, t, G))
    lam = float(rep.eigenvalues[0])
    if lam <= 0:
        raise InputError(f"E'' is not coercive on (iu)^perp (lambda_min={lam:.3e})")
    return 1.0 / lam


def _deflation(prob, t, G):
    # the constraint is M-orthogonality; smallest_eigenpairs deflates in the
    # metric of its second argument, so pass G^{-1} M t
    Mt = prob.real_mass() @ t
    lu = spla.splu(sp.csc_matrix(G))
    return lu.solve(Mt)


# ----------------------------------------------------------------------------
# EOC and studies
# ----------------------------------------------------------------------------

def eoc(errors) -> np.ndarray:
    """``log2(e[j-1] / e[j])``; the first entry is NaN."""
    e = np.asarray(errors, dtype=float)
    out = np.full(e.shape, NAN)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log2(e[:-1] / e[1:])
    return out


def study_row(ref: ReferenceSolution, mp: ModelParams, s: FESpace, cfg: SolverConfig,
              u0: ComplexField = None):
    """Solve on ``s`` and measure it against ``ref``; returns ``(record, result)``."""
    kappa = mp.kappa
    rec = StudyRecord(kappa, s.degree, s.mesh.level, s.mesh.cell_size)
    ba = best_approximation(ref.state, s, kappa)
    ba_l2, _, ba_h1k = error_norms(ref.state, ba, kappa)
    rec.ba_l2_err, rec.ba_h1kappa_err = ba_l2, ba_h1k
    res = ncg_minimize(s, mp, cfg, u0=ba if u0 is None else u0)
    rec.energy = res.energy
    rec.energy_err = abs(res.energy - ref.energy)
    rec.lambda1 = NAN if res.lambda1 is None else res.lambda1
    rec.iterations = res.iterations
    _, aligned = phase_align(ref.state, res.state)
    rec.l2_err, rec.h1semi_over_kappa, rec.h1kappa_err = error_norms(ref.state, aligned, kappa)
    if res.status != "minimizer" and cfg.verify:
        rec.status = res.status
    return rec, res


def _fill_eoc(rows):
    ok = [r.status == "ok" for r in rows]
    for name, col in (("eoc_energy", "energy_err"), ("eoc_l2", "l2_err"),
                      ("eoc_h1kappa", "h1kappa_err")):
        vals = eoc([getattr(r, col) for r in rows])
        for j, r in enumerate(rows):
            good = j > 0 and ok[j] and ok[j - 1] and rows[j - 1].level == r.level - 1
            setattr(r, name, vals[j] if good else NAN)


def run_study(kappas, degrees, levels, ref_level, cfg: SolverConfig = None,
              references=None, potential=None, seeding="reference", reference_kw=None,
              on_row=None):
    """Full (kappa, p, level) sweep.

    Parameters
    ----------
    references : dict kappa -> ReferenceSolution, optional
        Missing entries are computed with :func:`compute_reference`.
    seeding : {"reference", "homotopy"}
        ``"reference"`` starts every level from the best approximation of
        the reference state; ``"homotopy"`` starts the coarsest level there
        and every further level from the prolonged previous minimizer.
    on_row : callable, optional
        Called with each finished record.

    Returns
    -------
    list of StudyRecord
        Failures are recorded in the ``status`` column; the sweep continues.
    """
    from .gl_model import potential as make_potential

    if seeding not in ("reference", "homotopy"):
        raise InputError(f"unknown seeding {seeding!r}")
    cfg = cfg or SolverConfig()
    pot = potential or make_potential("paper_trig")
    references = dict(references or {})
    levels = sorted(levels)
    if levels and max(levels) >= ref_level:
        raise InputError("reference level must exceed every study level")
    records = []
    for kappa in kappas:
        mp = ModelParams(kappa, pot)
        ref = references.get(kappa)
        if ref is None:
            ref = compute_reference(mp, ref_level, cfg, **(reference_kw or {}))
            references[kappa] = ref
        if ref.level != ref_level:
            raise StructuralError(f"reference for kappa={kappa} is on level {ref.level}, not {ref_level}")
        for p in degrees:
            rows = []
            prev = None
            for level in levels:
                s = build_space(build_uniform(level), p)
                u0 = None
                if seeding == "homotopy" and prev is not None:
                    u0 = prolongate(prev, s)
                try:
                    rec, res = study_row(ref, mp, s, cfg, u0=u0)
                    prev = res.state
                except GLFemError as exc:
                    rec = StudyRecord(kappa, p, level, s.mesh.cell_size,
                                      status=f"error:{type(exc).__name__}")
                    log.warning("row kappa=%g p=%d level=%d failed: %s", kappa, p, level, exc)
                    prev = None
                rows.append(rec)
                if on_row is not None:
                    on_row(rec)
            _fill_eoc(rows)
            records += rows
    return records


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or not np.isfinite(v):
        return ""
    return f"{v:.9g}"


def write_csv(records, path, metadata=None) -> None:
    """Study table with the fixed column set; missing values are empty.

    ``metadata`` lines are written first as ``# key=value`` comments.
    """
    with open(path, "w", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = []
            for name in CSV_COLUMNS:
                v = getattr(r, name)
                row.append(_fmt(v if name not in ("p", "level") else int(v)))
            w.writerow(row)


def read_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    out = []
    for r in rows:
        rec = {}
        for k in CSV_COLUMNS:
            v = r[k]
            if k == "status":
                rec[k] = v
            elif k in ("p", "level"):
                rec[k] = int(v)
            else:
                rec[k] = float(v) if v != "" else NAN
        out.append(rec)
    return out
