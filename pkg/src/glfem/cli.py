"""Command-line interface: ``glfem {solve,verify,study,export-vtk}``.

Exit codes: 0 success, 1 error, 2 the state is a saddle point, 3 a
study finished with failed rows.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

EXIT_OK, EXIT_ERROR, EXIT_SADDLE, EXIT_PARTIAL = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str = "solve"
    kappa: str = "8"
    degree: str = "2"
    level: str = "5"
    ref_level: str = ""
    potential: str = "paper_trig"
    init: str = "const_phase"
    energy_tol: float = 1e-15
    grad_tol: float = 1e-9
    max_iter: int = 20000
    threads: int = 1
    out: str = ""
    compute_reference: bool = False
    reference: str = ""
    seeding: str = "reference"
    n_random: int = 8
    seed: int = 0
    verbosity: str = "warning"

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


CONFIG_KEYS = {f.name: f.type for f in fields(RunConfig)}
CONFIG_KEYS.pop("subcommand")


def _coerce(key, raw):
    default = getattr(RunConfig, key)
    try:
        if isinstance(default, bool):
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise ConfigError(f"{key}={raw!r}: expected a {type(default).__name__}") from None


def read_config_file(path) -> dict:
    """Flat ``key=value`` file; ``#`` starts a comment, unknown keys are errors."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _parse_list(key, text, cast):
    """``"1,2"``, ``"3..6"`` or a mix such as ``"2,4..6"``."""
    items = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                a, b = part.split("..")
                items += list(range(int(a), int(b) + 1))
            else:
                items.append(cast(part))
        except ValueError:
            raise ConfigError(f"{key}={text!r}: cannot parse") from None
    if not items:
        raise ConfigError(f"{key} is empty")
    return items


def _validate(cfg: RunConfig, single: bool):
    kappas = _parse_list("kappa", cfg.kappa, float)
    degrees = _parse_list("degree", cfg.degree, int)
    levels = _parse_list("level", cfg.level, int)
    for k in kappas:
        if not k >= 1:
            raise ConfigError(f"kappa={k:g}: must be >= 1")
    for p in degrees:
        if p not in (1, 2):
            raise ConfigError(f"degree={p}: expected 1 or 2")
    for lv in levels:
        if not 0 <= lv <= 12:
            raise ConfigError(f"level={lv}: must lie in 0..12")
    if single and (len(kappas) > 1 or len(degrees) > 1 or len(levels) > 1):
        raise ConfigError("kappa, degree and level must be single values for this subcommand")
    if cfg.potential not in ("paper_trig", "zero"):
        raise ConfigError(f"potential={cfg.potential}: expected paper_trig or zero")
    from .gl_model import INITIAL_GUESSES

    if cfg.init not in INITIAL_GUESSES:
        raise ConfigError(f"init={cfg.init}: expected one of {', '.join(INITIAL_GUESSES)}")
    for key in ("energy_tol", "grad_tol"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key}={getattr(cfg, key)}: must be positive")
    if cfg.max_iter < 1:
        raise ConfigError(f"max_iter={cfg.max_iter}: must be >= 1")
    if cfg.threads < 1:
        raise ConfigError(f"threads={cfg.threads}: must be >= 1")
    if cfg.seeding not in ("reference", "homotopy"):
        raise ConfigError(f"seeding={cfg.seeding}: expected reference or homotopy")
    ref_level = None
    if cfg.ref_level != "":
        try:
            ref_level = int(cfg.ref_level)
        except ValueError:
            raise ConfigError(f"ref_level={cfg.ref_level!r}: expected an integer") from None
        if not 0 <= ref_level <= 12:
            raise ConfigError(f"ref_level={ref_level}: must lie in 0..12")
    return kappas, degrees, levels, ref_level


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glfem", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p):
        S = argparse.SUPPRESS
        p.add_argument("--config", default=None, help="key=value file; flags override it")
        p.add_argument("--kappa", default=S)
        p.add_argument("--degree", default=S)
        p.add_argument("--level", default=S)
        p.add_argument("--ref-level", dest="ref_level", default=S)
        p.add_argument("--potential", default=S)
        p.add_argument("--init", default=S)
        p.add_argument("--energy-tol", dest="energy_tol", default=S)
        p.add_argument("--grad-tol", dest="grad_tol", default=S)
        p.add_argument("--max-iter", dest="max_iter", default=S)
        p.add_argument("--threads", default=S, help="worker threads (fallback: GLFEM_THREADS)")
        p.add_argument("--out", default=S)
        p.add_argument("--verbosity", default=S)
        return p

    common(sub.add_parser("solve", help="minimise the energy on one mesh"))
    v = common(sub.add_parser("verify", help="spectrum check of a stored state"))
    v.add_argument("field", help="field dump to check")
    st = common(sub.add_parser("study", help="convergence study against a reference"))
    st.add_argument("--compute-reference", dest="compute_reference", action="store_const",
                    const="true", default=argparse.SUPPRESS)
    st.add_argument("--reference", default=argparse.SUPPRESS, help="reference field dump")
    st.add_argument("--seeding", default=argparse.SUPPRESS)
    st.add_argument("--n-random", dest="n_random", default=argparse.SUPPRESS)
    st.add_argument("--seed", default=argparse.SUPPRESS)
    ex = sub.add_parser("export-vtk", help="write a field dump as legacy VTK")
    ex.add_argument("field")
    ex.add_argument("vtk", nargs="?", default=None)
    ex.add_argument("--out", default=None)
    return ap


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then GLFEM_THREADS, then flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    if "threads" not in values and os.environ.get("GLFEM_THREADS"):
        values["threads"] = _coerce("threads", os.environ["GLFEM_THREADS"])
    for key in CONFIG_KEYS:
        if hasattr(args, key):
            values[key] = _coerce(key, getattr(args, key))
    return RunConfig(subcommand=args.subcommand, **values)


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _summary(kappa, p, level, energy, lam1, status):
    return f"kappa={kappa:g} p={p} level={level} energy={energy:.10e} lambda1={lam1:.3e} status={status}"


def _status_code(status):
    return EXIT_SADDLE if status == "saddle" else EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    from .fe_space import build_space
    from .gl_model import ModelParams, potential
    from .io import dump_field, write_iteration_log
    from .mesh import build_uniform
    from .optimizer import SolverConfig, ncg_minimize

    (kappa,), (p,), (level,), _ = _validate(cfg, single=True)
    mp = ModelParams(kappa, potential(cfg.potential))
    s = build_space(build_uniform(level), p)
    scfg = SolverConfig(energy_tol=cfg.energy_tol, grad_tol=cfg.grad_tol,
                        max_iter=cfg.max_iter, init=cfg.init)
    res = ncg_minimize(s, mp, scfg)
    out = Path(cfg.out or f"solution_kappa{kappa:g}_p{p}_l{level}.glfield")
    meta = dict(cfg.echo())
    meta.update(energy=f"{res.energy:.17g}", lambda1=f"{res.lambda1:.6e}",
                lambda2=f"{res.lambda2:.6e}", status=res.status, iterations=res.iterations,
                escapes=res.escapes_used)
    dump_field(res.state, out, meta)
    write_iteration_log(res.history, out.with_suffix(".iterations.csv"), cfg.echo())
    print(_summary(kappa, p, level, res.energy, res.lambda1, res.status))
    return _status_code(res.status)


def cmd_verify(cfg: RunConfig, field_path) -> int:
    from .gl_model import ModelParams, assemble_energy, potential
    from .io import load_field
    from .optimizer import classify, verify_minimizer

    u, meta = load_field(field_path)
    kappa = float(cfg.kappa)
    if not kappa >= 1:
        raise ConfigError(f"kappa={kappa:g}: must be >= 1")
    mp = ModelParams(kappa, potential(cfg.potential))
    rep = verify_minimizer(u, mp)
    status = classify(rep)
    E = assemble_energy(u, mp)
    s = u.space
    print(_summary(kappa, s.degree, s.mesh.level, E, rep.eigenvalues[0], status)
          + f" lambda2={rep.eigenvalues[1]:.3e}")
    return _status_code(status)


def _reference_path(cfg, out, kappa, ref_level):
    if cfg.reference:
        return Path(cfg.reference.format(kappa=f"{kappa:g}"))
    return out.parent / f"reference_kappa{kappa:g}_l{ref_level}.glfield"


def cmd_study(cfg: RunConfig) -> int:
    from .gl_model import ModelParams, potential
    from .optimizer import SolverConfig
    from .study import compute_reference, load_reference, run_study, save_reference, write_csv

    kappas, degrees, levels, ref_level = _validate(cfg, single=False)
    if ref_level is None:
        ref_level = max(levels) + 1
    if ref_level <= max(levels):
        raise ConfigError(f"ref_level={ref_level}: must exceed the finest study level {max(levels)}")
    out = Path(cfg.out or "study.csv")
    scfg = SolverConfig(energy_tol=cfg.energy_tol, grad_tol=cfg.grad_tol,
                        max_iter=cfg.max_iter, init=cfg.init)
    pot = potential(cfg.potential)
    refs = {}
    for kappa in kappas:
        path = _reference_path(cfg, out, kappa, ref_level)
        if path.exists():
            ref = load_reference(path)
            if ref.level != ref_level or ref.state.space.degree != 2:
                raise ConfigError(f"{path}: reference is not P2 on level {ref_level}")
            refs[kappa] = ref
        elif cfg.compute_reference:
            ref = compute_reference(ModelParams(kappa, pot), ref_level, scfg,
                                    n_random=cfg.n_random, seed=cfg.seed)
            ref.metadata.update({f"cfg.{k}": v for k, v in cfg.echo().items()})
            save_reference(ref, path)
            refs[kappa] = ref
        else:
            raise ConfigError(f"reference {path} not found; pass --compute-reference")
    records = run_study(kappas, degrees, levels, ref_level, scfg, references=refs,
                        potential=pot, seeding=cfg.seeding)
    write_csv(records, out, cfg.echo())
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        print(f"row kappa={r.kappa:g} p={r.p} level={r.level}: {r.status}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_export_vtk(field_path, out_path) -> int:
    from .io import export_vtk, load_field

    u, meta = load_field(field_path)
    out = Path(out_path or Path(field_path).with_suffix(".vtk"))
    s = u.space
    export_vtk(u, out, title=f"glfem P{s.degree} level={s.mesh.level} N={s.dof_count}")
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.subcommand == "export-vtk":
            return cmd_export_vtk(args.field, args.vtk or args.out)
        cfg = resolve_config(args)
        _set_threads(cfg.threads)
        logging.basicConfig(level=getattr(logging, cfg.verbosity.upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        if cfg.subcommand == "solve":
            return cmd_solve(cfg)
        if cfg.subcommand == "verify":
            return cmd_verify(cfg, args.field)
        return cmd_study(cfg)
    except ConfigError as exc:
        print(f"glfem: configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 -- every failure maps to exit 1
        print(f"glfem: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
