"""Experiment runners: one function per experiment kind plus the shared grid driver.

Each grid point (excluding an optional inner axis that one task sweeps in a
single pass) becomes one task.  Tasks are dispatched to a process pool of
``spec.threads`` workers, their results are merged back in grid order and
every finished task is appended to a progress log so a killed run can resume.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..amplifier import closed_form_moments, spectra
from ..delay import DelayTomography, entanglement_time
from ..entanglement import EntanglementReport, analytic_fidelity_estimates, eof_from_concurrence
from ..network import TruncationConfig, network_steady_state
from ..quantum_core import SolverError
from ..reservoir import (
    effective_squeezing,
    effective_steady_state,
    filtered_moments,
    fma_symmetric_closed_form,
    moments_from,
)
from .backends import ResourceGuardError, evaluate, guard_size, reservoir_moments, route_backend
from .io import Dataset, ProgressLog, now, write_manifest
from .optimize import maximize
from .pulsed import PulsedRun
from .spec import ExperimentSpec, make_params

log = logging.getLogger(__name__)

PARAM_COLUMNS = ["epsilon", "beta", "eta", "Gamma_phi", "delta1", "delta2", "tau"]
INNER_AXIS = {"delay_study": "tau", "pulsed_rate": "T", "truncation_study": "n_trunc",
              "spectra_dump": "omega"}
INNER_DEFAULTS = {
    "tau": list(np.linspace(0.0, 4.0, 9)),
    "T": list(np.linspace(0.5, 15.0, 30)),
    "n_trunc": [4, 6, 8, 10, 12],
    "omega": list(np.linspace(-50.0, 50.0, 201)),
}
# rate optima sit at gamma T ~ 1 and move to shorter pulses at strong driving
RATE_T_GRID = list(np.geomspace(0.05, 15.0, 30))

COLUMNS = {
    "fidelity_sweep": PARAM_COLUMNS + ["n_trunc", "backend", "backend_used", "F", "C", "E_F",
                                       "N", "M_abs", "top_population", "residual", "status"],
    "contour": ["row_type", "r_eff", "mu_eff", "beta", "epsilon", "Gamma_phi", "N", "M_abs",
                "F", "C", "E_F", "status"],
    "delay_study": PARAM_COLUMNS + ["n_trunc", "backend", "backend_used", "F", "C", "E_F",
                                    "M_abs", "M_ratio", "hermiticity_defect", "status"],
    "pulsed_rate": PARAM_COLUMNS + ["n_trunc", "T", "F", "C", "E_F", "R", "status"],
    "truncation_study": PARAM_COLUMNS + ["n_trunc", "F", "C", "top_population", "n_photon",
                                         "n_photon_closed", "dF_cauchy", "status"],
    "optimize_fidelity": PARAM_COLUMNS + ["n_trunc", "backend", "eps_op", "F_op", "F_app",
                                          "bracket_lo", "bracket_hi", "tol", "multimodal",
                                          "at_boundary", "n_evals", "status"],
    "optimize_rate": PARAM_COLUMNS + ["n_trunc", "backend", "eps_op", "T_op", "R_max",
                                      "bracket_lo", "bracket_hi", "tol", "multimodal",
                                      "at_boundary", "n_evals", "status"],
    "spectra_dump": PARAM_COLUMNS + ["omega", "I_a1dag_a1_re", "I_a1dag_a1_im", "I_a2dag_a2_re",
                                     "I_a2dag_a2_im", "I_a1a2_re", "I_a1a2_im", "I_a2a1_re",
                                     "I_a2a1_im", "S_occupation", "S_correlation_re",
                                     "S_correlation_im", "status"],
}


class PointFailure(Exception):
    pass


def _param_cells(values: dict) -> dict:
    return {k: float(values[k]) for k in PARAM_COLUMNS}


def _status(exc: Exception) -> str:
    return f"solver_error: {type(exc).__name__}: {exc}".replace("\n", " ")


# -- per-kind tasks ------------------------------------------------------------
#
# A task takes (spec dict, outer point, inner values) and returns (rows, diag).
# Solver failures are caught per row so the run continues; the resource guard
# is not caught because it applies to the whole run.


def _task_sweep(spec, values, inner):
    p = make_params(values)
    trunc, cfg = spec.trunc_config(), spec.solver_config()
    rows, diag = [], []
    for backend in spec.backends:
        base = {**_param_cells(values), "n_trunc": trunc.n_trunc, "backend": backend}
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                out = evaluate(backend, p, trunc, cfg, spec.max_sector_rows)
            row = {**base, "backend_used": out["backend"], "F": out["F"], "C": out["C"],
                   "E_F": out["E_F"], "N": out.get("N", math.nan), "M_abs": out.get("M_abs", math.nan),
                   "top_population": out.get("top_population", math.nan),
                   "residual": out.get("residual", math.nan), "status": "ok"}
            diag.append({"backend": backend, **out, "warnings": [str(w.message) for w in caught]})
        except ResourceGuardError:
            raise
        except (SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
            row = {**base, "backend_used": backend, "F": math.nan, "C": math.nan, "E_F": math.nan,
                   "N": math.nan, "M_abs": math.nan, "top_population": math.nan,
                   "residual": math.nan, "status": _status(exc)}
            diag.append({"backend": backend, "error": str(exc)})
        rows.append(row)
    return rows, {"values": values, "backends": diag}


def _task_contour_grid(spec, values, inner):
    gphi = float(values.get("Gamma_phi", 0.0))
    row = {"row_type": "grid", "r_eff": values["r_eff"], "mu_eff": values["mu_eff"],
           "beta": math.nan, "epsilon": math.nan, "Gamma_phi": gphi}
    m = moments_from(values["r_eff"], values["mu_eff"])
    rep = EntanglementReport.from_state(effective_steady_state(m, gphi))
    row.update(N=m.N, M_abs=abs(m.M), F=rep.fidelity, C=rep.concurrence, E_F=rep.eof, status="ok")
    return [row], {"values": values}


def _task_contour_path(spec, values, inner):
    """One bandwidth-ratio path through the (r_eff, mu_eff) plane, parametrized by epsilon."""
    beta = values["beta"]
    gphi = float(values.get("Gamma_phi", 0.0))
    rows = []
    for eps in inner:
        m = fma_symmetric_closed_form(eps, beta, float(values.get("eta", 1.0)))
        sq = effective_squeezing(m)
        rep = EntanglementReport.from_state(effective_steady_state(m, gphi))
        rows.append({"row_type": "path", "r_eff": sq.r_eff, "mu_eff": sq.mu_eff, "beta": beta,
                     "epsilon": eps, "Gamma_phi": gphi, "N": m.N, "M_abs": abs(m.M),
                     "F": rep.fidelity, "C": rep.concurrence, "E_F": rep.eof, "status": "ok"})
    return rows, {"values": values, "path": True}


def _task_delay(spec, values, taus):
    trunc, cfg = spec.trunc_config(), spec.solver_config()
    p0 = make_params({**values, "tau": 0.0})
    rows, diag = [], {"values": values}
    taus = sorted(float(t) for t in taus)
    for backend in spec.backends:
        used = route_backend(backend, p0)
        base = {"n_trunc": trunc.n_trunc, "backend": backend, "backend_used": used}
        try:
            if used == "exact":
                guard_size(trunc.n_trunc, spec.max_sector_rows)
                tomo = DelayTomography(p0, trunc, cfg)
                results = tomo.states(np.array(taus) / p0.gamma)
                for t, res in zip(taus, results):
                    rep = EntanglementReport.from_state(res.rho)
                    rows.append({**_param_cells({**values, "tau": t}), **base, "F": rep.fidelity,
                                 "C": rep.concurrence, "E_F": rep.eof, "M_abs": abs(res.rho.data[3, 0]),
                                 "M_ratio": math.nan, "hermiticity_defect": res.hermiticity_defect,
                                 "status": "ok"})
                m0 = abs(results[0].rho.data[3, 0]) if taus and taus[0] == 0 else math.nan
                for r in rows[-len(taus):]:
                    r["M_ratio"] = r["M_abs"] / m0 if m0 else math.nan
                if spec.options.get("entanglement_time"):
                    et = entanglement_time(p0, trunc, cfg, tomography=tomo)
                    diag["gamma_tau_ent"] = et.gamma_tau
                    diag["beyond_range"] = et.beyond_range
            else:
                m0 = None
                for t in taus:
                    p = make_params({**values, "tau": t})
                    m = filtered_moments(p) if used == "fma" else reservoir_moments(used, p)
                    m0 = abs(m.M) if m0 is None else m0
                    rep = EntanglementReport.from_state(
                        effective_steady_state(m, p.Gamma_phi, p.gamma1, p.gamma2))
                    rows.append({**_param_cells({**values, "tau": t}), **base, "F": rep.fidelity,
                                 "C": rep.concurrence, "E_F": rep.eof, "M_abs": abs(m.M),
                                 "M_ratio": abs(m.M) / m0 if m0 else math.nan,
                                 "hermiticity_defect": math.nan, "status": "ok"})
        except ResourceGuardError:
            raise
        except (SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
            for t in taus:
                rows.append({**_param_cells({**values, "tau": t}), **base, "F": math.nan,
                             "C": math.nan, "E_F": math.nan, "M_abs": math.nan, "M_ratio": math.nan,
                             "hermiticity_defect": math.nan, "status": _status(exc)})
    return rows, diag


def _task_pulsed(spec, values, Ts):
    trunc, cfg = spec.trunc_config(), spec.solver_config()
    p = make_params(values)
    guard_size(trunc.n_trunc, spec.max_sector_rows)
    Ts = sorted(float(t) for t in Ts)
    base = {**_param_cells(values), "n_trunc": trunc.n_trunc}
    try:
        reps, _ = PulsedRun(p, trunc, cfg).reports(Ts)
    except (SolverError, ArithmeticError) as exc:
        return [{**base, "T": t, "F": math.nan, "C": math.nan, "E_F": math.nan, "R": math.nan,
                 "status": _status(exc)} for t in Ts], {"values": values, "error": str(exc)}
    rows = [{**base, "T": t, "F": r.fidelity, "C": r.concurrence, "E_F": r.eof,
             "R": r.rate if r.rate is not None else 0.0, "status": "ok"} for t, r in zip(Ts, reps)]
    return rows, {"values": values}


def _task_truncation(spec, values, ns):
    cfg = spec.solver_config()
    p = make_params(values)
    ns = sorted(int(n) for n in ns)
    closed = closed_form_moments(p)[0]
    rows, prev = [], None
    for n in ns:
        guard_size(n, spec.max_sector_rows)
        base = {**_param_cells(values), "n_trunc": n, "n_photon_closed": closed}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # leakage is what this study measures
                st = network_steady_state(p, TruncationConfig(n), cfg)
            rep = EntanglementReport.from_state(st.rho_q)
            d = abs(rep.fidelity - prev) if prev is not None else math.nan
            prev = rep.fidelity
            rows.append({**base, "F": rep.fidelity, "C": rep.concurrence,
                         "top_population": st.top_population, "n_photon": st.n1,
                         "dF_cauchy": d, "status": "ok"})
        except (SolverError, ArithmeticError) as exc:
            prev = None
            rows.append({**base, "F": math.nan, "C": math.nan, "top_population": math.nan,
                         "n_photon": math.nan, "dF_cauchy": math.nan, "status": _status(exc)})
    return rows, {"values": values}


def _eps_grid(spec, backend):
    opt = spec.options
    hi_default = 0.8 if backend == "exact" else 0.98
    lo = float(opt.get("eps_min", 0.02))
    hi = float(opt.get("eps_max", hi_default))
    num = int(opt.get("eps_points", 9))
    return np.linspace(lo, hi, num)


def _optimize_backend(spec, values):
    b = spec.backends[0]
    return route_backend(b, make_params({**values, "epsilon": 0.0}))


def _task_opt_fidelity(spec, values, inner):
    trunc, cfg = spec.trunc_config(), spec.solver_config()
    tol = float(spec.options.get("tol", 1e-3))
    backend = _optimize_backend(spec, values)
    if backend == "exact":
        guard_size(trunc.n_trunc, spec.max_sector_rows)

    def objective(eps):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return evaluate(backend, make_params({**values, "epsilon": eps}), trunc, cfg,
                            spec.max_sector_rows)["F"]

    base = {**_param_cells(values), "n_trunc": trunc.n_trunc, "backend": backend}
    app = analytic_fidelity_estimates(0.5, values["beta"], values.get("eta", 1.0),
                                      values.get("Gamma_phi", 0.0))["optimal"]
    try:
        res = maximize(objective, _eps_grid(spec, backend), tol)
    except (SolverError, ArithmeticError) as exc:
        return [{**base, "eps_op": math.nan, "F_op": math.nan, "F_app": app,
                 "bracket_lo": math.nan, "bracket_hi": math.nan, "tol": math.nan,
                 "multimodal": False, "at_boundary": False, "n_evals": 0,
                 "status": _status(exc)}], {"values": values, "error": str(exc)}
    row = {**base, "eps_op": res.x, "F_op": res.value, "F_app": app, "bracket_lo": res.bracket[0],
           "bracket_hi": res.bracket[1], "tol": res.tol, "multimodal": res.multimodal,
           "at_boundary": res.at_boundary, "n_evals": res.n_evals, "status": "ok"}
    return [row], {"values": values}


def rate_profile(p, trunc, cfg, T_grid, tol=1e-3):
    """``(R_max, T_op)`` over pulse lengths: grid scan then golden refinement in ``gamma T``."""
    run = PulsedRun(p, trunc, cfg)
    T_grid = np.asarray(T_grid, dtype=float)
    reps, vecs = run.reports(T_grid)
    rates = np.array([r.rate if r.rate is not None else 0.0 for r in reps])

    def R(T):
        i = int(np.searchsorted(T_grid, T, side="right") - 1)
        i = min(max(i, 0), T_grid.size - 1)
        v = run.step(vecs[i], T - T_grid[i])
        c = EntanglementReport.from_state(run.qubit_state(v))
        return eof_from_concurrence(c.concurrence) / T

    best = int(np.argmax(rates))
    if 0 < best < T_grid.size - 1 and rates[best] > 0:
        from scipy.optimize import minimize_scalar

        a, b, c = T_grid[best - 1], T_grid[best], T_grid[best + 1]
        res = minimize_scalar(lambda t: -R(t), bracket=(a, b, c), method="golden",
                              options={"xtol": tol / (2 * b)})
        if -res.fun >= rates[best]:
            return float(-res.fun), float(res.x)
    return float(rates[best]), float(T_grid[best])


def _task_opt_rate(spec, values, inner):
    trunc, cfg = spec.trunc_config(), spec.solver_config()
    tol = float(spec.options.get("tol", 1e-3))
    guard_size(trunc.n_trunc, spec.max_sector_rows)
    T_grid = [float(t) for t in spec.options.get("T_grid", RATE_T_GRID)]
    cache = {}

    def objective(eps):
        r, t = rate_profile(make_params({**values, "epsilon": eps}), trunc, cfg, T_grid, tol)
        cache[eps] = t
        return r

    base = {**_param_cells(values), "n_trunc": trunc.n_trunc, "backend": "exact"}
    try:
        res = maximize(objective, _eps_grid(spec, "exact"), tol)
    except (SolverError, ArithmeticError) as exc:
        return [{**base, "eps_op": math.nan, "T_op": math.nan, "R_max": math.nan,
                 "bracket_lo": math.nan, "bracket_hi": math.nan, "tol": math.nan,
                 "multimodal": False, "at_boundary": False, "n_evals": 0,
                 "status": _status(exc)}], {"values": values, "error": str(exc)}
    t_op = cache.get(res.x, math.nan)
    row = {**base, "eps_op": res.x, "T_op": t_op, "R_max": res.value, "bracket_lo": res.bracket[0],
           "bracket_hi": res.bracket[1], "tol": res.tol, "multimodal": res.multimodal,
           "at_boundary": res.at_boundary, "n_evals": res.n_evals, "status": "ok"}
    return [row], {"values": values, "profile": {str(k): v for k, v in sorted(cache.items())}}


def _task_spectra(spec, values, omegas):
    p = make_params(values)
    w = np.array(sorted(float(o) for o in omegas))
    s = spectra(p, w)
    sm = spectra(p, -w)
    rows = []
    for i, om in enumerate(w):
        corr = s.a1a2[i] + sm.a2a1[i]
        rows.append({**_param_cells(values), "omega": om,
                     "I_a1dag_a1_re": s.a1dag_a1[i].real, "I_a1dag_a1_im": s.a1dag_a1[i].imag,
                     "I_a2dag_a2_re": s.a2dag_a2[i].real, "I_a2dag_a2_im": s.a2dag_a2[i].imag,
                     "I_a1a2_re": s.a1a2[i].real, "I_a1a2_im": s.a1a2[i].imag,
                     "I_a2a1_re": s.a2a1[i].real, "I_a2a1_im": s.a2a1[i].imag,
                     "S_occupation": 2 * s.a1dag_a1[i].real,
                     "S_correlation_re": corr.real, "S_correlation_im": corr.imag, "status": "ok"})
    return rows, {"values": values}


TASKS = {
    "fidelity_sweep": _task_sweep,
    "contour": _task_contour_grid,
    "delay_study": _task_delay,
    "pulsed_rate": _task_pulsed,
    "truncation_study": _task_truncation,
    "optimize_fidelity": _task_opt_fidelity,
    "optimize_rate": _task_opt_rate,
    "spectra_dump": _task_spectra,
}


# -- driver ----------------------------------------------------------------------


def _plan(spec: ExperimentSpec):
    """List of ``(task_name, outer values, inner values)`` in deterministic order."""
    template = spec.template()
    inner_name = INNER_AXIS.get(spec.kind)
    axes = spec.axes()
    inner = axes.pop(inner_name, None) if inner_name else None
    if inner_name and inner is None:
        inner = INNER_DEFAULTS[inner_name]
        if inner_name == "omega":
            inner = [x * template["beta"] / 10.0 for x in inner]
    outer = ExperimentSpec(kind=spec.kind, grid={k: {"values": v} for k, v in axes.items()})
    tasks = [(spec.kind, {**template, **pt}, inner) for pt in outer.points()]
    if spec.kind == "contour":
        if "r_eff" not in axes or "mu_eff" not in axes:
            raise ValueError("contour needs grid axes r_eff and mu_eff")
        betas = spec.options.get("beta_paths", [1.0, 10.0, 100.0, 1000.0])
        eps = spec.options.get("path_epsilon", list(np.linspace(0.02, 0.9, 23)))
        tasks += [("contour_path", {**template, "beta": float(b)}, [float(e) for e in eps])
                  for b in betas]
    return tasks


def _run_task(args):
    spec_dict, name, values, inner = args
    spec = ExperimentSpec.from_dict(spec_dict)
    fn = _task_contour_path if name == "contour_path" else TASKS[name]
    return fn(spec, values, inner)


def run(spec: ExperimentSpec, out: Path | None = None, resume: bool = True,
        progress=None) -> Dataset:
    """Execute ``spec`` and return the merged dataset.

    With ``out`` the dataset and a manifest are written next to each other
    and finished tasks are logged to ``<out>.partial.jsonl`` until the run
    completes.
    """
    started = now()
    tasks = _plan(spec)
    spec_dict = spec.to_dict()
    logbook = ProgressLog(out, spec.digest()) if out is not None and resume else None
    results: dict = {}
    if logbook is not None:
        for i, rec in logbook.done.items():
            if i < len(tasks):
                results[i] = (rec["rows"], rec["diag"])
    resumed = len(results)
    todo = [i for i in range(len(tasks)) if i not in results]
    args = [(spec_dict, *tasks[i]) for i in todo]
    try:
        if spec.threads > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=spec.threads) as pool:
                for i, res in zip(todo, pool.map(_run_task, args)):
                    results[i] = res
                    if logbook is not None:
                        logbook.record(i, *res)
                    if progress:
                        progress(len(results), len(tasks))
        else:
            for i, a in zip(todo, args):
                results[i] = _run_task(a)
                if logbook is not None:
                    logbook.record(i, *results[i])
                if progress:
                    progress(len(results), len(tasks))
    finally:
        if logbook is not None:
            logbook.close(remove=False)
    ds = Dataset(["point"] + COLUMNS[spec.kind])
    for i in range(len(tasks)):
        rows, diag = results[i]
        ds.rows.extend({"point": i, **r} for r in rows)
        ds.diagnostics.append({"task": i, **diag})
    ds.summary = summarize(spec, ds)
    if out is not None:
        ds.write(out, spec.output.get("format", "csv"))
        write_manifest(out, spec, ds, started, now(), resumed)
        if logbook is not None:
            logbook.close(remove=True)
    return ds


def summarize(spec: ExperimentSpec, ds: Dataset) -> dict:
    failed = sum(1 for r in ds.rows if str(r.get("status", "ok")) != "ok")
    out = {"rows": len(ds.rows), "failed_rows": failed}
    if spec.kind == "delay_study":
        ets = [d.get("gamma_tau_ent") for d in ds.diagnostics if "gamma_tau_ent" in d]
        if ets:
            out["gamma_tau_ent"] = ets
    return out


# -- named entry points ---------------------------------------------------------


def _with_kind(spec: ExperimentSpec, *kinds):
    if spec.kind not in kinds:
        raise ValueError(f"expected a spec of kind {' or '.join(kinds)}, got {spec.kind}")
    return spec


def run_sweep(spec: ExperimentSpec, out=None) -> Dataset:
    """Fidelity, concurrence and entanglement of formation over a parameter grid."""
    return run(_with_kind(spec, "fidelity_sweep", "contour"), out)


def run_contour(spec: ExperimentSpec, out=None) -> Dataset:
    return run(_with_kind(spec, "contour"), out)


def optimize(spec: ExperimentSpec, out=None) -> Dataset:
    """Optimal driving strength for the fidelity or the distribution rate."""
    return run(_with_kind(spec, "optimize_fidelity", "optimize_rate"), out)


def pulsed_rate_trajectory(spec: ExperimentSpec, out=None) -> Dataset:
    return run(_with_kind(spec, "pulsed_rate"), out)


def truncation_study(spec: ExperimentSpec, out=None) -> Dataset:
    return run(_with_kind(spec, "truncation_study"), out)


def delay_study(spec: ExperimentSpec, out=None) -> Dataset:
    return run(_with_kind(spec, "delay_study"), out)


def spectra_dump(spec: ExperimentSpec, out=None) -> Dataset:
    return run(_with_kind(spec, "spectra_dump"), out)
