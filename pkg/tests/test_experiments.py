import json
import math

import numpy as np
import pytest

from tmsnet.experiments import (
    ExperimentSpec,
    ResourceGuardError,
    RoutingWarning,
    SpecError,
    evaluate,
    make_params,
    maximize,
)
from tmsnet.experiments.backends import sector_rows
from tmsnet.experiments.optimize import local_maxima
from tmsnet.experiments.runners import run
from tmsnet.experiments.spec import expand_axis
from tmsnet.network import TruncationConfig
from tmsnet.quantum_core import SolverConfig


def spec(**kw):
    return ExperimentSpec.from_dict(kw)


# -- spec ------------------------------------------------------------------------


@pytest.mark.parametrize("bad", [
    {"kind": "nope"},
    {"kind": "fidelity_sweep", "backends": ["quantum"]},
    {"kind": "fidelity_sweep", "backends": []},
    {"kind": "fidelity_sweep", "grid": {"T": [1, 2]}},
    {"kind": "fidelity_sweep", "grid": {"epsilon": []}},
    {"kind": "fidelity_sweep", "grid": {"epsilon": [0.5, 1.0]}},
    {"kind": "fidelity_sweep", "params": {"beta": -1}},
    {"kind": "fidelity_sweep", "params": {"zeta": 1}},
    {"kind": "fidelity_sweep", "threads": 0},
    {"kind": "fidelity_sweep", "output": {"format": "xml"}},
    {"kind": "fidelity_sweep", "trunc": {"n_trunc": 1}},
    {"kind": "fidelity_sweep", "colour": "red"},
    {"params": {}},
])
def test_invalid_specs(bad):
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict(bad)


def test_expand_axis_forms():
    assert expand_axis("epsilon", 0.2) == [0.2]
    assert expand_axis("epsilon", [0.1, 0.2]) == [0.1, 0.2]
    assert expand_axis("epsilon", {"start": 0, "stop": 1, "num": 5}) == [0, 0.25, 0.5, 0.75, 1]
    assert expand_axis("n_trunc", {"values": [4.0, 6]}) == [4, 6]
    with pytest.raises(SpecError):
        expand_axis("n_trunc", [4.5])
    with pytest.raises(SpecError):
        expand_axis("epsilon", {"stop": 1})
    with pytest.raises(SpecError):
        expand_axis("epsilon", ["x"])


def test_points_order_last_axis_fastest():
    s = spec(kind="fidelity_sweep", grid={"epsilon": [0.1, 0.2], "beta": [1, 10, 100]})
    pts = s.points()
    assert len(pts) == 6
    assert [p["beta"] for p in pts[:3]] == [1, 10, 100]
    assert pts[3]["epsilon"] == 0.2


def test_digest_ignores_threads_and_path():
    a = spec(kind="fidelity_sweep", grid={"epsilon": [0.1, 0.2]})
    b = spec(kind="fidelity_sweep", grid={"epsilon": [0.1, 0.2]}, threads=3,
             output={"path": "elsewhere"})
    c = spec(kind="fidelity_sweep", grid={"epsilon": [0.1, 0.3]})
    assert a.digest() == b.digest() != c.digest()


def test_make_params_units():
    p = make_params({"epsilon": 0.2, "beta": 5, "eta": 0.9, "Gamma_phi": 0.1, "gamma": 2.0,
                     "delta1": 0, "delta2": 0, "tau": 0.5})
    # rates and delays are in units of gamma
    assert p.kappa1 == 10 and p.gamma_phi == pytest.approx(0.2) and p.tau == 0.25


def test_sector_rows_known_sizes():
    assert sector_rows(6) == 2246
    assert sector_rows(10) == 10566


# -- optimizer --------------------------------------------------------------------


def test_maximize_unimodal():
    res = maximize(lambda x: -(x - 0.3137) ** 2, np.linspace(0, 1, 11), tol=1e-4)
    assert not res.multimodal and not res.at_boundary
    assert abs(res.x - 0.3137) < 1e-4
    assert res.bracket[0] <= res.x <= res.bracket[1]


def test_maximize_multimodal_flag():
    res = maximize(lambda x: math.cos(6 * math.pi * x), np.linspace(0.05, 0.95, 19))
    assert res.multimodal


def test_maximize_boundary_flag():
    res = maximize(lambda x: x, np.linspace(0, 1, 5))
    assert res.at_boundary and res.x == 1


def test_maximize_needs_three_points():
    with pytest.raises(ValueError):
        maximize(lambda x: x, [0, 1])


def test_local_maxima_plateau_counts_once():
    assert local_maxima([0, 1, 1, 1, 0, 2, 0]) == [1, 5]


# -- backends ----------------------------------------------------------------------


@pytest.mark.parametrize("backend", ["exact", "fma", "markov"])
def test_undriven_point_is_ground_state(backend):
    p = make_params({"epsilon": 0.0, "beta": 10.0})
    out = evaluate(backend, p, TruncationConfig(4), SolverConfig())
    assert out["F"] == pytest.approx(0.5, abs=1e-12)
    assert out["C"] == 0


def test_exact_outside_caps_routes_to_fma():
    s = spec(kind="fidelity_sweep", params={"epsilon": 0.85, "beta": 10}, backends=["exact"])
    ds = run(s)
    row = ds.rows[0]
    assert row["backend_used"] == "fma" and row["status"] == "ok"
    # the warning is kept with the point's diagnostics
    assert "capped" in ds.diagnostics[0]["backends"][0]["warnings"][0]
    with pytest.warns(RoutingWarning):
        evaluate("exact", make_params({"epsilon": 0.85, "beta": 10}), TruncationConfig(4),
                 SolverConfig())


def test_resource_guard():
    s = spec(kind="fidelity_sweep", backends=["exact"], trunc={"n_trunc": 12},
             limits={"max_sector_rows": 10_000})
    with pytest.raises(ResourceGuardError):
        run(s)


def test_markov_rejects_delay():
    with pytest.raises(ValueError):
        evaluate("markov", make_params({"epsilon": 0.2, "beta": 10, "tau": 1.0}),
                 TruncationConfig(4), SolverConfig())


# -- driver ------------------------------------------------------------------------


def sweep_spec(**kw):
    return spec(kind="fidelity_sweep", grid={"epsilon": [0.1, 0.3, 0.5], "beta": [1, 10]},
                backends=["fma", "markov"], **kw)


def test_sweep_rows_and_point_column():
    ds = run(sweep_spec())
    assert ds.columns[0] == "point"
    assert len(ds.rows) == 12
    assert sorted({r["point"] for r in ds.rows}) == list(range(6))
    assert all(r["status"] == "ok" for r in ds.rows)
    # markov ignores the bandwidth, fma does not
    F = {(r["epsilon"], r["beta"], r["backend"]): r["F"] for r in ds.rows}
    assert F[0.3, 1, "markov"] == pytest.approx(F[0.3, 10, "markov"], abs=1e-14)
    assert F[0.3, 1, "fma"] < F[0.3, 10, "fma"] < F[0.3, 10, "markov"]


def test_threads_do_not_change_output(tmp_path):
    a = run(sweep_spec(), out=tmp_path / "a")
    b = run(sweep_spec(threads=2), out=tmp_path / "b")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    assert len(a.rows) == len(b.rows)


class Killed(Exception):
    pass


def test_resume_after_interruption(tmp_path):
    fresh = tmp_path / "fresh"
    run(sweep_spec(), out=fresh)

    out = tmp_path / "resumed"

    def die_after_two(done, total):
        if done == 2:
            raise Killed

    with pytest.raises(Killed):
        run(sweep_spec(), out=out, progress=die_after_two)
    log = out.with_suffix(".partial.jsonl")
    assert log.exists() and len(log.read_text().splitlines()) == 3
    run(sweep_spec(), out=out)
    assert not log.exists()
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["resumed_points"] == 2
    assert out.with_suffix(".csv").read_text() == fresh.with_suffix(".csv").read_text()


def test_resume_discards_log_of_other_spec(tmp_path):
    out = tmp_path / "x"
    with pytest.raises(Killed):
        run(sweep_spec(), out=out, progress=lambda d, t: (_ for _ in ()).throw(Killed))
    other = spec(kind="fidelity_sweep", grid={"epsilon": [0.2, 0.4]})
    run(other, out=out)
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["resumed_points"] == 0


def test_manifest_fields(tmp_path):
    run(sweep_spec(), out=tmp_path / "m")
    m = json.loads((tmp_path / "m.manifest.json").read_text())
    for key in ("spec", "spec_digest", "code_version", "environment", "started", "finished",
                "columns", "n_rows", "summary", "points"):
        assert key in m
    assert m["n_rows"] == 12 and m["summary"]["failed_rows"] == 0
    assert m["spec_digest"] == sweep_spec().digest()


def test_json_output(tmp_path):
    s = spec(kind="fidelity_sweep", params={"epsilon": 0.2}, output={"format": "json"})
    run(s, out=tmp_path / "j")
    data = json.loads((tmp_path / "j.json").read_text())
    assert isinstance(data, (list, dict))


# -- named experiments -----------------------------------------------------------


def test_no_transmission_means_no_entanglement():
    s = spec(kind="optimize_fidelity", params={"eta": 0.0, "beta": 10}, backends=["fma"])
    row = run(s).rows[0]
    assert row["F_op"] == pytest.approx(0.5, abs=1e-12)


def test_fma_fidelity_optimum_interior():
    s = spec(kind="optimize_fidelity", params={"beta": 100}, backends=["fma"])
    row = run(s).rows[0]
    assert row["status"] == "ok" and not row["at_boundary"] and not row["multimodal"]
    assert 0.3 < row["eps_op"] < 0.7
    assert row["F_op"] >= row["F_app"]


@pytest.fixture(scope="module")
def pulsed():
    s = spec(kind="pulsed_rate", params={"epsilon": 0.3, "beta": 1.0},
             grid={"T": [0.0, 0.01, 1.0, 40.0]}, trunc={"n_trunc": 8})
    return run(s)


def test_pulsed_short_pulse_is_unentangled(pulsed):
    rows = {r["T"]: r for r in pulsed.rows}
    assert rows[0.0]["F"] == pytest.approx(0.5, abs=1e-12)
    assert rows[0.01]["F"] == pytest.approx(0.5, abs=1e-3)
    assert rows[0.0]["R"] == 0


def test_pulsed_long_pulse_reaches_steady_state(pulsed):
    steady = evaluate("exact", make_params({"epsilon": 0.3, "beta": 1.0}), TruncationConfig(8),
                      SolverConfig())
    rows = {r["T"]: r for r in pulsed.rows}
    assert rows[40.0]["F"] == pytest.approx(steady["F"], abs=1e-3)
    assert rows[1.0]["R"] == pytest.approx(rows[1.0]["E_F"], rel=1e-12)


def test_contour_pure_bath_limit():
    s = spec(kind="contour", grid={"r_eff": [0.5, 3.0], "mu_eff": [0.6, 1.0]},
             options={"beta_paths": [10.0], "path_epsilon": [0.1, 0.5]})
    ds = run(s)
    grid = {(r["r_eff"], r["mu_eff"]): r["F"] for r in ds.rows if r["row_type"] == "grid"}
    assert grid[3.0, 1.0] > 0.99
    assert grid[3.0, 1.0] > grid[3.0, 0.6]
    path = [r for r in ds.rows if r["row_type"] == "path"]
    assert len(path) == 2 and all(r["beta"] == 10.0 for r in path)


def test_contour_needs_both_axes():
    with pytest.raises(ValueError):
        run(spec(kind="contour", grid={"r_eff": [1.0]}))


def test_truncation_converges_for_weak_driving():
    s = spec(kind="truncation_study", params={"epsilon": 0.2, "beta": 1.0},
             grid={"n_trunc": [4, 6, 8]})
    rows = {r["n_trunc"]: r for r in run(s).rows}
    assert math.isnan(rows[4]["dF_cauchy"])
    assert rows[6]["dF_cauchy"] < 1e-4
    assert rows[8]["n_photon"] == pytest.approx(rows[8]["n_photon_closed"], rel=1e-6)


def test_delay_study_fma_ratio():
    s = spec(kind="delay_study", params={"epsilon": 0.3, "beta": 2.0},
             grid={"tau": [0.0, 1.0, 2.0]}, backends=["fma"])
    rows = run(s).rows
    assert rows[0]["M_ratio"] == 1
    assert rows[0]["M_ratio"] > rows[1]["M_ratio"] > rows[2]["M_ratio"]


def test_spectra_dump_columns():
    s = spec(kind="spectra_dump", params={"epsilon": 0.4, "beta": 1.0},
             grid={"omega": [-1.0, 0.0, 1.0]})
    rows = run(s).rows
    assert len(rows) == 3
    mid = rows[1]
    assert mid["S_occupation"] == pytest.approx(0.4 * (1 / 0.36 - 1 / 1.96), rel=1e-10)
