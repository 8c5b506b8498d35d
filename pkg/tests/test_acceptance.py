"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed as the tests run (visible with ``-s``) and collected in
the terminal summary.  Criterion 8 is known to fail and is marked as a strict
expected failure: the five-point scheme reproduces ``Re z^3`` exactly, so the
errors sit at rounding level and no positive order can be fitted.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from prehol import dca, ising, onmodel, scaling
from prehol.lattice import HEXAGONAL, build_hex_patch, from_cells

XC = math.sqrt(2) - 1


@pytest.fixture(scope="module")
def dobrushin_fields():
    """Enumerated observable at criticality on every test domain, with timing."""
    p = ising.IsingParams.critical()
    t0 = time.perf_counter()
    out = [(name, d, a, ising.fermionic_field(d, a, p)) for name, d, a in scaling.dobrushin_cases(16)]
    return out, time.perf_counter() - t0


# 1 -------------------------------------------------------------------------------------

def test_criterion_1_strong_identity(dobrushin_fields, criterion):
    fields, elapsed = dobrushin_fields
    worst = max(dca.max_strong_residual(F) for *_, F in fields)
    t0 = time.perf_counter()
    small = [(d, a) for _, d, a, _ in fields[:12]]
    off = max(ising.max_corner_residual(d, a, 0.5) for d, a in small)
    elapsed += time.perf_counter() - t0
    ok = worst <= 1e-10 and off > 1e-3 and elapsed <= 60
    criterion(1, ok, f"{len(fields)} domain/stub cases, max strong residual {worst:.2e} at x_c, "
                     f"{off:.2e} at x = 0.5, {elapsed:.1f} s")
    assert ok


# 2 -------------------------------------------------------------------------------------

def test_criterion_2_pair_identities(criterion):
    crit = ising.verify_pair_identities(XC)
    off = ising.verify_pair_identities(0.5)
    ok = crit.first <= 1e-14 and crit.second <= 1e-14 and off.second > 0.1
    criterion(2, ok, f"residuals {crit.first:.1e}, {crit.second:.1e} at x_c; second {off.second:.3f} at x = 0.5")
    assert ok


# 3 -------------------------------------------------------------------------------------

HEX_PATCHES = {
    "1 hexagon": build_hex_patch(0),
    "7 hexagons": build_hex_patch(1),
    "10 hexagons": from_cells(HEXAGONAL, [(-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0),
                                          (2, -1), (2, 0), (1, 1)], 1.0),
    "12 hexagons": from_cells(HEXAGONAL, [(-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0),
                                          (2, -1), (2, 0), (1, 1), (-2, 1), (-1, 2)], 1.0),
}


def test_criterion_3_vertex_relation(criterion):
    t0 = time.perf_counter()
    worst_v = worst_b = 0.0
    runs = 0
    for d in HEX_PATCHES.values():
        for N in (0.0, 0.5, 1.0, 1.5, 2.0):
            for regime in (onmodel.DENSE, onmodel.DILUTE):
                F = onmodel.parafermionic_field(d, 0, onmodel.critical_params(N, regime), precise=True)
                worst_v = max(worst_v, onmodel.vertex_relation_report(F).max_residual)
                worst_b = max(worst_b, abs(onmodel.boundary_sum(F)))
                runs += 1
    elapsed = time.perf_counter() - t0
    ok = worst_v <= 1e-10 and worst_b <= 1e-9 and elapsed <= 120
    criterion(3, ok, f"{runs} (patch, N, regime) runs, max vertex residual {worst_v:.1e}, "
                     f"max |boundary sum| {worst_b:.1e}, {elapsed:.1f} s")
    assert ok


# 4 -------------------------------------------------------------------------------------

def test_criterion_4_triplet_identities(criterion):
    worst = 0.0
    for N in np.linspace(0, 2, 41):
        for regime in (onmodel.DENSE, onmodel.DILUTE):
            r = onmodel.verify_triplet_identities(onmodel.critical_params(float(N), regime))
            worst = max(worst, r.loop, r.step)
    x_ising = onmodel.critical_params(1, onmodel.DILUTE).x
    x_perc = onmodel.critical_params(1, onmodel.DENSE).x
    ok = worst <= 1e-12 and abs(x_ising - 1 / math.sqrt(3)) <= 1e-15 and x_perc == 1.0
    criterion(4, ok, f"max residual {worst:.1e} over 82 (N, regime); x = {x_ising!r} (dilute N=1), "
                     f"{x_perc!r} (dense N=1)")
    assert ok


# 5 -------------------------------------------------------------------------------------

def test_criterion_5_connective_constant(criterion):
    t0 = time.perf_counter()
    census = onmodel.saw_count(30)
    elapsed = time.perf_counter() - t0
    c = census.counts
    naive = onmodel.saw_count_naive(14)
    rep = onmodel.connective_estimate(census, start=10)
    ok = ([c[k] for k in range(1, 6)] == [3, 6, 12, 24, 48] and all(c[k] == naive[k] for k in range(1, 15))
          and rep.decreasing and rep.gap <= 0.05 and elapsed <= 600)
    criterion(5, ok, f"C(30) = {c[30]}, C(30)^(1/30) = {rep.roots[-1]:.5f}, relative gap {rep.gap:.4f}, "
                     f"decreasing on [10, 30]: {rep.decreasing}, {elapsed:.1f} s")
    assert ok


# 6 -------------------------------------------------------------------------------------

def test_criterion_6_bvp_equivalence(dobrushin_fields, criterion):
    fields, _ = dobrushin_fields
    worst = 0.0
    for _, d, a, F in fields:
        G = scaling.solve_riemann_bvp(d, a)
        worst = max(worst, scaling.proportionality(F.values, G.values)[1])
    ok = worst <= 1e-8
    criterion(6, ok, f"{len(fields)} cases, max relative deviation {worst:.1e}")
    assert ok


# 7 -------------------------------------------------------------------------------------

def test_criterion_7_observable_convergence(criterion):
    rep = scaling.observable_convergence_study()
    errs = ", ".join(f"{e:.4f}" for e in rep.errors)
    criterion(7, rep.passed, f"errors {errs}, empirical order {rep.order:.3f} "
                             f"(threshold {scaling.OBSERVABLE_ORDER_MIN})")
    assert rep.passed
    assert scaling.strictly_decreasing(rep.errors)


# 8 -------------------------------------------------------------------------------------

MESHES_8 = (1 / 8, 1 / 16, 1 / 32, 1 / 64)


def test_criterion_8_exact_data():
    for name in ("re_z", "re_z2"):
        rep = scaling.dirichlet_convergence_study(name, MESHES_8)
        assert max(rep.errors) <= 1e-10, name


@pytest.mark.xfail(strict=True, reason="Re z^3 is discrete harmonic; errors are rounding noise")
def test_criterion_8_dirichlet(criterion):
    exact = {n: max(scaling.dirichlet_convergence_study(n, MESHES_8).errors) for n in ("re_z", "re_z2")}
    cubic = scaling.dirichlet_convergence_study("re_z3", MESHES_8)
    ok = all(e <= 1e-10 for e in exact.values()) and cubic.order >= 1.5
    criterion(8, ok, f"Re z max error {exact['re_z']:.1e}, Re z^2 {exact['re_z2']:.1e}; "
                     f"Re z^3 errors {max(cubic.errors):.1e} at most, order {cubic.order:.2f} < 1.5")
    assert ok


# 9 -------------------------------------------------------------------------------------

def test_criterion_9_energy_trend(criterion):
    plus = scaling.energy_trend_study((8, 16, 32), "plus", 200000, seed=0)
    free = scaling.energy_trend_study((8, 16, 32), "free", 200000, seed=0)
    mc = ising.energy_density_mc(4, "plus", 200000, seed=0)
    exact = ising.energy_density_exact(4, "plus")
    within = abs(mc.estimate - exact) <= 3 * mc.stderr
    ok = plus.passed and free.passed and within
    fmt = lambda r: ", ".join(f"{d:+.4f}" for d in r.extra["deviations"])
    criterion(9, ok, f"plus deviations {fmt(plus)}; free {fmt(free)}; 4x4 MC {mc.estimate:.4f} "
                     f"vs exact {exact:.4f} ({abs(mc.estimate - exact) / mc.stderr:.1f} sigma)")
    assert ok


# 10 ------------------------------------------------------------------------------------

def test_criterion_10_height(criterion):
    rep = scaling.height_positivity_study()
    res = ", ".join(f"{r:.2e}" for r in rep.residual)
    criterion(10, rep.passed, f"boundary max {max(rep.boundary_max):.1e}, interior min "
                              f"{min(rep.interior_min):.2e}, face residuals {res}")
    assert rep.passed


# 11 ------------------------------------------------------------------------------------

SMALL = '{"kind": "square", "cellsX": 1, "cellsY": 2, "mesh": 1}'
COMMANDS = [
    ["dca-check", "--domain", '{"kind": "square", "cellsX": 4, "cellsY": 4, "mesh": 0.25}'],
    ["ising-observable", "--domain", SMALL],
    ["ising-observable", "--domain", SMALL, "--format", "csv"],
    ["ising-energy", "--size", "8", "--sweeps", "5000", "--seed", "9"],
    ["on-verify", "--N", "0.5", "--regime", "dense", "--domain", '{"kind": "hex", "rings": 1}'],
    ["saw-census", "--kmax", "16", "--format", "csv"],
    ["scaling-converge", "--study", "dirichlet", "--data", "re_z4", "--meshes", "[0.25, 0.125, 0.0625]"],
    ["scaling-converge", "--study", "energy", "--sizes", "[4, 8]", "--sweeps", "3000", "--seed", "2"],
    ["scaling-converge", "--study", "bvp", "--max-cells", "3"],
    ["scaling-converge", "--study", "height", "--meshes", "[0.125, 0.0625]"],
    ["scaling-converge", "--study", "observable", "--meshes", "[0.125, 0.0625, 0.03125]"],
]


def _run(argv, threads, out):
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    cmd = [sys.executable, "-m", "prehol.cli", *argv, "--threads", str(threads), "-o", str(out)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out.read_bytes()


def test_criterion_11_determinism(tmp_path, criterion):
    bad = []
    for k, argv in enumerate(COMMANDS):
        runs = [_run(argv, t, tmp_path / f"{k}-{i}.out") for i, t in enumerate((1, 1, 4))]
        if len(set(runs)) != 1:
            bad.append(argv[0])
    names = sorted({a[0] for a in COMMANDS})
    ok = not bad and len(names) == 6
    criterion(11, ok, f"{len(COMMANDS)} configurations over {len(names)} commands, 3 runs each "
                      f"(threads 1, 1, 4): {'identical' if ok else 'differ: ' + ', '.join(bad)}")
    assert ok


def test_cli_output_is_json():
    # sanity check on the artefacts compared above
    proc = subprocess.run([sys.executable, "-m", "prehol.cli", "saw-census", "--kmax", "5"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["result"]
