"""Acceptance suite: one test per shipped criterion, printed pass lines.

Run with `pytest tests/test_acceptance.py -v -s` to see the summary lines.
All energies/fields in natural units hbar = m = e = 1 (lengths in rho);
relative spectrum errors for exact-zero levels are measured against 1 in
these units (the spectral spacing is O(1)).
"""

import math
import time

import numpy as np

from spinsurf.constants import PhysicalScale
from spinsurf.dynamics import (BentCylinderSetup, force_equality_report,
                               spin_hall_run)
from spinsurf.frames import expansion_report
from spinsurf.gauge import curl_matches_w, flux, pseudo_field_at, soi_radius
from spinsurf.hamiltonian import Grid, assemble_H0, gauge_conjugate
from spinsurf.spectra import (conductance_curve, cylinder_analytic_spectrum,
                              cylinder_ring_operator, cylinder_thresholds,
                              degeneracy_clusters, eigensolve)
from spinsurf.surfaces import make_surface


def _report(num, name, detail):
    print(f"criterion {num:02d} PASS  {name}: {detail}")


def test_criterion_01_cylinder_spectrum():
    t0 = time.monotonic()
    target = np.repeat([0.0, 1.0, 3.0, 6.0], 4)   # (n^2 +- n)/2 at rho = 1

    op = cylinder_ring_operator(1.0, 256, with_connection=True)
    res = eigensolve(op, k=16, return_vectors=False)
    rel = np.abs(res.values - target) / np.maximum(np.abs(target), 1.0)
    assert rel.max() < 1e-3

    errs, hs = [], []
    for n in (64, 128, 256, 512):
        vals = np.sort(np.linalg.eigvalsh(
            cylinder_ring_operator(1.0, n).matrix.toarray()))[:16]
        errs.append(np.max(np.abs(vals - target)
                           / np.maximum(np.abs(target), 1.0)))
        hs.append(2 * math.pi / n)
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    assert 1.8 <= slope <= 2.2

    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    _report(1, "cylinder spectrum",
            f"max rel err {rel.max():.2e} (< 1e-3), refinement slope "
            f"{slope:.3f}, {elapsed:.1f} s")


def test_criterion_02_degeneracy_restructuring():
    # analytic level lists at the exact tolerance 1e-8 * spread
    with_lv = [L.energy for L in cylinder_analytic_spectrum(1.0, 5, True)
               if L.energy <= 6.0 + 1e-12]
    spread = max(with_lv) - min(with_lv)
    cl_with = degeneracy_clusters(with_lv, tol=1e-8 * spread)
    assert cl_with[0][1] == 4

    wo_lv = [L.energy for L in cylinder_analytic_spectrum(1.0, 5, False)
             if L.energy <= 6.0 + 1e-12]
    cl_wo = degeneracy_clusters(wo_lv, tol=1e-8 * (max(wo_lv) - min(wo_lv)))
    assert cl_wo[0][1] == 2

    # discretized confirmation (h^2-aware clustering tolerance)
    res = eigensolve(cylinder_ring_operator(1.0, 256, True), k=16,
                     return_vectors=False)
    num_cl = degeneracy_clusters(res.values, tol=1e-2)
    assert [m for _, m in num_cl] == [4, 4, 4, 4]
    res0 = eigensolve(cylinder_ring_operator(1.0, 256, False), k=10,
                      return_vectors=False)
    assert degeneracy_clusters(res0.values, tol=1e-2)[0][1] == 2

    _report(2, "degeneracy restructuring",
            f"ground multiplicity with SOI = {cl_with[0][1]}, "
            f"without = {cl_wo[0][1]} (numeric confirms)")


def test_criterion_03_conductance_steps():
    e_grid = np.linspace(0.0, 8.0, 1601)
    cw = conductance_curve(1.0, e_grid, with_connection=True)
    co = conductance_curve(1.0, e_grid, with_connection=False)

    assert cw.channels[0] == 4      # jumps 0 -> 4 at E = 0+ (grid at 0)
    assert cw.channels[1] == 4
    assert co.channels[1] == 2

    def channels_at(e, with_conn):
        return int(conductance_curve(1.0, [e], with_conn).channels[0])

    # with-connection steps at 1, 3, 6; without at 0.5, 2, 4.5
    for thr in (1.0, 3.0, 6.0):
        assert channels_at(thr + 1e-9, True) == channels_at(thr - 1e-6, True) + 4
    for thr in (0.5, 2.0, 4.5):
        assert channels_at(thr + 1e-9, False) == channels_at(thr - 1e-6, False) + 4

    # the two curves differ at every positive threshold
    tw = np.unique(cylinder_thresholds(1.0, 8.0, True))
    to = np.unique(cylinder_thresholds(1.0, 8.0, False))
    for thr in np.concatenate([tw[tw > 0], to[to > 0]]):
        assert channels_at(thr + 1e-9, True) != channels_at(thr + 1e-9, False)

    # exact channel-count match against brute-force enumeration
    def brute(e, with_conn):
        return sum(1 for n in range(-20, 21) for s in (+1, -1)
                   if ((n * n + s * n) / 2.0 if with_conn
                       else n * n / 2.0) <= e + 1e-12)

    for i in range(0, len(e_grid), 97):
        assert cw.channels[i] == brute(e_grid[i], True)
        assert co.channels[i] == brute(e_grid[i], False)

    _report(3, "conductance steps",
            "0->4 e^2/h at 0+, steps {1,3,6} vs {0.5,2,4.5}, all counts "
            "match brute force")


def test_criterion_04_flux_quantization():
    details = []
    for r in (0.5, 1.0, 2.3):
        res = flux(make_surface("sphere", r=r))
        assert abs(res.phi_over_phi0 - 2.0) < 1e-6 * 2.0
        details.append(f"sphere(r={r:g}): {res.phi_over_phi0:.8f}")
    for rho, R in ((1.0, 3.0), (1.0, 1.01), (1.0, 100.0)):
        res = flux(make_surface("torus", rho=rho, R=R))
        assert abs(res.phi_over_phi0) < 1e-8
        details.append(f"torus({rho:g},{R:g}): {res.phi_over_phi0:.2e}")
    _report(4, "flux quantization", "; ".join(details))


def test_criterion_05_pseudo_field_tesla():
    sample = pseudo_field_at(make_surface("sphere", r=1.0), (1.2, 0.4))
    b = PhysicalScale(length_m=1e-9).b_tesla(sample.B)
    assert abs(b - 328.0) / 328.0 < 0.01
    _report(5, "pseudo-field magnitude", f"1 nm bubble: B = {b:.1f} T")


def test_criterion_06_soi_radius():
    r31 = soi_radius(3e-11, 0.041)
    r23 = soi_radius(4e-11, 0.041)
    assert abs(r31 - 31e-9) / 31e-9 < 0.02
    assert abs(r23 - 23e-9) / 23e-9 < 0.02
    _report(6, "SOI-radius estimate",
            f"r(3e-11) = {r31 * 1e9:.1f} nm, r(4e-11) = {r23 * 1e9:.1f} nm")


def test_criterion_07_expansion_orders():
    details = []
    for patch, point in ((make_surface("sphere", r=1.0), (1.1, 0.7)),
                         (make_surface("torus", rho=1.0, R=3.0), (0.8, 2.0)),
                         (make_surface("torus", rho=1.0, R=3.0), (2.4, 7.0))):
        rep = expansion_report(patch, point)
        by = {c.name: c for c in rep.checks}
        # fitted log-log slopes carry a small regression bias from the
        # subleading q3 powers inside the 3-decade window; 0.05 covers it
        c3 = by["Omega_3"]
        assert c3.exact_zero or c3.fitted_slope >= 2.0 - 0.05
        ca = by["Omega_a - i sigma3 w_a - i A_so"]
        assert ca.exact_zero or ca.fitted_slope >= 1.0 - 0.05
        for name in ("G^ab R_ab combination", "R_33 combination"):
            c = by[name]
            assert c.exact_zero or c.fitted_slope >= 1.0 - 0.05
        # tetrad residual below 1e-8 at every q3 (incl. 1e-4 * radius)
        assert rep.tetrad_residuals.max() < 1e-8
        details.append(f"{patch.kind}@{point}: tetrad "
                       f"{rep.tetrad_residuals.max():.1e}")
    _report(7, "thin-layer expansion orders", "; ".join(details))


def test_criterion_08_curl_identity():
    rng = np.random.default_rng(42)
    worst = 0.0
    for patch in (make_surface("plane"), make_surface("cylinder", rho=1.0),
                  make_surface("sphere", r=1.0),
                  make_surface("torus", rho=1.0, R=3.0)):
        (a0, a1), (b0, b1) = patch.domain
        pad1 = 0.12 * (a1 - a0)
        pad2 = 0.12 * (b1 - b0)
        for _ in range(100):
            q = (rng.uniform(a0 + pad1, a1 - pad1),
                 rng.uniform(b0 + pad2, b1 - pad2))
            resid, _ = curl_matches_w(patch, q)
            worst = max(worst, resid)
            assert resid < 1e-8
            # and the sigma3 part is literally -K/2
            s = pseudo_field_at(patch, q)
            assert abs(s.curl_A_sigma3 + 0.5 * s.K) < 1e-8
    _report(8, "curl identity", f"400 random points, worst residual "
                                f"{worst:.2e} < 1e-8")


def test_criterion_09_time_reversal():
    from spinsurf.hamiltonian import time_reversal_defect
    details = []
    for patch in (make_surface("plane"), make_surface("cylinder", rho=1.0),
                  make_surface("torus", rho=1.0, R=3.0)):
        grid = Grid.for_patch(patch, 12, 12)
        H0 = assemble_H0(patch, grid)
        d = time_reversal_defect(H0)
        assert d <= 1e-12 * H0.max_norm()
        details.append(f"{patch.kind}: {d:.1e}")
    _report(9, "time reversal", "; ".join(details))


def test_criterion_10_gauge_covariance():
    rng = np.random.default_rng(1234)
    diffs = []
    for patch, bc in ((make_surface("cylinder", rho=1.0, length=1.0),
                       ("periodic", "periodic")),
                      (make_surface("torus", rho=1.0, R=3.0), None)):
        grid = Grid.for_patch(patch, 20, 10, bc=bc)
        H0 = assemble_H0(patch, grid)
        c = rng.standard_normal(4)
        Q1, Q2 = grid.mesh()
        per2 = 2 * math.pi / (grid.domain[1][1] - grid.domain[1][0])
        theta = (c[0] * np.sin(Q1) + c[1] * np.cos(2 * Q1)
                 + c[2] * np.sin(per2 * Q2) + c[3])
        Hg = gauge_conjugate(H0, theta)
        v0 = np.linalg.eigvalsh(H0.matrix.toarray())[:16]
        v1 = np.linalg.eigvalsh(Hg.matrix.toarray())[:16]
        diffs.append(np.abs(v0 - v1).max())
        assert diffs[-1] < 1e-10
    _report(10, "gauge covariance",
            f"spectrum shifts {diffs[0]:.1e}, {diffs[1]:.1e} < 1e-10")


def test_criterion_11_force_equality_and_spin_hall():
    t0 = time.monotonic()
    setup = BentCylinderSetup(rho=1.0, R=20.0, theta0=0.1)

    rep = force_equality_report(setup, k_s=8.0)
    for s in (+1, -1):
        assert rep.rel_pm_vs_so[s] < 0.05
        assert rep.rel_vs_analytic[s] < 0.10
    assert rep.f_pm[+1] * rep.f_pm[-1] < 0   # opposite per spin species

    out0 = spin_hall_run(setup, k_s=8.0, steps=400)
    assert out0["opposite_sign"]
    assert out0["asymmetry"] < 0.05

    setup_pi = BentCylinderSetup(rho=1.0, R=20.0, theta0=0.1,
                                 theta_c=math.pi)
    out1 = spin_hall_run(setup_pi, k_s=8.0, steps=400)
    assert out1["opposite_sign"]
    assert out1["asymmetry"] < 0.05
    # the sign pattern flips between the outer and inner windows
    assert out0["deflection"]["up"] * out1["deflection"]["up"] < 0

    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    _report(11, "force equality and spin Hall",
            f"|F_pm - F_so|/|F_pm| = {rep.rel_pm_vs_so[+1]:.1e}, "
            f"vs analytic {rep.rel_vs_analytic[+1]:.1e}, deflections "
            f"{out0['deflection']['up']:+.2e}/{out0['deflection']['down']:+.2e} "
            f"(flip at theta_c = pi), {elapsed:.0f} s")
