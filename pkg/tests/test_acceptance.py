"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (visible under ``pytest -v``
or when this file is run as a script) before asserting.
"""
import sys
import time

import numpy as np
import pytest

from singloc import clarke as C
from singloc import scenario as S
from singloc import sets as csg
from singloc import singular as SG
from singloc.field import check_lipschitz, dist_from_set, neg_dist_to_set, shifted
from singloc.fgeod import fan_batch, maximal_extension, trace_f_geodesic
from singloc.geodesic import distance
from singloc.metric import Euclidean, covector

_cache = {}
_capture = []


@pytest.fixture(autouse=True)
def _capture_manager(pytestconfig):
    _capture[:] = [pytestconfig.pluginmanager.getplugin("capturemanager")]
    yield


def scen(name, **kw):
    key = (name, tuple(sorted(kw.items())))
    if key not in _cache:
        _cache[key] = S.build(name, **kw)
    return _cache[key]


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    cm = _capture[0] if _capture else None
    if cm is not None:
        with cm.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    else:
        print(line, flush=True)
    assert ok, line


# 1 ------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["euclidean", "busemann_x", "randers_wind"])
def test_01_gradient_law(name):
    t0 = time.time()
    sc = scen(name)
    f, m = sc.field, sc.metric
    rng = np.random.default_rng(1)
    P = sc.window.sample(rng, 1000, margin=0.05 * sc.window.diagonal)
    # keep clear of the base point, where the fan is not a singleton
    P = P[f(P) > 0.05] if name != "busemann_x" else P
    fans = fan_batch(f, m, P, 0.01 * sc.window.diagonal)
    single = [k for k, fan in enumerate(fans) if fan.counts == (1, 1)]
    err = 0.0
    for k in single:
        w = np.asarray(fans[k].outgoing[0])
        err = max(err, float(np.max(np.abs(covector(m, P[k], w) - f.differential(P[k])))))
    dt = time.time() - t0
    report(1, len(single) >= 900 and err <= 1e-3 and dt < 60,
           f"[{name}] singleton points={len(single)} max component error={err:.2e} time={dt:.1f}s")


# 2 ------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["flat_torus", "two_point_dN"])
def test_02_nondifferentiability(name):
    sc = scen(name)
    f, m = sc.field, sc.metric
    rng = np.random.default_rng(2)
    if name == "flat_torus":
        s = rng.uniform(0.05, 0.95, 200)
        s = s[np.abs(s - 0.5) > 0.02][:100]
        vert = np.column_stack([0.5 + 0 * s[:50], s[:50]])
        horz = np.column_stack([s[50:], 0.5 + 0 * s[50:]])
        P = np.concatenate([vert, horz])
        normals = np.concatenate([np.tile([1.0, 0.0], (len(vert), 1)), np.tile([0.0, 1.0], (len(horz), 1))])
    else:
        s = rng.uniform(-2.8, 2.8, 100)
        P = np.column_stack([0 * s, s])
        normals = np.tile([1.0, 0.0], (len(P), 1))
    labels, counts = SG.classify_points(f, m, P, 0.01, screen=False)
    multi = counts[:, 0] >= 2
    h = 1e-5
    fwd = (f(P + h * normals) - f(P)) / h
    bwd = (f(P) - f(P - h * normals)) / h
    jump = np.abs(fwd - bwd)
    ok = multi.sum() == len(P) and bool(np.all(jump > 0.1))
    report(2, ok, f"[{name}] points={len(P)} multiplicity>=2: {int(multi.sum())} min jump={jump.min():.3f}")


# 3 ------------------------------------------------------------------------------------

def test_03_torus_cut_locus():
    t0 = time.time()
    sc = scen("flat_torus")
    m = sc.metric
    g = SG.extract_singular_locus(sc.field, m, window=sc.window, grid_n=512)
    up = g.locus_points("upper-singular")
    s = np.linspace(0, 1, 2001)
    cross = np.concatenate([np.column_stack([0.5 + 0 * s, s]), np.column_stack([s, 0.5 + 0 * s])])
    d1 = m.dist(up[:, None, :], cross[None, ::4, :]).min(axis=1).max()
    d2 = m.dist(cross[:, None, :], up[None, :, :]).min(axis=1).max()
    haus = float(max(d1, d2))
    tree = SG.verify_local_tree(g, 0.2, 50)
    dt = time.time() - t0
    report(3, haus <= 2 / 512 and tree.passed and dt < 120,
           f"hausdorff={haus:.2e} (<= {2 / 512:.2e}) tree={tree.passed} cycles={tree.cycles_found} time={dt:.1f}s")


# 4 ------------------------------------------------------------------------------------

def test_04_section7_dN():
    sc = scen("section7_dN", K=8)
    f, m = sc.field, sc.metric
    g = SG.extract_singular_locus(f, m, window=sc.window, grid_n=512)
    sp = g.spacing
    U = g.locus_points("upper-singular")
    foc = np.asarray(sc.oracle["focal_points"].value)[:6]
    gaps = [float(np.min(np.hypot(*(U - c).T))) for c in foc]
    ts = np.array([1.5, 3.0, 5.0, -1.5, -3.0, -5.0])
    axis_err = float(np.max(np.abs(f(np.column_stack([ts, 0 * ts])) - (np.abs(ts) - 1))))
    reg = SG.classify_point(f, m, (2.0, 0.0)).label
    mx = maximal_extension(f, m, trace_f_geodesic(f, m, (2.0, 0.0), "forward"))
    pts = mx.certificate.segment.points
    x_hi = sc.window.x1
    off_axis = float(np.max(np.abs(pts[:, 1])))
    start_gap = abs(float(mx.backward_end.point[0]) - 1.0)
    end_gap = abs(float(mx.forward_end.point[0]) - x_hi)
    ok = (max(gaps) <= 2 * sp and axis_err <= 2 * sp and reg == "regular"
          and max(off_axis, start_gap, end_gap) <= 2 * sp and float(pts[:, 0].min()) >= 1 - 2 * sp)
    report(4, ok, f"focal gaps/spacing={np.round(np.array(gaps) / sp, 2).tolist()} axis err={axis_err:.1e} "
                  f"(2,0)={reg} trace offsets=({off_axis:.1e}, {start_gap:.1e}, {end_gap:.1e})")


# 5 ------------------------------------------------------------------------------------

def test_05_combined_closure():
    sc = scen("section7_combined", K=8)
    f, m = sc.field, sc.metric
    p = np.array([2.0, 0.0])
    from singloc.window import Window
    local = Window(1.75, 2.25, -0.25, 0.25)
    g = SG.extract_singular_locus(f, m, window=local, grid_n=129)
    near = {}
    for lab in ("upper-singular", "lower-singular"):
        X = g.locus_points(lab)
        near[lab] = int(np.sum(np.hypot(*(X - p).T) <= 0.2)) if len(X) else 0
    reg = SG.classify_point(f, m, p).label
    ok = near["upper-singular"] > 0 and near["lower-singular"] > 0 and reg == "regular"
    report(5, ok, f"upper near={near['upper-singular']} lower near={near['lower-singular']} (2,0)={reg}")


# 6 ------------------------------------------------------------------------------------

@pytest.mark.parametrize("name,cover,factor", [
    ("two_point_dN", 1e-2, 2), ("two_point_dN", 1e-3, 2), ("two_point_dN", 1e-4, 2),
    ("flat_torus", 1e-2, 3), ("euclidean", 1e-2, 0)])
def test_06_sard(name, cover, factor):
    t0 = time.time()
    sc = scen(name)
    est = C.estimate_critical_values(sc.field, sc.metric, window=sc.window, grid_n=129, delta_cover=cover)
    dt = time.time() - t0
    bound = est.measure_upper_bound
    ok = (bound == 0.0 if factor == 0 else bound <= factor * cover) and dt < 60
    report(6, ok, f"[{name} cover={cover:g}] values={np.round(est.values, 6).tolist()} "
                  f"bound={bound:.2e} time={dt:.1f}s")


# 7 ------------------------------------------------------------------------------------

def test_07_level_sets():
    sc = scen("two_point_dN")
    f, m = sc.field, sc.metric
    counts, regular, disjoint = {}, {}, {}
    for t in (0.5, 1.5, 1.0):
        ls = C.extract_level_set(f, t=t, grid_n=257)
        counts[t] = len(ls.components)
        regular[t] = ls.regular
        comps = ls.components
        disjoint[t] = all(C.polylines_disjoint(comps[i], comps[j], ls.spacing)
                          for i in range(len(comps)) for j in range(i + 1, len(comps)))
    ok = (counts[0.5] == 2 and counts[1.5] == 1 and all(regular[0.5]) and all(regular[1.5])
          and disjoint[0.5] and not all(regular[1.0]))
    report(7, ok, f"components={counts} regular={regular}")


# 8 ------------------------------------------------------------------------------------

def _equivalence_points():
    torus = [(0.5, y) for y in (0.1, 0.2, 0.3, 0.5, 0.7, 0.85)] + [(x, 0.5) for x in (0.15, 0.3, 0.65, 0.8)]
    dn = scen("section7_dN", K=8)
    th = dn.config["thetas"]
    foc = np.asarray(dn.oracle["focal_points"].value)
    dpts = []
    for i in range(5):
        w = 0.5 * (th[i] + th[i + 1])
        dpts.append(foc[i])
        dpts.append(foc[i] + 0.3 * np.array([np.cos(w), np.sin(w)]))
    eta = scen("section7_eta", K=8)
    u = np.asarray(eta.oracle["lower_points"].value["points"])
    epts = list(u[:5]) + list(0.5 * u[:5])
    return [("flat_torus", {}, torus, "upper-singular"), ("section7_dN", {"K": 8}, dpts, "upper-singular"),
            ("section7_eta", {"K": 8}, epts, "lower-singular")]


@pytest.mark.parametrize("name,kw,points,label", _equivalence_points(), ids=["torus", "dN", "eta"])
def test_08_local_equivalence(name, kw, points, label):
    sc = scen(name, **kw)
    reps = [SG.check_local_cutlocus_equivalence(sc.field, sc.metric, p, 0.2) for p in points]
    good = [r.status == "pass" and r.label == label for r in reps]
    worst = max(r.hausdorff / r.tol for r in reps)
    report(8, len(reps) == 10 and all(good),
           f"[{name}] passed {sum(good)}/{len(reps)} worst gap/tol={worst:.2f}")


# 9 ------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", S.list_scenarios())
def test_09_lipschitz(name):
    sc = scen(name)
    r = check_lipschitz(sc.field)
    report(9, r.passed and r.max_violation <= 1e-6 and r.gradient_norm_max <= 1 + 1e-3,
           f"[{name}] max violation={r.max_violation:.2e} gradient norm max={r.gradient_norm_max:.6f}")


# 10 -----------------------------------------------------------------------------------

def test_10_randers_asymmetry():
    sc = scen("randers_wind")
    m = sc.metric
    o, e = np.zeros(2), np.array([1.0, 0.0])
    there = distance(m, o, e).value
    back = distance(m, e, o).value
    N = csg.PointSet((0.0, 0.0))
    dist = dist_from_set(m, N, sc.window)
    neg = neg_dist_to_set(m, N, sc.window)
    fe, ne = float(dist(e)), float(neg(e))
    ok = (abs(there - 2 / 3) <= 1e-6 and abs(back - 2) <= 1e-6
          and abs(fe - 2 / 3) <= 1e-6 and abs(ne + 2) <= 1e-6)
    report(10, ok, f"d(o,e)={there:.9f} d(e,o)={back:.9f} dist_from_set(e)={fe:.9f} neg_dist_to_set(e)={ne:.9f}")


# 11 -----------------------------------------------------------------------------------

def _limit_cases(name):
    rng = np.random.default_rng(11)
    if name == "flat_torus":
        ps = [(0.5, y) for y in rng.uniform(0.1, 0.4, 5)] + [(x, y) for x, y in rng.uniform(0.15, 0.35, (5, 2))]
    elif name == "busemann_x":
        ps = [tuple(p) for p in rng.uniform(-2, 2, (10, 2))]
    else:
        sc = scen("section7_dN", K=8)
        foc = np.asarray(sc.oracle["focal_points"].value)
        ps = [tuple(c) for c in foc[:4]] + [tuple(p) for p in rng.uniform(1.5, 4.0, (6, 2))]
    cases = []
    for p in ps:
        for case in ("incoming", "outgoing"):
            cases.append((p, rng.uniform(0, 2 * np.pi), case))
    return cases


@pytest.mark.parametrize("name,kw", [("flat_torus", {}), ("busemann_x", {}), ("section7_dN", {"K": 8})],
                         ids=["torus", "busemann", "dN"])
def test_11_limit_inequalities(name, kw):
    sc = scen(name, **kw)
    f, m = sc.field, sc.metric
    margins, passed = [], 0
    for p, ang, case in _limit_cases(name):
        seq = SG.approach_sequence(f, m, p, (np.cos(ang), np.sin(ang)), case, scale=0.02)
        r = SG.check_limit_inequalities(f, m, p, seq, case)
        margins.append(r.margin)
        passed += r.margin >= -1e-3
    report(11, passed == 20, f"[{name}] sequences passed {passed}/20 min margin={min(margins):.2e}")


# 12 -----------------------------------------------------------------------------------

def test_12_reconstruction():
    m = Euclidean()
    W = scen("euclidean").window
    f = shifted(dist_from_set(m, csg.Disk((0.0, 0.0), 1.0), W), 1.0)
    r1 = SG.check_dist_reconstruction(f, m)
    sc = scen("section7_combined", K=8)
    r2 = SG.check_dist_reconstruction(sc.field, sc.metric, region=lambda Q: Q[:, 1] >= 0)
    report(12, r1.passed and r2.passed,
           f"d_D1+1 error={r1.max_error:.2e} tol={r1.tol:.2e}; combined(y>=0) error={r2.max_error:.2e} tol={r2.tol:.2e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
