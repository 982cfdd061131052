"""Exit criteria for the package, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the terminal summary.
"""

import subprocess
import sys
import time

import numpy as np

import oracles
from cases import baseline_configs, pipeline_configs
from cmm import cli
from cmm.baselines import cross_attention_forward, prepend_forward
from cmm.bench import fit_slope, group_by_connector, read_records
from cmm.block import cmm_forward
from cmm.config import CmmConfig
from cmm.correlation import aggregate_context, apply_topk, correlate, project_shared, split_heads
from cmm.film import film_in, film_out
from cmm.fixtures import generate_baseline_weights, generate_inputs, generate_weights
from cmm.numeric import layer_norm
from cmm.ssm import selective_scan, ssm_conv, ssm_scan_recurrent
from conftest import ACCEPTANCE_LINES, max_abs


def report(number, name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{number:>2}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def test_01_softmax_simplex():
    t0 = time.perf_counter()
    g = np.random.default_rng(101)
    worst_s = worst_r = 0.0
    bad_support = 0
    for _ in range(100):
        H, T, G, dh = int(g.integers(1, 9)), int(g.integers(1, 65)), int(g.integers(1, 9)), int(g.integers(1, 17))
        k = int(g.integers(1, G + 1))
        sc = apply_topk(correlate(g.standard_normal((H, T, dh)), g.standard_normal((H, G, dh))), k)
        worst_s = max(worst_s, np.max(np.abs(sc.scores.sum(-1) - 1)))
        worst_r = max(worst_r, np.max(np.abs(sc.renormalized.sum(-1) - 1)))
        bad_support += int(np.sum(np.count_nonzero(sc.renormalized, axis=-1) != k))
    elapsed = time.perf_counter() - t0
    ok = worst_s <= 1e-9 and worst_r <= 1e-9 and bad_support == 0 and elapsed < 5
    report(1, "softmax simplex", ok,
           f"score err {worst_s:.1e}, renorm err {worst_r:.1e}, rows without k nonzeros {bad_support}, {elapsed:.2f}s")


def test_02_gate_off_identity():
    g = np.random.default_rng(202)
    worst = 0.0
    for i in range(20):
        T, D = int(g.integers(1, 64)), int(g.integers(2, 65))
        inp = generate_inputs(T, 1, D, 1, 1000 + i)
        gam, bet = g.standard_normal((T, D)) * 3, g.standard_normal((T, D)) * 3
        lg, lb = g.standard_normal(D), g.standard_normal(D)
        worst = max(worst, max_abs(film_in(inp.xt, gam, bet, 0.0, lg, lb), layer_norm(inp.xt, lg, lb)))
        worst = max(worst, max_abs(film_out(inp.xt, gam, bet, 0.0), inp.xt))
    report(2, "gate-off identity", worst <= 1e-15, f"max-abs {worst:.1e} over 20 fixtures")


def test_03_topk_degeneracies():
    worst = 0.0
    one_hot = True
    for seed in range(10):
        cfg = CmmConfig(T=20, G=5, D_t=32, H=4, k=5)
        w = generate_weights(cfg, seed)
        inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, seed)
        a, b = project_shared(inp.xt, inp.xv, w.correlation)
        raw = correlate(split_heads(a, cfg.H), split_heads(b, cfg.H))
        worst = max(worst, max_abs(aggregate_context(apply_topk(raw, 5), b), raw.scores.mean(axis=0) @ b))
        r1 = apply_topk(raw, 1).renormalized
        one_hot &= bool(np.all(np.sort(r1, axis=-1)[..., :-1] == 0) and np.all(r1.max(-1) == 1.0))
    ran = []
    for backend in ("diagonal_lti", "selective_scan"):
        for k in range(1, 6):
            cfg = CmmConfig(T=20, G=5, D_t=32, H=4, k=k, backend=backend)
            inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, k)
            out = cmm_forward(inp.xt, inp.xv, generate_weights(cfg, k), cfg)
            ran.append(bool(np.all(np.isfinite(out.sequence))))
    ok = worst <= 1e-12 and one_hot and all(ran)
    report(3, "top-k degeneracies", ok, f"k=G max-abs {worst:.1e}, k=1 one-hot={one_hot}, k=1..5 x 2 backends ran={sum(ran)}/10")


def test_04_ssm_mode_equivalence():
    t0 = time.perf_counter()
    p = generate_weights(CmmConfig(D_t=32, state_size=16), 404).ssm
    worst = {}
    for T in (1, 7, 64, 257, 2048):
        x = generate_inputs(T, 1, 32, 1, T).xt
        worst[T] = max_abs(ssm_scan_recurrent(x, p), ssm_conv(x, p))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and elapsed < 30
    report(4, "ssm mode equivalence", ok, f"max-abs {max(worst.values()):.1e} over T={list(worst)}, {elapsed:.2f}s")


def test_05_oracle_equivalence():
    t0 = time.perf_counter()
    worst = {"cmm": 0.0, "prepend": 0.0, "cross_attend": 0.0}
    for i, cfg in enumerate(pipeline_configs()):
        w = generate_weights(cfg, 500 + i)
        inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, 600 + i)
        out = cmm_forward(inp.xt, inp.xv, w, cfg)
        seq, pooled = oracles.cmm_forward(inp.xt, inp.xv, w, cfg)
        worst["cmm"] = max(worst["cmm"], max_abs(out.sequence, seq), max_abs(out.pooled, pooled))
    for i, cfg in enumerate(baseline_configs()):
        inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, 700 + i)
        for name, fwd, ref in (("prepend", prepend_forward, oracles.prepend_forward),
                               ("cross_attend", cross_attention_forward, oracles.cross_attention_forward)):
            w = generate_baseline_weights(name, cfg, 800 + i)
            out = fwd(inp.xt, inp.xv, w, cfg.H)
            seq, pooled = ref(inp.xt, inp.xv, w, cfg.H)
            worst[name] = max(worst[name], max_abs(out.sequence, seq), max_abs(out.pooled, pooled))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-8 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(5, "oracle equivalence (20 configs each)", ok, f"{detail}, {elapsed:.1f}s")


def test_06_causality_linearity():
    lti = generate_weights(CmmConfig(D_t=32, backend="diagonal_lti"), 606).ssm
    sel = generate_weights(CmmConfig(D_t=32, backend="selective_scan"), 606).ssm
    g = np.random.default_rng(606)
    causal = True
    for cut in (0, 1, 10, 63, 99):
        x = g.standard_normal((100, 32))
        xz = x.copy()
        xz[cut:] = 0
        for fn in (lambda v: ssm_scan_recurrent(v, lti), lambda v: selective_scan(v, sel)):
            causal &= fn(x)[:cut].tobytes() == fn(xz)[:cut].tobytes()
    x1, x2 = g.standard_normal((100, 32)), g.standard_normal((100, 32))
    lin = max_abs(ssm_scan_recurrent(0.7 * x1 - 2.5 * x2, lti),
                  0.7 * ssm_scan_recurrent(x1, lti) - 2.5 * ssm_scan_recurrent(x2, lti))
    report(6, "causality & linearity", causal and lin <= 1e-8, f"causal={causal}, superposition max-abs {lin:.1e}")


def test_07_complexity(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "sweep.csv"
    rc = cli.main(["sweep", "--connector", "cmm,prepend", "--T", "256,512,1024,2048,4096,8192",
                   "--G", "5", "--D", "64", "--repeats", "5", "--warmup", "2", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    groups = group_by_connector(read_records(out))
    cmm, pre = fit_slope(groups["cmm"]), fit_slope(groups["prepend"])
    inversions = {c: sum(b.wall_ns_median < a.wall_ns_median for a, b in zip(rs, rs[1:])) for c, rs in groups.items()}
    ok = (rc == 0 and 0.9 <= cmm.slope <= 1.3 and cmm.r_squared >= 0.98
          and pre.slope - cmm.slope >= 0.5 and elapsed < 600 and max(inversions.values()) <= 1)
    report(7, "near-linear scaling", ok,
           f"cmm slope {cmm.slope:.3f} (R2 {cmm.r_squared:.4f}), prepend slope {pre.slope:.3f} "
           f"(band {'ok' if pre.passed else 'miss'}), gap {pre.slope - cmm.slope:.3f}, "
           f"inversions {inversions}, {elapsed:.0f}s")


_DETERMINISM = """
import hashlib, os, sys, tempfile
from cmm.block import cmm_forward
from cmm.config import CmmConfig
from cmm.fixtures import generate_inputs, generate_weights, load_bundle, save_bundle
cfg = CmmConfig(T=32, G=5, D_t=32, H=4, k=4, backend=sys.argv[1])
w = generate_weights(cfg, 808)
inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, 808)
path = os.path.join(tempfile.mkdtemp(), "w.cmmwb")
save_bundle(w, cfg, path, seed=808)
w2, cfg2 = load_bundle(path)
def digest(o):
    return hashlib.sha256(o.sequence.tobytes() + o.pooled.tobytes()).hexdigest()
bundle = hashlib.sha256(open(path, "rb").read()).hexdigest()
print(digest(cmm_forward(inp.xt, inp.xv, w, cfg)), digest(cmm_forward(inp.xt, inp.xv, w2, cfg2)), bundle)
"""


def test_08_determinism():
    same = True
    for backend in ("diagonal_lti", "selective_scan"):
        runs = [subprocess.run([sys.executable, "-c", _DETERMINISM, backend], capture_output=True,
                               text=True, check=True).stdout.split() for _ in range(2)]
        same &= runs[0] == runs[1] and runs[0][0] == runs[0][1]
    report(8, "determinism across processes", same, f"direct, reloaded and bundle digests identical={same}")


def test_09_pooled_consistency():
    worst, count = 0.0, 0
    for i, cfg in enumerate(pipeline_configs()):
        inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, i)
        out = cmm_forward(inp.xt, inp.xv, generate_weights(cfg, i), cfg)
        worst, count = max(worst, max_abs(out.pooled, out.sequence.mean(axis=0))), count + 1
    for i, cfg in enumerate(baseline_configs()):
        inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, i)
        for name, fwd in (("prepend", prepend_forward), ("cross_attend", cross_attention_forward)):
            out = fwd(inp.xt, inp.xv, generate_baseline_weights(name, cfg, i), cfg.H)
            worst, count = max(worst, max_abs(out.pooled, out.sequence.mean(axis=0))), count + 1
    report(9, "pooled consistency", worst <= 1e-10, f"max-abs {worst:.1e} over {count} fixtures")


def test_10_ablation_matrix():
    proc = subprocess.run([sys.executable, "-m", "cmm", "verify"], capture_output=True, text=True)
    lines = [l for l in proc.stdout.splitlines() if "ablation" in l]
    passed = [l for l in lines if l.startswith("PASS")]
    ok = proc.returncode == 0 and len(lines) == 12 and len(passed) == 12
    report(10, "ablation matrix under verify", ok,
           f"exit {proc.returncode}, {len(passed)}/{len(lines)} ablation cells pass (2 backends x 5 k + 2 baselines)")
