"""Self-contained invariant checks, run by ``cmm-bench verify``.

Each check returns a :class:`CheckResult`; nothing here depends on pytest.
"""

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .baselines import cross_attention_forward, prepend_forward
from .block import cmm_forward, cmm_trace
from .config import CmmConfig
from .correlation import aggregate_context, apply_topk, correlate, project_shared, split_heads
from .film import film_in, film_out
from .fixtures import (
    generate_baseline_weights,
    generate_inputs,
    generate_weights,
    load_bundle,
    save_bundle,
)
from .numeric import layer_norm
from .ssm import SsmBackend, selective_scan, ssm_conv, ssm_scan_recurrent

BACKENDS = (SsmBackend.DIAGONAL_LTI, SsmBackend.SELECTIVE_SCAN)
K_VALUES = (1, 2, 3, 4, 5)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def _rng(seed):
    return np.random.default_rng(seed)


def score_invariants(scores, k, tol=1e-9):
    """Row sums of scores and renormalised scores, and the k-sparsity of the mask."""
    s, m, r = scores.scores, scores.mask, scores.renormalized
    problems = []
    if np.max(np.abs(s.sum(-1) - 1)) > tol:
        problems.append("score rows do not sum to 1")
    if not np.all((s >= 0) & (s <= 1)):
        problems.append("scores leave [0, 1]")
    if np.any(m.sum(-1) != k):
        problems.append(f"mask rows do not hold exactly k={k} entries")
    if np.max(np.abs(r.sum(-1) - 1)) > tol:
        problems.append("renormalized rows do not sum to 1")
    if np.any(r[~m] != 0) or np.any((r > 0).sum(-1) != k):
        problems.append("renormalized rows are not supported exactly on the mask")
    return problems


def check_softmax_simplex(n_configs=100, seed=0):
    g = _rng(seed)
    worst = 0.0
    for _ in range(n_configs):
        H, T, G = int(g.integers(1, 5)), int(g.integers(1, 33)), int(g.integers(1, 9))
        dh = int(g.integers(1, 9))
        k = int(g.integers(1, G + 1))
        xt = g.standard_normal((H, T, dh))
        xv = g.standard_normal((H, G, dh))
        sc = apply_topk(correlate(xt, xv), k)
        problems = score_invariants(sc, k)
        if problems:
            return CheckResult("softmax simplex", False, f"H={H} T={T} G={G} k={k}: {problems[0]}")
        worst = max(worst, np.max(np.abs(sc.scores.sum(-1) - 1)), np.max(np.abs(sc.renormalized.sum(-1) - 1)))
    return CheckResult("softmax simplex", True, f"{n_configs} configs, worst row-sum error {worst:.1e}")


def check_gate_off(n_fixtures=20, seed=0):
    g = _rng(seed)
    worst = 0.0
    for _ in range(n_fixtures):
        T, D = int(g.integers(1, 40)), int(g.integers(2, 40))
        x = g.standard_normal((T, D))
        gam, bet = g.standard_normal((T, D)), g.standard_normal((T, D))
        lg, lb = g.standard_normal(D), g.standard_normal(D)
        worst = max(worst, np.max(np.abs(film_in(x, gam, bet, 0.0, lg, lb) - layer_norm(x, lg, lb))))
        worst = max(worst, np.max(np.abs(film_out(x, gam, bet, 0.0) - x)))
    return CheckResult("gate-off identity", worst <= 1e-15, f"max-abs {worst:.1e}")


def check_topk_degeneracies(seed=0):
    cfg = CmmConfig(T=12, G=5, D_t=16, H=4, k=5)
    w = generate_weights(cfg, seed)
    inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, seed)
    xt_p, xv_p = project_shared(inp.xt, inp.xv, w.correlation)
    raw = correlate(split_heads(xt_p, cfg.H), split_heads(xv_p, cfg.H))
    full = apply_topk(raw, cfg.G)
    unmasked = raw.scores.mean(axis=0) @ xv_p
    err = np.max(np.abs(aggregate_context(full, xv_p) - unmasked))
    if err > 1e-12:
        return CheckResult("top-k degeneracies", False, f"k=G differs from unmasked by {err:.1e}")
    one = apply_topk(raw, 1).renormalized
    if not np.all((np.sum(one == 1.0, axis=-1) == 1) & (np.sum(one == 0.0, axis=-1) == cfg.G - 1)):
        return CheckResult("top-k degeneracies", False, "k=1 rows are not one-hot")
    for k in K_VALUES:
        out = cmm_forward(inp.xt, inp.xv, w, cfg.replace(k=k))
        if not np.all(np.isfinite(out.sequence)):
            return CheckResult("top-k degeneracies", False, f"k={k} produced non-finite output")
    return CheckResult("top-k degeneracies", True, f"k=G error {err:.1e}; k=1 one-hot; k=1..5 ran")


def check_mode_equivalence(Ts=(1, 7, 64, 257, 2048), seed=0, D=32, N=16):
    cfg = CmmConfig(D_t=D, state_size=N)
    p = generate_weights(cfg, seed).ssm
    worst = 0.0
    for T in Ts:
        x = generate_inputs(T, 1, D, 1, seed + T).xt
        worst = max(worst, np.max(np.abs(ssm_scan_recurrent(x, p) - ssm_conv(x, p))))
    return CheckResult("ssm mode equivalence", worst <= 1e-6, f"T={list(Ts)} max-abs {worst:.1e}")


def check_causality_linearity(seed=0, T=48, D=16):
    lti = generate_weights(CmmConfig(D_t=D, backend="diagonal_lti"), seed).ssm
    sel = generate_weights(CmmConfig(D_t=D, backend="selective_scan"), seed).ssm
    g = _rng(seed)
    x = g.standard_normal((T, D))
    cut = T // 3
    xz = x.copy()
    xz[cut:] = 0.0
    for name, fn in (("diagonal", lambda v: ssm_scan_recurrent(v, lti)),
                     ("diagonal-conv", lambda v: ssm_conv(v, lti)),
                     ("selective", lambda v: selective_scan(v, sel))):
        if not np.array_equal(fn(x)[:cut], fn(xz)[:cut]):
            return CheckResult("causality & linearity", False, f"{name} leaks future input")
    x2 = g.standard_normal((T, D))
    a, b = 1.7, -0.6
    lin = np.max(np.abs(ssm_scan_recurrent(a * x + b * x2, lti)
                        - (a * ssm_scan_recurrent(x, lti) + b * ssm_scan_recurrent(x2, lti))))
    return CheckResult("causality & linearity", lin <= 1e-8, f"superposition max-abs {lin:.1e}")


def check_bundle_roundtrip(seed=0):
    cfg = CmmConfig(T=8, D_t=16, H=2)
    w = generate_weights(cfg, seed)
    inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, seed)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "w.cmmwb")
        save_bundle(w, cfg, path, seed)
        w2, cfg2 = load_bundle(path)
    a = cmm_forward(inp.xt, inp.xv, w, cfg)
    b = cmm_forward(inp.xt, inp.xv, w2, cfg2)
    same = cfg2 == cfg and np.array_equal(a.sequence, b.sequence) and np.array_equal(a.pooled, b.pooled)
    return CheckResult("bundle roundtrip determinism", same)


def _output_problems(out, T, D):
    problems = []
    if out.sequence.shape != (T, D):
        problems.append(f"sequence shape {out.sequence.shape}")
    if not np.all(np.isfinite(out.sequence)):
        problems.append("non-finite output")
    if np.max(np.abs(out.pooled - out.sequence.mean(axis=0))) > 1e-10:
        problems.append("pooled != mean of sequence")
    return problems


def ablation_matrix(seed=0, T=24, D=32, H=4, G=5):
    """Every backend x k for the fusion block, plus both baselines."""
    results = []
    inp = generate_inputs(T, G, D, D, seed)
    for backend in BACKENDS:
        base = CmmConfig(T=T, G=G, D_t=D, H=H, backend=backend)
        w = generate_weights(base, seed)
        for k in K_VALUES:
            cfg = base.replace(k=k)
            out = cmm_forward(inp.xt, inp.xv, w, cfg)
            problems = _output_problems(out, T, D) + score_invariants(out.scores, k)
            tr = cmm_trace(inp.xt, inp.xv, w, cfg)
            if not np.allclose(tr.sequence, out.sequence, rtol=0, atol=0):
                problems.append("trace disagrees with forward")
            results.append(CheckResult(f"ablation cmm/{backend.value}/k={k}", not problems, "; ".join(problems)))
    cfg = CmmConfig(T=T, G=G, D_t=D, H=H)
    for name, fwd in (("prepend", prepend_forward), ("cross_attend", cross_attention_forward)):
        w = generate_baseline_weights(name, cfg, seed)
        out = fwd(inp.xt, inp.xv, w, H)
        problems = _output_problems(out, T, D)
        results.append(CheckResult(f"ablation {name}", not problems, "; ".join(problems)))
    return results


def run_verify(seed=0):
    results = [
        check_softmax_simplex(seed=seed),
        check_gate_off(seed=seed),
        check_topk_degeneracies(seed=seed),
        check_mode_equivalence(seed=seed),
        check_causality_linearity(seed=seed),
        check_bundle_roundtrip(seed=seed),
    ]
    results.extend(ablation_matrix(seed=seed))
    return results
