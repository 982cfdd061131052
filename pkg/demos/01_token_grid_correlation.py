# Token-to-grid correlation and top-k grid retention
# ==================================================
#
# Each text token scores every visual grid with a multi-head scaled dot
# product, keeps its k best grids, and pools the projected grid features into
# a per-token visual context.  Run with `python demos/01_token_grid_correlation.py`.

import numpy as np

from cmm import (
    CmmConfig,
    aggregate_context,
    apply_topk,
    correlate,
    generate_inputs,
    generate_weights,
    project_shared,
    split_heads,
)

np.set_printoptions(precision=3, suppress=True)

cfg = CmmConfig(T=6, G=5, D_t=32, H=4, k=2)
w = generate_weights(cfg, seed=0)
inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, seed=0)

# Both modalities land in the same latent width, then split into heads.
xt_p, xv_p = project_shared(inp.xt, inp.xv, w.correlation)
xtH, xvH = split_heads(xt_p, cfg.H), split_heads(xv_p, cfg.H)
print("head-split shapes:", xtH.shape, xvH.shape)

# Softmax over the grid axis: every (head, token) row is a distribution.
scores = correlate(xtH, xvH)
print("head 0 scores:\n", scores.scores[0])

# Keep the two strongest grids per row and renormalise the survivors.
scores = apply_topk(scores, cfg.k)
print("head 0 after top-2:\n", scores.renormalized[0])

# Average heads, then weight the projected grids.  Each context row stays
# inside the per-channel range of the grid rows.
c = aggregate_context(scores, xv_p)
lo, hi = xv_p.min(axis=0), xv_p.max(axis=0)
print("context shape:", c.shape, "inside grid hull:", bool(np.all((c >= lo - 1e-12) & (c <= hi + 1e-12))))

# With k = G the masking step is a no-op.
full = apply_topk(correlate(xtH, xvH), cfg.G)
print("k=G no-op error:", np.abs(full.renormalized - full.scores).max())
