# Linear versus quadratic scaling in sequence length
# ==================================================
#
# Times the fusion block and the prepend baseline over a range of T and fits
# the log-log slope of median latency.  A smaller sweep than the acceptance
# test so it finishes in a few seconds; the command-line equivalent is
#
#     cmm-bench sweep --connector cmm,prepend,cross_attend --T 256,512,1024,2048,4096,8192

from cmm.bench import SweepSpec, fit_slope, group_by_connector, run_sweep

spec = SweepSpec(
    connectors=("cmm", "prepend", "cross_attend"),
    T_values=(128, 256, 512, 1024, 2048),
    D_t=64,
    repeats=5,
    warmup=2,
)
records = run_sweep(spec)
for r in records:
    print(f"{r.connector:12s} T={r.T:5d}  median={r.wall_ns_median / 1e6:8.2f} ms  "
          f"tokens/s={r.tokens_per_sec:10.0f}")

for connector, rs in group_by_connector(records).items():
    rep = fit_slope(rs)
    print(f"{connector:12s} slope={rep.slope:.2f}  R2={rep.r_squared:.3f}  band={rep.band}")
