# # Benchmark sweep
#
# Every method on bilinear and post-nonlinear scenes over a few seeds. The
# full 50 x 50 x 5 seed sweep takes about a minute; this demo uses a
# smaller grid.

from kunmix import ALL_METHODS, benchmark, summarize

rows = benchmark(methods=ALL_METHODS, models=("bilinear", "pnmm"), seeds=range(2), w=30, h=30)
table = summarize(rows)

# %%
print(f"{'method':8s} {'model':9s} {'RMSE':>8s} {'std':>8s} {'ms/px':>8s}")
for (method, model), (mean, std, ms) in table.items():
    print(f"{method:8s} {model:9s} {mean:8.4f} {std:8.4f} {ms:8.3f}")
