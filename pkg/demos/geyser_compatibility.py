"""How well does a model fitted on one batch of geyser eruptions predict the other?

Run from the repository root:  python3 demos/geyser_compatibility.py
"""
# %%
from pathlib import Path

from twoset.dataio import build_geyser, load_csv, standardize
from twoset.search import compat_table

ROOT = Path(__file__).resolve().parent.parent
data = standardize(build_geyser(load_csv(ROOT / "fixtures" / "geyser.csv")))
print(f"dataset sizes: n0={data.n_j(0)}, n1={data.n_j(1)}; predictors {data.columns}")

# %% [markdown]
# Each candidate predictor set is fitted separately in both datasets.  The
# hyper-g posterior means give the two noise variances, and the spread of the
# coefficient estimates between datasets gives the coefficient variance.  The
# error splits into noise, coefficient drift and estimation parts.

# %%
sets = [(), ("x1",), ("x2",), ("x1", "x2")]
print(f"{'set':<18}{'dir':<7}{'noise':>10}{'drift':>10}{'estim.':>10}{'total':>10}")
for row in compat_table(data, sets):
    b = row.breakdown
    name = ",".join(row.predictors) or "(none)"
    print(f"{name:<18}{b.label:<7}{b.term1:>10.5f}{b.term2:>10.5f}{b.term3:>10.6f}{b.total:>10.5f}")

# %% [markdown]
# Predicting the first batch from the second is easier in every row: the
# noise variance of the first batch is the smaller of the two.  The drift
# column is the same in both directions because the coefficient variance is
# shared.
