"""Plug-in hyper-g variances versus a full MCMC fit, on a handful of models.

The quick approach estimates the coefficient variance from differences of
separately fitted coefficients.  The sampler instead puts a half-Cauchy
prior on its square root and draws everything jointly.  This script runs a
small random subset of the model family with shortened chains; the command
line ``twoset compare`` runs all of it.
"""
# %%
from pathlib import Path

import numpy as np
from scipy import stats

from twoset.dataio import load_csv, partition_diabetes, standardize
from twoset.search import compare_approaches, comparison_models, summarize_differences

ROOT = Path(__file__).resolve().parent.parent
data = standardize(partition_diabetes(load_csv(ROOT / "fixtures" / "diabetes.csv")))
print(f"{len(comparison_models(data.n_predictors, 7))} models share more than 7 predictors")

records = compare_approaches(data, iters=4000, burnin=1000, seed=0, subset_size=8)

# %%
for r in records:
    print(f"common {','.join(f'x{c + 1}' for c in r.pair.common):<26} "
          f"eta^2 approx {r.approx[2]:.5f}  mcmc {r.mcmc[2]:.5f}")

# %%
print(summarize_differences(records)["sigma_eta_sq"])
rho = stats.spearmanr([r.pe_approx for r in records], [r.deviance for r in records]).statistic
print(f"rank correlation between plug-in error and posterior deviance: {rho:+.2f}")
