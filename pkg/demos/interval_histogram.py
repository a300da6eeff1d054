"""
How many segments does the refinement need?
===========================================

Runs are grouped by the terminal variance of the step.  Larger variance
means a wider bridge, so more segments are needed before the summed
conditional variance fits the tolerance, and less of the budget is left
unused at the end.
"""

import numpy as np

from adaptheston.bench import ExperimentSpec, run_interval_histogram

res = run_interval_histogram(ExperimentSpec("adapt", tolerance=1e-6, n_paths=300, seed=3))

print(f"{'band upper edge':>16} {'mean segments':>14} {'median unused':>14}")
for edge, leaves, unused in zip(res.bands, res.leaf_counts, res.residuals):
    print(f"{edge:16g} {leaves.mean():14.2f} {np.median(unused):14.2e}")
