"""
Bias ladders: adaptive tolerance against predictor-corrector substeps
=====================================================================

Each knob point prices the call over independent trials and reports the
mean deviation from the reference price.  The adaptive scheme is driven by
its tolerance, the predictor-corrector baseline by its substep count.
Trials are kept small here so the demo finishes in about a minute.
"""

from adaptheston.bench import (SUBSTEP_LADDER, TOLERANCE_LADDER, ExperimentSpec,
                               bias_nonincreasing, run_bias_experiment, summarize_bias)

ladders = [("adapt", "tolerance", TOLERANCE_LADDER),
           ("predictor_corrector", "substeps", SUBSTEP_LADDER)]

for scheme, knob, values in ladders:
    summaries = []
    for v in values:
        spec = ExperimentSpec(scheme, n_paths=2000, n_trials=10, seed=7, **{knob: v})
        summaries.append(summarize_bias(run_bias_experiment(spec))[0])
    print(scheme)
    for s in summaries:
        print(f"  {knob} {s.knob:<8g} bias {s.bias:+.4f} +/- {s.stderr:.4f}")
    # a step counts as monotone unless the bias grows significantly
    flags = [ok for *_, ok in bias_nonincreasing(summaries)]
    print(f"  non-increasing: {all(flags)}")
