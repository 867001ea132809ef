"""Sliced-Wasserstein variational optimization toolkit.

Layers, bottom to top:

* ``measures`` / ``ot``  - discrete measures, slice projections, exact 1-D
  Wasserstein distances, sliced distances (SWD / GSWD / adaptive GSWD).
* ``nn``                 - minimal MLPs with explicit forward/backward.
* ``cmdp`` / ``envs``    - tabular constrained MDPs and physics benchmarks
  (constrained cartpole, acrobot).
* ``dist_rl``            - quantile distributional RL: W1-optimal quantile
  projection, distributional Bellman operators, TD and gradient rules.
* ``safe_rl``            - primal constrained policy optimization.
* ``inference``          - control-as-inference: reward operator families,
  optimality likelihoods, variational slicing step, interpretation.
* ``harness``            - config, training loop, learning curves, rate fits.
* ``cli``                - ``wavopt`` command line (train / verify / rate /
  interpret / oracle).
"""

__version__ = "0.1.0"
