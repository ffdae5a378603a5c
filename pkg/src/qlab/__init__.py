"""Q-learning with epsilon-softmax behaviour policies as Markovian stochastic approximation.

Submodules: :mod:`qlab.mdp` (instances), :mod:`qlab.policies`,
:mod:`qlab.oracles` (exact closed-form quantities), :mod:`qlab.engine`
(the SA loop), :mod:`qlab.experiments` (ensembles and export),
:mod:`qlab.verify` (property suites) and :mod:`qlab.cli`.
"""

__version__ = "0.1.0"
