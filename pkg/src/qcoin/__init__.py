"""Simulated quantum coins backed by the 4-bit hidden matching problem.

Modules: ``qsim`` (two-qubit state vectors), ``hmp`` (encoding, circuits and
queries), ``coin`` (coins, ledger, files), ``protocol`` (the verification
state machines), ``transport`` (wire codec, channels, bank service),
``adversary`` (forgery strategies and Monte Carlo) and ``cli``.
"""

__version__ = "0.1.0"
