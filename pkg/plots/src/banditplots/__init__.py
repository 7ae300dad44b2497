"""Figure regeneration from the bandit harness's CSV exports.

Batch scripts only: every figure is a pure function of its input CSV files
(no network, no global state, timestamps disabled), so re-running a script
reproduces the image byte for byte.
"""

__version__ = "0.1.0"
