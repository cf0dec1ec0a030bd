"""Two-stage command-line attack detection pipeline.

Stage 1 filters event streams with intentionally loose rules tuned for
recall; Stage 2 scores the survivors with a lexical classifier whose
threshold is calibrated to a daily ticket budget. Analyst verdicts feed a
time-decayed retraining loop, and a generator-critic synthetic data
pipeline bootstraps the first model.
"""

__version__ = "0.1.0"
