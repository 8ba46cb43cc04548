"""pollscope: a user-modeling pipeline for polarized political events.

The pipeline ingests archived social-media posts and profiles, filters
outlier and bot accounts, extracts demographics, predicts per-user
political polarity with a two-stage embedding classifier, and aggregates
reports comparable to official poll results.
"""

__version__ = "0.1.0"
