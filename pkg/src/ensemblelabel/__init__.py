"""Multi-agent ensemble annotation of free-text clinical reports.

The engine dispatches a shared prompt to N independent agent backends,
aggregates their categorical verdicts under a highest-vote-with-threshold
rule, and routes low-consensus or uncertain cases to a human review queue.
"""

__version__ = "0.1.0"
