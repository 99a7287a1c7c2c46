"""Self-hostable crowdsourcing platform for continuous sign-language video corpora.

Contributors record prompted videos, validators check videos and metadata,
annotators produce sentence- and gloss-level timestamped tracks, and
administrators export validated dataset snapshots with corpus statistics.
"""

__version__ = "0.1.0"
