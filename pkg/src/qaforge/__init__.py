"""qaforge: expand a seed QA corpus into a large curated training corpus."""

__version__ = "0.1.0"
