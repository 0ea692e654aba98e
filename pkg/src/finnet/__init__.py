"""finnet: a self-hostable, taxonomy-aware catalog for localized marine
imagery, with Darwin Core style CSV ingestion, a verification workflow,
dataset statistics, and detector evaluation."""

__version__ = "0.1.0"
