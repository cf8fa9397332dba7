"""Total-recall document review: continuous active learning to a stopping
point, then sequential Bayesian search over entity questions to surface the
last few relevant documents."""

__version__ = "0.1.0"
