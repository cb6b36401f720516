"""Pipeline goal-oriented dialog training framework: stochastic set-valued
dialog policy, NLU data augmentation, understanding-bonus rewards, an
agenda-based user simulator, and system-wise benchmarking."""

__version__ = "0.1.0"
