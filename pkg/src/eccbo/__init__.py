"""Model-free real-time optimization with embedded constraint control.

Feedback PI loops hold plant constraints at setpoints; a contextual
Bayesian-optimization layer searches over those setpoints (plus any free
degrees of freedom), so every decision it emits is feasible by construction.
Ships with a Williams-Otto reactor benchmark and a closed-loop harness.
"""

__version__ = "0.1.0"
