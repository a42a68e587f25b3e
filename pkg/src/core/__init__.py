"""
Core module initialization - finite-space measures, inequalities, witnesses
and the Hölder building blocks of the white-noise experiments
"""
