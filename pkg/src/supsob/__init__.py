"""Numerical toolkit for supercritical Sobolev inequalities on radial spaces of the unit ball."""
