"""Cooperative PNC + superposition-modulation relay link simulator."""
