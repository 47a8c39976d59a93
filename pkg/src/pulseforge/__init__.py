"""Robust population inversion with shaped pulses."""
