"""Exact-rational cube rearrangement schedules."""
