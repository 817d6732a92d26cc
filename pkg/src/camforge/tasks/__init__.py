"""Perception tasks whose scores drive the camera search."""
