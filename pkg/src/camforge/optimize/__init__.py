"""Genetic search over camera parameters, interleaved with task-model training."""
