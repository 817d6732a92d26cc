"""Task-specific camera design: simulate candidate cameras in procedural scenes,
score them on perception tasks and evolve the hardware parameters."""

__version__ = "0.1.0"
