"""Number-construction RL workbench: environment, instruction generation,
curriculum schedules, a from-scratch PPO trainer, and an experiment CLI."""

__version__ = "0.1.0"
