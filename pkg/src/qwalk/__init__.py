"""Time-multiplexed photonic coined quantum walk: simulation, emulation and calibration."""

__version__ = "0.1.0"
