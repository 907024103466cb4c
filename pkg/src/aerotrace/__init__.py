"""aerotrace: telemetry node simulator and analytics for air-quality/traffic monitoring."""

__version__ = "0.1.0"
