"""Multi-robot indoor coordination simulator with robot and IoT observation fusion."""

__version__ = "0.1.0"
