"""SoftPool and comparison pooling operators with gradient checks,
image-fidelity metrics and a CPU latency benchmark."""

__version__ = "0.1.0"
