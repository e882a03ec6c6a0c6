"""One-time programs on a simulated TPM/TEE: TXT-only and GC-based variants."""

__version__ = "0.1.0"
