"""Reference runner for the kernel execution wire protocol.

Loads candidate and reference kernel source into fresh namespaces, runs
seeded unit tests with tolerance comparison, and times both sides with
warmup+median once every test passes. Speaks the stdin/stdout JSON
protocol documented in the repo-root PROTOCOL.md.
"""

__version__ = "0.1.0"

from .session import run_session

__all__ = ["__version__", "run_session"]
