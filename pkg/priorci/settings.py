import os
from dotenv import load_dotenv

load_dotenv()

DATABASE_URL = os.getenv("PRIORCI_DATABASE_URL", "sqlite:///priorci.sqlite")


def max_workers() -> int:
    """Worker-count cap for sweeps and curve evaluation (PRIORCI_MAX_WORKERS)."""
    raw = os.getenv("PRIORCI_MAX_WORKERS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
