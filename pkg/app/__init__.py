import os
import logging


# LOG_LEVEL selects verbosity; DEBUG adds per-bag losses and fold assignments.
log_level = getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO)

logging.basicConfig(
    level=log_level,
    format="%(asctime)s [%(levelname)s] %(message)s"
)

# Pillow reports every PNG chunk at DEBUG.
logging.getLogger("PIL").setLevel(max(log_level, logging.INFO))
