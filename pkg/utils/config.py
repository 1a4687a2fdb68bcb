"""
Environment-backed settings for the pipesched tools
"""

import os
from typing import Any, Optional

from dotenv import load_dotenv

DEFAULTS = {
    "PIPESCHED_SEED": "0",
    "PIPESCHED_LOG_LEVEL": "INFO",
    "PIPESCHED_LOG_FILE": "",
    "PIPESCHED_INSTANCES": "300",
    "PIPESCHED_MAX_ROUNDS": "8",
}


class Config:
    def __init__(self, env_path: Optional[str] = None):
        # .env values never override variables already set in the shell
        load_dotenv(env_path, override=False)

    def get(self, key: str, default: Any = None) -> Any:
        """Raw string value, falling back to the built-in defaults"""
        value = os.getenv(key)
        if value is None or value == "":
            value = DEFAULTS.get(key, default)
        return value if value is not None else default

    def get_int(self, key: str, default: int = 0) -> int:
        value = self.get(key, default)
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ValueError(f"{key} must be an integer, got {value!r}")

    def get_float(self, key: str, default: float = 0.0) -> float:
        value = self.get(key, default)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ValueError(f"{key} must be a number, got {value!r}")
