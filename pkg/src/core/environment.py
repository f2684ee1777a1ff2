# src/core/environment.py

import os
from typing import Optional

from dotenv import load_dotenv

from ..config import DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV_VAR

current_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(os.path.dirname(current_dir))  # Go up two levels from src/core/


def load_environment(verbose: bool = False) -> Optional[str]:
    """
    Load .env.local from the project root, falling back to the working directory.

    Returns the path that was loaded, or None. Variables already set in the
    process environment win over the file.
    """
    candidates = [
        os.path.join(project_root, '.env.local'),
        os.path.join(os.getcwd(), '.env.local'),
    ]
    for env_path in candidates:
        if os.path.exists(env_path):
            load_dotenv(dotenv_path=env_path, override=False)
            if verbose:
                print(f"Loaded environment variables from: {env_path}", flush=True)
            return env_path
    return None


def resolve_output_dir(flag_value: Optional[str] = None, file_value: Optional[str] = None) -> str:
    """--output-dir flag > experiment file > SPRPT_OUTPUT_DIR > results/."""
    return flag_value or file_value or os.getenv(OUTPUT_DIR_ENV_VAR) or DEFAULT_OUTPUT_DIR
