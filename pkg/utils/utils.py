from typing import Any
from pathlib import Path

import yaml
from dotenv import dotenv_values


def load_yaml(path: str | Path) -> dict[str, Any]:
    file_path = Path(path)
    if not file_path.is_file():
        raise FileNotFoundError(f"The YAML file at {path} was not found.")

    with open(file_path, "r", encoding="utf-8") as file:
        data = yaml.safe_load(file)

    return data or {}


def dump_yaml(data: dict[str, Any], path: str | Path) -> Path:
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as file:
        yaml.safe_dump(data, file, sort_keys=True)
    return file_path


def load_key_value_file(path: str | Path) -> dict[str, str]:
    """
    Read a plain ``key = value`` run file.

    Blank lines and ``#`` comments are skipped. Keys are lower-cased and dashes
    are folded to underscores so that ``keep-lcc = true`` and ``keep_lcc = true``
    mean the same thing.
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise FileNotFoundError(f"The config file at {path} was not found.")

    values = dotenv_values(file_path)
    return {
        key.strip().lower().replace("-", "_"): value
        for key, value in values.items()
        if value is not None
    }


def ensure_dir(path: str | Path) -> Path:
    dir_path = Path(path)
    dir_path.mkdir(parents=True, exist_ok=True)
    return dir_path
