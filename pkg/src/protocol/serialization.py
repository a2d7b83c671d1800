from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Union

import yaml

from src.protocol.codes import Alphabets, Code, GeneralCode, Schedule, StaggeredCode
from src.protocol.tables import table_from_dict
from src.utils.errors import ValidationError

FORMAT_VERSION = 1


def code_to_dict(code: Code) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "version": FORMAT_VERSION,
        "n": int(code.n),
        "alphabets": asdict(code.alphabets),
        "decoder1": code.decoder1.to_dict(),
        "decoder2": code.decoder2.to_dict(),
    }
    if isinstance(code, StaggeredCode):
        out["kind"] = "staggered"
        out["round_lengths"] = list(code.round_lengths)
        out["round_encoders"] = [t.to_dict() for t in code.round_encoders]
        return out

    out["kind"] = "general"
    out["schedule"] = {"c1": list(code.schedule.c1), "c2": list(code.schedule.c2)}
    out["encoders1"] = [None if t is None else t.to_dict() for t in code.encoders1]
    out["encoders2"] = [None if t is None else t.to_dict() for t in code.encoders2]
    return out


def code_from_dict(data: Dict[str, Any]) -> Code:
    version = data.get("version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported code format version {version}")
    try:
        alphabets = Alphabets(**{k: int(v) for k, v in data["alphabets"].items()})
        n = int(data["n"])
        dec1 = table_from_dict(data["decoder1"])
        dec2 = table_from_dict(data["decoder2"])
        kind = data["kind"]
    except KeyError as e:
        raise ValidationError(f"code document is missing key {e.args[0]!r}") from e

    if kind == "staggered":
        encoders = tuple(table_from_dict(t) for t in data["round_encoders"])
        return StaggeredCode(n, tuple(data["round_lengths"]), alphabets, encoders, dec1, dec2)
    if kind == "general":
        schedule = Schedule(tuple(data["schedule"]["c1"]), tuple(data["schedule"]["c2"]))
        enc1 = tuple(None if t is None else table_from_dict(t) for t in data["encoders1"])
        enc2 = tuple(None if t is None else table_from_dict(t) for t in data["encoders2"])
        return GeneralCode(n, schedule, alphabets, enc1, enc2, dec1, dec2)
    raise ValidationError(f"unknown code kind {kind!r}")


def save_code(code: Code, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(code_to_dict(code), f, sort_keys=False, default_flow_style=None)
    return path


def load_code(path: Union[str, Path]) -> Code:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Code file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ValidationError(f"{path} does not hold a code document")
    return code_from_dict(data)
