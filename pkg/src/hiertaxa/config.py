"""Flat key-value run configuration, seed resolution and run manifests.

A config file is plain ``key = value`` lines (``#`` comments allowed), no
sections.  Recognised keys are listed in ``DEFAULTS``; unknown keys are
rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import ValidationError

SEED_ENV = "HIERTAXA_SEED"

DEFAULTS = {
    "seed": None,
    "scheme": "comparison",
    "n_splits": "10",
    "train_cap": "50",
    "test_cap": "",
    "stratified": "true",
    "test_counts": "",          # CSV file: taxa,count  (or taxa,split0..splitN)
    "topology": "flat",
    "learner": "svm",
    "rule": "vote",
    "ranks": "1,2",
    "grid": "",                 # flat | cascade; empty picks by topology
    "c_grid": "",               # comma-separated values, overrides the preset
    "gamma_grid": "",
    "grid_phase": "",
    "refine_factor": "",
    "tol": "1e-3",
    "variance_kept": "",
    "softmax_lr": "0.5",
    "softmax_epochs": "300",
    "softmax_l2": "1e-3",
    "softmax_l2_grid": "",
    "strict": "false",
    "jobs": "1",
}


def read_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_string("[run]\n" + fh.read(), source=os.fspath(path))
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    values = dict(parser["run"])
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {unknown}")
    return values


class Settings:
    """Config values with typed accessors; command-line flags win over the file."""

    def __init__(self, values: Optional[dict] = None):
        self.values = dict(values or {})

    def raw(self, key):
        v = self.values.get(key)
        if v is None or v == "":
            v = DEFAULTS[key]
        return v

    def get(self, key, flag=None) -> Optional[str]:
        if flag is not None:
            # remembered so the manifest snapshot shows the effective value
            self.values[key] = str(flag)
            return str(flag)
        v = self.raw(key)
        return None if v in (None, "") else v

    def int(self, key, flag=None) -> Optional[int]:
        v = self.get(key, flag)
        try:
            return None if v is None else int(v)
        except ValueError:
            raise ValidationError(f"{key}: expected an integer, got {v!r}") from None

    def float(self, key, flag=None) -> Optional[float]:
        v = self.get(key, flag)
        try:
            return None if v is None else float(v)
        except ValueError:
            raise ValidationError(f"{key}: expected a number, got {v!r}") from None

    def bool(self, key, flag=None) -> bool:
        v = self.get(key, flag)
        if isinstance(flag, bool):
            return flag
        if str(v).lower() in ("1", "true", "yes", "on"):
            return True
        if str(v).lower() in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"{key}: expected a boolean, got {v!r}")

    def floats(self, key) -> Optional[tuple]:
        v = self.get(key)
        if v is None:
            return None
        try:
            return tuple(float(x) for x in v.split(",") if x.strip())
        except ValueError:
            raise ValidationError(f"{key}: expected comma-separated numbers, got {v!r}") from None

    def snapshot(self) -> dict:
        return {k: self.values.get(k, DEFAULTS[k]) for k in sorted(DEFAULTS)}


def resolve_seed(flag: Optional[int], settings: Settings) -> int:
    """``--seed`` flag, then the config file, then $HIERTAXA_SEED, then 0."""
    if flag is not None:
        return int(flag)
    if settings.values.get("seed") not in (None, ""):
        return settings.int("seed")
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"${SEED_ENV}: expected an integer, got {env!r}") from None
    return 0


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible builds
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    taxonomy_hash: str
    dataset_hash: Optional[str] = None
    topology: Optional[str] = None
    learner: Optional[dict] = None
    grid: Optional[dict] = None
    inputs: dict = field(default_factory=dict)     # name -> file digest
    created: str = field(default_factory=_timestamp)

    def content(self) -> dict:
        d = asdict(self)
        d.pop("created")
        return d

    @property
    def hash(self) -> str:
        """Digest of everything except the timestamp, so reruns hash identically."""
        blob = json.dumps(self.content(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hash"] = self.hash
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def write_atomic(path, data):
    """Write text or bytes via a temporary file and rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    kw = {} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": ""}
    with open(tmp, mode, **kw) as fh:
        fh.write(data)
    os.replace(tmp, path)
