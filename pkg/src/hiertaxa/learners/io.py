"""Model container: one ``.npz`` archive holding the arrays plus a JSON header.

Header (stored under ``__meta__`` as UTF-8 JSON)::

    {"format": "hiertaxa-model", "version": 1, "kind": "svm" | "softmax" | "constant",
     "classes": [...], "hyper": {...}, "n_features": int, "train_digest": str,
     "preprocessor": {"fit_digest": str} | null, "converged": bool}

Arrays: model parameters under their own names (see ``TrainedModel.arrays``)
and the preprocessor under ``pre_mean``, ``pre_scale``, ``pre_rotation``,
``pre_explained``.
"""
from __future__ import annotations

import io
import json
import os
import zipfile

import numpy as np

from ..errors import ValidationError
from .base import ConstantModel
from .preprocess import Preprocessor
from .softmax import SoftmaxModel
from .svm import SvmModel

FORMAT = "hiertaxa-model"
VERSION = 1


def model_to_bytes(model) -> bytes:
    meta = {
        "format": FORMAT, "version": VERSION, "kind": model.kind,
        "classes": list(model.classes), "hyper": model.hyper,
        "n_features": model.n_features, "train_digest": model.train_digest,
        "preprocessor": None,
        "converged": bool(getattr(model, "converged", True)),
    }
    arrays = dict(model.arrays())
    pre = model.preprocessor
    if pre is not None:
        meta["preprocessor"] = {"fit_digest": pre.fit_digest}
        arrays.update(pre_mean=pre.mean, pre_scale=pre.scale,
                      pre_rotation=pre.rotation, pre_explained=pre.explained)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    # written by hand rather than np.savez so entry timestamps are fixed and
    # identical models give identical bytes
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            npy = io.BytesIO()
            np.lib.format.write_array(npy, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, npy.getvalue())
    return buf.getvalue()


def model_from_bytes(data: bytes):
    with np.load(io.BytesIO(data), allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    if meta.get("format") != FORMAT or meta.get("version") != VERSION:
        raise ValidationError(f"unsupported model container {meta.get('format')} v{meta.get('version')}")
    pre = None
    if meta["preprocessor"] is not None:
        pre = Preprocessor(arrays.pop("pre_mean"), arrays.pop("pre_scale"), arrays.pop("pre_rotation"),
                           arrays.pop("pre_explained"), meta["preprocessor"]["fit_digest"])
    common = dict(classes=meta["classes"], hyper=meta["hyper"], n_features=meta["n_features"],
                  preprocessor=pre, train_digest=meta["train_digest"])
    kind = meta["kind"]
    if kind == "svm":
        return SvmModel(support=arrays["support"], pairs=arrays["pairs"], offsets=arrays["offsets"],
                        sv_index=arrays["sv_index"], coef=arrays["coef"], rho=arrays["rho"],
                        converged=meta["converged"], **common)
    if kind == "softmax":
        return SoftmaxModel(weights=arrays["weights"], **common)
    if kind == "constant":
        return ConstantModel(**common)
    raise ValidationError(f"unknown model kind {kind!r}")


def save_model(model, path):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(model_to_bytes(model))
    os.replace(tmp, path)


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
