"""Save and restore trained networks in the manifest + blob container."""
from __future__ import annotations

from pathlib import Path

from .container import load_arrays, save_arrays
from .models import MultiModel, model_from_description


def _stores(model) -> dict:
    if isinstance(model, MultiModel):
        return {f"{task}/": m.store for task, m in model.members.items()}
    return {"": model.store}


def save_checkpoint(model, path, meta: dict | None = None) -> Path:
    arrays = {}
    for prefix, store in _stores(model).items():
        for name, arr in store.state().items():
            arrays[prefix + name] = arr
    desc = {"model": model.describe(), **(meta or {})}
    return save_arrays(path, arrays, desc)


def load_checkpoint(path):
    """Return ``(model, meta)`` with parameters and batch-norm statistics restored bit-exactly."""
    arrays, meta = load_arrays(path)
    model = model_from_description(meta["model"])
    for prefix, store in _stores(model).items():
        state = {name[len(prefix):]: arr for name, arr in arrays.items() if name.startswith(prefix)}
        store.load_state(state)
    return model, meta
