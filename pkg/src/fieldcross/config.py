"""Plain-text ``key = value`` configuration files.

Example::

    # model
    alpha = 1
    dim = 2
    r = multiindex
    region = 0,0,1,1; 1,0,2,0.5

    # any command-line flag, with dashes or underscores
    reps = 20000
    seed = 11

``region`` lists rectangles separated by ``;``, each as the lower corner
followed by the upper corner.  ``r`` names a built-in preset (``constant``,
``scan-window``, ``multiindex``, ``empirical``, ``additive`` with
``betas = 1, 2``) or a plugin ``module:function`` implementing ``r(t, v)``.
``L`` is ``constant`` or a ``module:function`` plugin.  Lines starting with
``#`` or ``;`` are comments.
"""

from __future__ import annotations

import configparser
import importlib
from pathlib import Path

from .model import LocalCovarianceModel, Region
from .presets import MODEL_PRESETS, model_preset

MODEL_KEYS = ("alpha", "dim", "r", "l", "betas", "region")


def load_config(path: str | Path) -> dict:
    """Read a config file into a ``{key: string}`` dict with normalised keys."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ValueError(f"malformed config file {path}: {exc}") from exc
    return {k.strip().lower().replace("-", "_"): v.strip() for k, v in parser["config"].items()}


def parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def parse_region(text: str) -> Region:
    """``"x0,y0,x1,y1; ..."`` into a :class:`Region`."""
    rects = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        vals = [float(x) for x in chunk.split(",")]
        if len(vals) % 2 or not vals:
            raise ValueError(f"rectangle {chunk.strip()!r} needs an even number of coordinates")
        d = len(vals) // 2
        rects.append((tuple(vals[:d]), tuple(vals[d:])))
    return Region(tuple(rects))


def load_callable(spec: str):
    """Resolve ``module:attribute`` to a callable."""
    if ":" not in spec:
        raise ValueError(f"plugin {spec!r} must look like module:function")
    mod, attr = spec.split(":", 1)
    obj = getattr(importlib.import_module(mod), attr)
    if not callable(obj):
        raise ValueError(f"plugin {spec!r} is not callable")
    return obj


def model_from_config(cfg: dict) -> LocalCovarianceModel:
    dim = int(cfg.get("dim", 1))
    alpha = float(cfg.get("alpha", 1.0))
    r = cfg.get("r", "constant")
    betas = parse_floats(cfg["betas"]) if "betas" in cfg else None
    if r in MODEL_PRESETS:
        model = model_preset(r, dim, alpha, betas)
        if alpha != model.alpha:
            raise ValueError(f"preset {r!r} fixes alpha = {model.alpha}")
    else:
        model = LocalCovarianceModel(alpha=alpha, angular_scaling=load_callable(r), dim=dim, name=r)
    L = cfg.get("l", "constant")
    if L != "constant":
        model = LocalCovarianceModel(model.alpha, model.angular_scaling, model.dim, load_callable(L),
                                     model.additive_betas, model.name)
    return model
