"""Meta priming of lightweight fine-tuning.

Thin wrapper over the C++ core. Configs and reports are plain dicts here and
JSON text underneath.
"""

import json
from os import PathLike

from . import _metaprime
from ._metaprime import Error, extract_spans, load_checkpoint

__all__ = [
    "Error",
    "Session",
    "extract_spans",
    "gradient_check",
    "load_checkpoint",
    "load_config",
    "micro_f1",
    "normalize_config",
    "render_report",
    "run_grid",
    "trainable_fraction",
]


def _dump(config):
    return config if isinstance(config, str) else json.dumps(config)


def load_config(path: str | PathLike) -> dict:
    return json.loads(_metaprime.load_config(str(path)))


def normalize_config(config: dict) -> dict:
    """Validated copy with every default spelled out."""
    return json.loads(_metaprime.parse_config(_dump(config)))


def trainable_fraction(model_config: dict, setting: str) -> tuple[int, int, str]:
    return _metaprime.trainable_fraction(_dump(model_config), setting)


def micro_f1(gold: list[list[str]], predicted: list[list[str]]) -> dict:
    return json.loads(_metaprime.micro_f1(gold, predicted))


def gradient_check(config: dict, seed: int = 0) -> tuple[float, list[str]]:
    return _metaprime.gradient_check(_dump(config), seed)


def run_grid(config: dict, settings: list[str], languages: list[str] | None = None) -> list[dict]:
    return json.loads(_metaprime.run_grid(_dump(config), settings, languages or []))


def render_report(reports: list[dict]) -> str:
    return _metaprime.render_report(json.dumps(reports))


class Session:
    """Data and model for one config; checkpoints live on disk."""

    def __init__(self, config: dict):
        self._s = _metaprime.Session(_dump(config))

    @property
    def targets(self) -> list[str]:
        return self._s.targets

    @property
    def vocab_size(self) -> int:
        return self._s.vocab_size

    def initial_checkpoint(self, path):
        self._s.initial_checkpoint(str(path))

    def prime(self, init, out, variant="meta_pe_sim", seed=0) -> list[dict]:
        return [json.loads(line) for line in self._s.prime(str(init), str(out), variant, seed)]

    def finetune(self, init, setting, language, seed=0, out=None) -> dict:
        return json.loads(self._s.finetune(str(init), setting, language, seed, None if out is None else str(out)))

    def evaluate(self, checkpoint, language) -> dict:
        return json.loads(self._s.evaluate(str(checkpoint), language))
