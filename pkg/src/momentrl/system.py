"""Bundling the three agents and the shared fusion network into one store."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from momentrl.agents import AGENT_KINDS, AgentKind, register_agent_params
from momentrl.autodiff.checkpoint import load_checkpoint, save_checkpoint
from momentrl.autodiff.store import ParameterStore, StoreView
from momentrl.config import RunConfig, dumps_config, loads_config
from momentrl.fusion import register_fusion_params

FUSION_PREFIX = "fusion."


def agent_prefix(kind: AgentKind) -> str:
    return f"agent.{kind.value}."


@dataclass
class System:
    """One parameter store holding every network, plus scoped views."""

    cfg: RunConfig
    store: ParameterStore

    def agent_view(self, kind: AgentKind) -> StoreView:
        return self.store.view(agent_prefix(kind))

    @property
    def fusion_view(self) -> StoreView:
        return self.store.view(FUSION_PREFIX)


def build_system(cfg: RunConfig, init: bool = True) -> System:
    store = ParameterStore()
    for kind in AGENT_KINDS:
        register_agent_params(store.view(agent_prefix(kind)), cfg, kind)
    register_fusion_params(store.view(FUSION_PREFIX), cfg.model)
    store.freeze()
    if init:
        store.init_uniform(np.random.default_rng([cfg.seed, 0]))
    return System(cfg=cfg, store=store)


def save_system(path: str | Path, system: System) -> None:
    save_checkpoint(system.store, path, meta=dumps_config(system.cfg))


def load_system(path: str | Path) -> System:
    store, meta = load_checkpoint(path)
    cfg = loads_config(meta)
    expected = build_system(cfg, init=False)
    if expected.store.names != store.names:
        raise ValueError(f"{path}: checkpoint parameters do not match its embedded config")
    return System(cfg=cfg, store=store)
