# -*- coding: utf-8 -*-

"""
================================================================================
⚙️ models/run_config.py - 実験 1 回分の設定
================================================================================

シナリオのパラメータ + シミュレータのノブ + 出力先 + トレース + シード。
YAML ファイル（--config）から読み込み、CLI フラグで上書きできる。
レポートにはこの to_dict() がそのまま埋め込まれる。
"""

import hashlib
import json
from dataclasses import dataclass, field, fields

import yaml

from config import get_config
from models.errors import ConfigError
from models.scenario import ScenarioParams
from models.trojan import TrojanConfig, TrojanKind


def _default(name):
    return field(default_factory=lambda: getattr(get_config(), name))


@dataclass
class RunConfig:
    scenario: str = 'kernel_cs'
    kbytes: float = 1
    quantum: int = None  # None なら kbytes から決める（auto_quantum）
    seed: int = 1
    trojan: TrojanConfig = field(default_factory=lambda: TrojanConfig(
        kind=TrojanKind.IRT1, latency=get_config().TROJAN_LATENCY))
    sweep_bits: list = field(default_factory=lambda: list(range(8, 17)))
    sweep_variant: str = 'reg'

    # シミュレータのノブ
    mem_size: int = _default('MEM_SIZE')
    mem_access_cycles: int = _default('MEM_ACCESS_CYCLES')
    trap_entry_cost: int = _default('TRAP_ENTRY_COST')
    tlb_enabled: bool = _default('TLB_ENABLED')
    tlb_capacity: int = _default('TLB_CAPACITY')
    max_cycles: int = _default('MAX_CYCLES')

    # 出力とトレース
    out: str = None
    format: str = 'json'
    trace: list = field(default_factory=list)
    trace_path: str = None
    record_streams: bool = False

    def __post_init__(self):
        self.scenario = str(self.scenario).replace('-', '_')
        if isinstance(self.trojan, dict):
            self.trojan = TrojanConfig.from_dict(self.trojan)
        if isinstance(self.trace, str):
            self.trace = [c for c in self.trace.split(',') if c]
        self.sweep_bits = [int(b) for b in self.sweep_bits]
        if self.format not in ('json', 'csv'):
            raise ConfigError(f"format must be json or csv, got {self.format}")
        if self.mem_access_cycles < 0 or self.trap_entry_cost < 0:
            raise ConfigError("cycle costs must be non-negative")
        if self.max_cycles < 1:
            raise ConfigError("max_cycles must be >= 1")

    # ------------------------------------------------------------------
    # 変換
    # ------------------------------------------------------------------
    def scenario_params(self):
        return ScenarioParams(
            scenario=self.scenario, kbytes=self.kbytes, quantum=self.quantum,
            seed=self.seed, trojan=self.trojan, sweep_bits=list(self.sweep_bits),
            sweep_variant=self.sweep_variant,
        )

    def to_dict(self):
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            data[f.name] = value.to_dict() if isinstance(value, TrojanConfig) else value
        return data

    def digest(self):
        """キャッシュキー用（出力先を除いた設定のハッシュ）"""
        data = self.to_dict()
        for key in ('out', 'format', 'trace_path'):
            data.pop(key)
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **overrides):
        """None 以外の値で上書きした新しい RunConfig"""
        data = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if key == 'trojan':
                merged = dict(data['trojan'])
                merged.update(value)
                value = merged
            data[key] = value
        return RunConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown run config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid run config: {e}") from e

    @classmethod
    def load(cls, path):
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read run config {path}: {e}") from e
        return cls.from_dict(data)
