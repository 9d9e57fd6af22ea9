# -*- coding: utf-8 -*-

"""
================================================================================
💾 models/memory_image.py - ロード可能なゲストイメージ
================================================================================

セグメント（ロードアドレス + バイト列）、エントリポイント、シンボル表。
マニフェストは YAML で、各セグメントは inline_hex か file（生バイナリ）を持つ。
"""

import os
from dataclasses import dataclass, field

import yaml

from models.errors import ManifestError


@dataclass(frozen=True)
class Segment:
    addr: int
    data: bytes

    @property
    def end(self):
        return self.addr + len(self.data)


@dataclass
class MemoryImage:
    """ゲストプログラム（セグメントはソート済みかつ重ならない）"""
    segments: list = field(default_factory=list)
    entry: int = 0
    symbols: dict = field(default_factory=dict)

    def __post_init__(self):
        self.segments = sorted(
            (s if isinstance(s, Segment) else Segment(int(s[0]), bytes(s[1])) for s in self.segments),
            key=lambda s: s.addr,
        )
        for prev, cur in zip(self.segments, self.segments[1:]):
            if cur.addr < prev.end:
                raise ManifestError(
                    f"Segments overlap: 0x{prev.addr:x}+{len(prev.data)} and 0x{cur.addr:x}")

    def merged(self, other):
        """別イメージのセグメントとシンボルを合成した新しいイメージ（entry は self 側）"""
        symbols = dict(other.symbols)
        symbols.update(self.symbols)
        return MemoryImage(list(self.segments) + list(other.segments), self.entry, symbols)

    def symbol(self, name):
        try:
            return self.symbols[name]
        except KeyError:
            raise ManifestError(f"Unknown symbol: {name}")

    @property
    def size(self):
        return sum(len(s.data) for s in self.segments)

    def load_into(self, mem):
        for seg in self.segments:
            mem.load(seg.addr, seg.data)

    # ------------------------------------------------------------------
    # マニフェスト
    # ------------------------------------------------------------------
    def to_manifest(self):
        return {
            'entry': f'0x{self.entry:x}',
            'segments': [{'addr': f'0x{s.addr:x}', 'inline_hex': s.data.hex()} for s in self.segments],
            'symbols': {name: f'0x{addr:x}' for name, addr in sorted(self.symbols.items())},
        }

    def dump(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.to_manifest(), f, sort_keys=False)

    @classmethod
    def from_manifest(cls, data, base_dir='.'):
        if not isinstance(data, dict) or 'entry' not in data:
            raise ManifestError("Manifest must be a mapping with an 'entry' key")
        try:
            entry = _hex(data['entry'])
            segments = []
            for raw in data.get('segments') or []:
                addr = _hex(raw['addr'])
                if 'inline_hex' in raw:
                    payload = bytes.fromhex(str(raw['inline_hex']))
                elif 'file' in raw:
                    with open(os.path.join(base_dir, raw['file']), 'rb') as f:
                        payload = f.read()
                else:
                    raise ManifestError(f"Segment at 0x{addr:x} has neither inline_hex nor file")
                segments.append(Segment(addr, payload))
            symbols = {name: _hex(v) for name, v in (data.get('symbols') or {}).items()}
        except (KeyError, TypeError, ValueError, OSError) as e:
            raise ManifestError(f"Invalid manifest: {e}") from e
        return cls(segments, entry, symbols)

    @classmethod
    def load(cls, path):
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
        return cls.from_manifest(data, base_dir=os.path.dirname(os.path.abspath(path)))


def _hex(value):
    if isinstance(value, int):
        return value
    return int(str(value), 0)
