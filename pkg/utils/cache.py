import time
from collections import OrderedDict

from config import get_config

# ================================================================================
# 💾 レポートキャッシュ（メモリ）
# ================================================================================


class ReportCache:
    """RunConfig ダイジェスト -> ExperimentReport の有効期限付きキャッシュ

    実験は決定的なので同じダイジェストのレポートは使い回せる。
    max_entries を超えたら古いものから捨てる。
    """

    def __init__(self, duration=None, max_entries=None):
        config = get_config()
        self.duration = duration or config.CACHE_DURATION
        self.max_entries = max_entries or config.CACHE_MAX_ENTRIES
        self.entries = OrderedDict()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        """期限内ならレポートを返す"""
        entry = self.entries.get(key)
        if entry is not None:
            expiry, report = entry
            if time.time() < expiry:
                self.hits += 1
                return report
            # 期限切れ
            del self.entries[key]
        self.misses += 1
        return None

    def set(self, key, report):
        self.entries.pop(key, None)
        self.entries[key] = (time.time() + self.duration, report)
        while len(self.entries) > self.max_entries:
            self.entries.popitem(last=False)

    def get_or_compute(self, key, compute):
        """キャッシュにあればそれを、なければ compute() の結果を保存して返す"""
        report = self.get(key)
        if report is None:
            report = compute()
            self.set(key, report)
        return report

    def clear(self):
        self.entries.clear()
        self.hits = 0
        self.misses = 0

    def stats(self):
        return {'entries': len(self.entries), 'hits': self.hits, 'misses': self.misses}

    def __len__(self):
        return len(self.entries)


# グローバルキャッシュインスタンス
report_cache = ReportCache()
