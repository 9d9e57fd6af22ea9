import os

# 設定はモジュール読み込み時に決まるので、何より先に testing を選ぶ
os.environ.setdefault('IRT_ENV', 'testing')
os.environ.setdefault('IRT_LOG_LEVEL', 'WARNING')

import pytest

from models.run_config import RunConfig
from services.assembler import assembler
from services.cpu import Simulator, StopCondition
from utils import report_cache
from utils.constants import MEM_BASE, MMIO_EXIT

EXIT_STUB = f"""
    li t6, {MMIO_EXIT:#x}
    sd x0, 0(t6)
halt:
    j halt
"""


@pytest.fixture(autouse=True)
def clear_report_cache():
    report_cache.clear()
    yield
    report_cache.clear()


@pytest.fixture
def run_config():
    return RunConfig()


@pytest.fixture
def bare_program():
    """M モード・Bare 変換で動く小さなプログラムを組み立てて実行するヘルパー"""
    def run(body, max_cycles=100_000, trojan=None):
        source = f".org {MEM_BASE:#x}\n_start:\n{body}\n{EXIT_STUB}"
        image = assembler.assemble(source)
        sim = Simulator(image, trojan)
        summary = sim.run(StopCondition(max_cycles))
        return sim, summary
    return run
