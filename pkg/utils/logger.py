import logging
import os
import sys

# ================================================================================
# 📝 ロギング設定
# ================================================================================

LOGGER_NAME = 'irt_sim'
TRACE_CHANNELS = ('mmu', 'trojan')


def setup_logger(name, level=None):
    """ロガーをセットアップ"""
    if level is None:
        level = os.environ.get('IRT_LOG_LEVEL', 'INFO').upper()
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # ハンドラが既にある場合はスキップ
    if logger.hasHandlers():
        return logger

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # コンソールハンドラ（stdout はレポート出力に使うので stderr）
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger


def get_trace_logger(channel):
    """トレースチャネル（mmu / trojan）のロガーを取得"""
    if channel not in TRACE_CHANNELS:
        raise ValueError(f"Unknown trace channel: {channel}")
    trace_logger = logging.getLogger(f'{LOGGER_NAME}.trace.{channel}')
    if trace_logger.level == logging.NOTSET:
        trace_logger.setLevel(logging.WARNING)
    return trace_logger


def enable_trace(channels, path=None):
    """指定チャネルのトレースを有効化（path が None なら stderr）"""
    handler = logging.FileHandler(path, mode='w') if path else logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(name)s %(message)s'))
    enabled = []
    for channel in channels:
        channel = channel.strip()
        if not channel:
            continue
        trace_logger = get_trace_logger(channel)
        trace_logger.setLevel(logging.DEBUG)
        trace_logger.addHandler(handler)
        trace_logger.propagate = False
        enabled.append(channel)
    logger.info(f"🔎 Trace enabled: {', '.join(enabled) or 'none'} -> {path or 'stderr'}")
    return handler


def disable_trace(handler=None):
    """トレースを無効化してハンドラを外す"""
    for channel in TRACE_CHANNELS:
        trace_logger = get_trace_logger(channel)
        trace_logger.setLevel(logging.WARNING)
        if handler is not None:
            trace_logger.removeHandler(handler)
    if handler is not None:
        handler.close()


# グローバルロガーを作成
logger = setup_logger(LOGGER_NAME)
