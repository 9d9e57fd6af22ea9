import os

# ================================================================================
# 🔧 アプリケーション設定
# ================================================================================


def _env_int(name, default):
    """環境変数を整数として読む（0x 表記可）"""
    value = os.environ.get(name)
    if value is None or value == '':
        return default
    return int(value, 0)


def _env_bool(name, default):
    value = os.environ.get(name)
    if value is None or value == '':
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    """基本設定"""
    SECRET_KEY = os.environ.get('SECRET_KEY', 'irt-sim-dev-key')
    IRT_ENV = os.environ.get('IRT_ENV', 'development')
    LOG_LEVEL = os.environ.get('IRT_LOG_LEVEL', 'INFO')

    # 物理メモリ
    MEM_BASE = 0x8000_0000
    MEM_SIZE = _env_int('IRT_MEM_SIZE', 64 * 1024 * 1024)

    # サイクルモデル
    MEM_ACCESS_CYCLES = _env_int('IRT_MEM_ACCESS_CYCLES', 4)
    TRAP_ENTRY_COST = _env_int('IRT_TRAP_ENTRY_COST', 2)

    # TLB
    TLB_ENABLED = _env_bool('IRT_TLB_ENABLED', True)
    TLB_CAPACITY = _env_int('IRT_TLB_CAPACITY', 16)

    # 実行上限・スケジューラ
    MAX_CYCLES = _env_int('IRT_MAX_CYCLES', 20_000_000)
    QUANTUM = _env_int('IRT_QUANTUM', 2000)

    # トロイの木馬
    TROJAN_LATENCY = _env_int('IRT_TROJAN_LATENCY', 8)

    # スイープの外挿（目標クロックと計測クロック）
    TARGET_FREQUENCY_HZ = 1.7e9
    MEASURED_FREQUENCY_HZ = 53e6

    # キャッシュ設定
    CACHE_DURATION = 300  # 5分
    CACHE_MAX_ENTRIES = _env_int('IRT_CACHE_MAX_ENTRIES', 64)

    # プロセスプール
    MAX_WORKERS = _env_int('IRT_MAX_WORKERS', min(8, os.cpu_count() or 1))


class DevelopmentConfig(Config):
    """開発環境設定"""
    DEBUG = True
    TESTING = False


class ProductionConfig(Config):
    """本番環境設定"""
    DEBUG = False
    TESTING = False


class TestingConfig(Config):
    """テスト環境設定"""
    TESTING = True
    DEBUG = True
    MEM_SIZE = 4 * 1024 * 1024
    MAX_CYCLES = 5_000_000
    MAX_WORKERS = 1


# 環境に応じた設定を選択
config_by_env = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig
}


def get_config():
    """環境に応じた設定を取得"""
    env = os.environ.get('IRT_ENV', 'development')
    return config_by_env.get(env, DevelopmentConfig)
