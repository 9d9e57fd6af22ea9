from flask import Blueprint, jsonify

from utils.constants import SCENARIOS

# ================================================================================
# 🏥 ヘルスチェック
# ================================================================================

health_bp = Blueprint('health', __name__)


@health_bp.route('/ping')
def ping():
    """死活監視用のエンドポイント"""
    return "pong", 200


@health_bp.route('/api/scenarios')
def scenarios():
    """実行できるシナリオ一覧"""
    return jsonify({'scenarios': SCENARIOS}), 200
