from flask import Blueprint, request, jsonify

from models.errors import ConfigError, BuildError, DegenerateFit, ManifestError, Timeout
from models.run_config import RunConfig
from services import experiment_service, analyze_pattern
from utils import logger
from utils.constants import SCENARIOS

# ================================================================================
# 🧪 実験 API
# ================================================================================

experiments_bp = Blueprint('experiments', __name__, url_prefix='/api')

MAX_API_SAMPLES = 10_000_000


@experiments_bp.route('/experiments/<scenario>', methods=['POST'])
def run_experiment(scenario):
    """JSON の RunConfig 上書きで実験を実行してレポートを返す"""
    scenario = scenario.replace('-', '_')
    if scenario not in SCENARIOS:
        return jsonify({'error': f'Unknown scenario: {scenario}'}), 404

    overrides = request.get_json(silent=True) or {}
    if not isinstance(overrides, dict):
        return jsonify({'error': 'Request body must be a JSON object'}), 400
    overrides.pop('scenario', None)
    overrides.pop('out', None)
    overrides.pop('trace_path', None)

    try:
        cfg = RunConfig(scenario=scenario).with_overrides(**overrides)
        report = experiment_service.run_cached(cfg)
        return jsonify(report.to_dict()), 200

    except Timeout as e:
        logger.warning(f"⚠️ API experiment timed out: {e}")
        return jsonify({'error': str(e), 'cycles': e.cycles}), 504
    except (ConfigError, BuildError, DegenerateFit, ManifestError) as e:
        logger.warning(f"⚠️ Bad experiment request: {e}")
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"❌ Error running experiment {scenario}: {e}", exc_info=True)
        return jsonify({'error': str(e)}), 500


@experiments_bp.route('/stealth')
def stealth():
    """?pattern=..&samples=..&seed=.. の ProbReport"""
    pattern = request.args.get('pattern', 'nand-nor')
    try:
        samples = int(request.args.get('samples', 100_000))
        seed = int(request.args.get('seed', 0))
    except ValueError:
        return jsonify({'error': 'samples and seed must be integers'}), 400
    if not 1 <= samples <= MAX_API_SAMPLES:
        return jsonify({'error': f'samples must be in 1..{MAX_API_SAMPLES}'}), 400

    try:
        report = analyze_pattern(pattern, samples=samples, seed=seed)
        return jsonify(report.to_dict()), 200
    except ConfigError as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"❌ Error analyzing pattern {pattern}: {e}", exc_info=True)
        return jsonify({'error': str(e)}), 500
