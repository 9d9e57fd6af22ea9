from .health import health_bp
from .experiments import experiments_bp

def register_blueprints(app):
    """全てのBlueprintを登録"""
    app.register_blueprint(health_bp)
    app.register_blueprint(experiments_bp)

__all__ = ['register_blueprints']
