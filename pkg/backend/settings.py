import os
from pathlib import Path

from decouple import config

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='ttslat-local-only')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='').split(',')
ALLOWED_HOSTS = [h.strip() for h in ALLOWED_HOSTS if h.strip()]

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'planning.apps.PlanningConfig',
]

DATABASES = {
    'default': {
        'ENGINE': config('DB_ENGINE', default='django.db.backends.sqlite3'),
        'NAME': config('DB_NAME', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
        },
    },
    'loggers': {
        'planning': {
            'handlers': ['console'],
            'level': config('TTSLAT_LOG_LEVEL', default='INFO'),
        },
    },
}

_threads = config('TTSLAT_THREADS', default=0, cast=int)

TTSLAT = {
    'TOOL_VERSION': '0.4.0',
    'SCENARIO_DIR': str(BASE_DIR / 'planning' / 'scenarios'),
    'OUT_DIR': config('TTSLAT_OUT_DIR', default='out'),
    # 0 or unset: one worker per CPU
    'THREADS': _threads if _threads > 0 else (os.cpu_count() or 1),
    'DEFAULT_SEED': config('TTSLAT_SEED', default=0, cast=int),
    'DEFAULT_TRIALS': 10_000,
    'SIM_BLOCK_CELLS': 262_144,
    'SIM_BATCH_CELLS': 2_097_152,
    'B_SET': (1, 2, 4, 8, 16, 32, 64),
    'GAMMA_SET': (0, 1, 2, 3, 4, 5, 6, 7),
    'B_MAX': 64,
    'GAMMA_MAX': 7,
    'PARETO_T_GRID': (10.0, 20.0, 30.0, 45.0, 60.0, 90.0, 120.0),
    'IMPROVEMENT_EPSILON': 1e-9,
    'ENUMERATION_GUARD': 10_000_000,
    'OUTCOME_CACHE_LIMIT': 50_000,
    'MC_FALLBACK_TRIALS': 200_000,
    'MC_CHUNK_TRIALS': 65_536,
    'FIT_GRID_MIDPOINTS': 41,
    'FIT_GRID_SLOPES': 30,
    'FIT_MAX_EVALUATIONS': 2_000,
}
