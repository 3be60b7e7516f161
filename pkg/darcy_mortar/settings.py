"""
Django settings for the darcy_mortar project.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-darcy-mortar-local-key')

DEBUG = os.environ.get('DEBUG', 'True').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    # Third party apps
    'rest_framework',

    # Local apps
    'fluxmortar',
]

# The solver keeps no persistent state; runs write their artifacts to disk.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework settings (serializers validate run configurations and render manifests)
REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': (
        'rest_framework.renderers.JSONRenderer',
    ),
    'DEFAULT_PARSER_CLASSES': (
        'rest_framework.parsers.JSONParser',
    ),
    'UNAUTHENTICATED_USER': None,
}

# Solver defaults
FLUXMORTAR = {
    'WORKERS': int(os.environ.get('FLUXMORTAR_WORKERS', '1')),
    'OUTPUT_DIR': os.environ.get('FLUXMORTAR_OUTPUT_DIR', str(BASE_DIR / 'out')),
    'CG_TOL': float(os.environ.get('FLUXMORTAR_CG_TOL', '1e-10')),
    'MAX_IT': int(os.environ.get('FLUXMORTAR_MAX_IT', '500')),
    # Configurations whose smallest mortar singular value falls below this are rejected.
    'SIGMA_MIN_REJECT': 1e-8,
}

LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        'fluxmortar': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}
