"""
Django settings for red_bench project.

The project hosts the DAG scheduling library (apps.dags, apps.scheduling)
and the benchmark harness that runs it (apps.benchmarks). Benchmark
defaults live in ``RED_BENCH`` and can be overridden from the environment.
"""
import pymysql
pymysql.install_as_MySQLdb()
from pathlib import Path
from decouple import config, Csv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config(
    "SECRET_KEY",
    default="django-insecure-red-bench-local-only-8m2#q!v@w3x$k0p",
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config("DEBUG_STATUS", default=False, cast=bool)

ALLOWED_HOSTS = config("ALLOWED_HOSTS", default="localhost,127.0.0.1", cast=Csv())


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',

    # Local apps
    'apps.dags',
    'apps.scheduling',
    'apps.benchmarks',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'red_bench.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'red_bench.wsgi.application'


# Database
# SQLite unless DB_ENGINE=mysql is set in the environment.

DB_ENGINE = config("DB_ENGINE", default="sqlite")

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.mysql',
        'NAME': config("DB_NAME", default="red_bench"),
        'USER': config("DB_USER", default="red_bench"),
        'PASSWORD': config("DB_PASSWORD", default=""),
        'HOST': config("DB_HOST", default="localhost"),
        'PORT': config("DB_PORT", default="3306"),
        'OPTIONS': {
            'init_command': "SET sql_mode='STRICT_TRANS_TABLES'",
        },
    }
} if DB_ENGINE == "mysql" else {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}


# Password validation

AUTH_PASSWORD_VALIDATORS = [
    {
        'NAME': 'django.contrib.auth.password_validation.UserAttributeSimilarityValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.MinimumLengthValidator',
    },
]


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


STATIC_URL = 'static/'
STATIC_ROOT = BASE_DIR / 'staticfiles'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LOGIN_URL = '/admin/login/'


# Benchmark defaults. Durations are milliseconds unless the name says otherwise.
RED_BENCH = {
    'GAMMA_MS': config("RED_GAMMA_MS", default=100.0, cast=float),
    'SYNC_INTERVAL_MS': config("RED_SYNC_INTERVAL_MS", default=100.0, cast=float),
    'SYNC_COST_MS': config("RED_SYNC_COST_MS", default=2.0, cast=float),
    'DECISION_COST_MS': config("RED_DECISION_COST_MS", default=0.5, cast=float),
    'BLOCKING_MS': config("RED_BLOCKING_MS", default=0.0, cast=float),
    'DROP_POLICY': config("RED_DROP_POLICY", default="drop_node"),
    'SPLIT_RATIO': config("RED_SPLIT_RATIO", default=0.6, cast=float),
    'BATCH_BASE_MS': config("RED_BATCH_BASE_MS", default=0.0, cast=float),
    'BATCH_PER_ITEM_MS': config("RED_BATCH_PER_ITEM_MS", default=0.0, cast=float),
    'QOE_LAMBDAS': config(
        "RED_QOE_LAMBDAS", default="0.001,0.01,0.1,1,10", cast=Csv(float)
    ),
    'QOE_TIME_UNIT_MS': config("RED_QOE_TIME_UNIT_MS", default=1000.0, cast=float),
    'QOE_REPORT_LAMBDA': config("RED_QOE_REPORT_LAMBDA", default=1.0, cast=float),
    'DEADLINE_QUANTUM_US': config("RED_DEADLINE_QUANTUM_US", default=1000, cast=int),
    'OUTPUT_DIR': config("RED_OUTPUT_DIR", default=str(BASE_DIR / 'bench_output')),
    'WORKERS': config("RED_WORKERS", default=1, cast=int),
}


# Create logs directory if it doesn't exist
LOGS_DIR = BASE_DIR / 'logs'
LOGS_DIR.mkdir(exist_ok=True)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {asctime} {message}',
            'style': '{',
        },
        'detailed': {
            'format': '[{asctime}] {levelname} {name} {funcName}:{lineno} - {message}',
            'style': '{',
            'datefmt': '%Y-%m-%d %H:%M:%S'
        }
    },
    'filters': {
        'require_debug_true': {
            '()': 'django.utils.log.RequireDebugTrue',
        },
    },
    'handlers': {
        'console': {
            'level': 'INFO',
            'filters': ['require_debug_true'],
            'class': 'logging.StreamHandler',
            'formatter': 'simple'
        },
        # Simulator and scheduler debug output
        'scheduling_file': {
            'level': 'DEBUG',
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOGS_DIR / 'scheduling_debug.log',
            'maxBytes': 1024*1024*5,  # 5 MB
            'backupCount': 5,
            'formatter': 'detailed',
        },
        'benchmarks_file': {
            'level': 'DEBUG',
            'class': 'logging.handlers.TimedRotatingFileHandler',
            'filename': LOGS_DIR / 'benchmarks.log',
            'when': 'midnight',
            'interval': 1,
            'backupCount': 30,
            'formatter': 'detailed',
        },
        'error_file': {
            'level': 'ERROR',
            'class': 'logging.FileHandler',
            'filename': LOGS_DIR / 'errors.log',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'scheduling': {
            'handlers': ['console', 'scheduling_file', 'error_file'],
            'level': config("SCHEDULING_LOG_LEVEL", default="INFO"),
            'propagate': False,
        },
        'benchmarks': {
            'handlers': ['console', 'benchmarks_file', 'error_file'],
            'level': 'DEBUG',
            'propagate': False,
        },
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
        },
        '': {
            'handlers': ['console', 'error_file'],
            'level': 'WARNING',
        },
    },
}
