"""ASGI entry point for serving the minthreshold API (gunicorn in docker-compose)."""
import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'minthreshold.settings')

application = get_asgi_application()
