"""WSGI entry point for serving the minthreshold API (gunicorn in docker-compose)."""
import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'minthreshold.settings')

application = get_wsgi_application()
