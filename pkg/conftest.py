import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
django.setup()

# Mirror `manage.py test`: test client host, locmem email, DEBUG=False.
from django.test.utils import setup_test_environment  # noqa: E402

setup_test_environment()
