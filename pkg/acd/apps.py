import logging

from django.apps import AppConfig
from django.conf import settings

logger = logging.getLogger('acd.apps')


class AcdConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'acd'
    verbose_name = 'Actor-Critic-Discriminator training'

    def ready(self):
        import torch

        threads = settings.ACD_TORCH_THREADS
        if threads > 0:
            torch.set_num_threads(threads)
            logger.debug(f"torch intra-op threads set to {threads}")
