"""Settings for batch runs where failures are reported to Sentry."""

# flake8: noqa

from . import *

import sentry_sdk
from sentry_sdk.integrations.django import DjangoIntegration


if os.getenv("SENTRY_DSN"):
    sentry_sdk.init(
        dsn=os.getenv("SENTRY_DSN"),
        integrations=[DjangoIntegration()],
        send_default_pii=False
    )
