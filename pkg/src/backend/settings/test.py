from . import *


SECRET_KEY = "CorrectHorseBatteryStaple"

CONFIG = {
    "BACKEND": "config.backends.MemoryBackend",
}

for _logger in LOGGING["loggers"].values():
    _logger["level"] = "WARNING"
