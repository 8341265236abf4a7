from . import *


DEBUG = True
LOGGING["loggers"]["cli"]["level"] = "DEBUG"
