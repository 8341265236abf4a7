import logging
import traceback

from django.conf import settings
from rest_framework import exceptions

from backend.exceptions import EXIT_FAILED, EXIT_INPUT, FormattedException
from backend.response import FormattedResponse

logger = logging.getLogger("cli")


def _plain(detail):
    if isinstance(detail, dict):
        return {str(k): _plain(v) for k, v in detail.items()}
    if isinstance(detail, (list, tuple)):
        return [_plain(v) for v in detail]
    return str(detail)


def handle_exception(exc, command=""):
    if settings.DEBUG:
        traceback.print_exc()
    if isinstance(exc, FormattedException):
        response = FormattedResponse(s=False, d=_plain(exc.d), m=exc.m, exit_code=exc.exit_code)
    elif isinstance(exc, exceptions.ValidationError):
        if isinstance(exc.detail, dict):
            errors = []
            for detail in exc.detail:
                for error in exc.detail[detail]:
                    errors.append(getattr(error, "code", "invalid"))
            m = errors[0] if errors else "invalid"
        else:
            m = "invalid"
        response = FormattedResponse(s=False, d=_plain(exc.detail), m=m, exit_code=EXIT_INPUT)
    elif isinstance(exc, (FileNotFoundError, IsADirectoryError)):
        response = FormattedResponse(s=False, d=str(exc), m="file_not_found", exit_code=EXIT_INPUT)
    else:
        response = FormattedResponse(s=False, m=str(exc), d="", exit_code=EXIT_FAILED)
    logger.error("%s failed: %s", command or "command", response.data["m"])
    return response
