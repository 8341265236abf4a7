EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FAILED = 3
EXIT_BUDGET = 4


class FormattedException(Exception):
    exit_code = EXIT_FAILED

    def __init__(self, d="", m="", exit_code=None):
        super(FormattedException, self).__init__(m or self.__class__.__name__)
        if exit_code is not None:
            self.exit_code = exit_code
        self.m = m
        self.d = d


class ModelError(FormattedException):
    exit_code = EXIT_INPUT


class ConfigError(FormattedException):
    exit_code = EXIT_INPUT


class UnboundedError(FormattedException):
    exit_code = EXIT_INPUT


class EmptySetError(FormattedException):
    exit_code = EXIT_INPUT


class NumericalError(FormattedException):
    pass


class AmbiguityError(FormattedException):
    pass


class CertificateError(FormattedException):
    pass


class InfeasibleError(CertificateError):
    pass


class PropertyRefuted(FormattedException):
    pass


class BudgetExhausted(FormattedException):
    exit_code = EXIT_BUDGET
