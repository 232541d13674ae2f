"""Exception hierarchy. The CLI maps each class to an exit code."""


class HybridRulesError(Exception):
    exit_code = 1


class ConfigError(HybridRulesError, ValueError):
    exit_code = 2


class DataError(HybridRulesError, ValueError):
    exit_code = 3


class InfeasibleError(HybridRulesError):
    exit_code = 4
