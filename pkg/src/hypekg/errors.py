"""Exception hierarchy shared by the library and the command line.

The CLI maps each class to an exit code: usage 1, data 2, numeric 3.
"""


class HypekgError(Exception):
    exit_code = 1


class UsageError(HypekgError, ValueError):
    exit_code = 1


class DataError(HypekgError, ValueError):
    exit_code = 2


class NumericError(HypekgError, ArithmeticError):
    exit_code = 3
