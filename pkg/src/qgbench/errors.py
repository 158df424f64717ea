class QGBenchError(Exception):
    """Base class for domain errors raised by this package.

    The CLI maps any subclass to exit code 1; anything else is a bug and
    propagates normally.
    """
