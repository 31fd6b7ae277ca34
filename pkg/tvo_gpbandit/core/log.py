import logging

from tvo_gpbandit.core.config import Settings

PACKAGE_LOGGER = "tvo_gpbandit"

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_DEV_FORMAT = "%(asctime)s %(levelname)s %(name)s:%(lineno)d %(funcName)s: %(message)s"


def configure_logging(settings: Settings) -> logging.Logger:
    """
    Attach a single stream handler to the package logger.

    Library modules only ever call ``logging.getLogger(__name__)``; the CLI is
    the one place that decides where records go and at which level.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    level = logging.getLevelName(settings.log_level)
    if not isinstance(level, int):
        level = logging.WARNING
    logger.setLevel(level)

    for handler in list(logger.handlers):
        if getattr(handler, "_tvo_gpbandit", False):
            logger.removeHandler(handler)

    handler = logging.StreamHandler()
    handler.setFormatter(
        logging.Formatter(_DEV_FORMAT if settings.DEV_LOGS else _FORMAT)
    )
    handler._tvo_gpbandit = True
    logger.addHandler(handler)
    logger.propagate = False
    return logger
