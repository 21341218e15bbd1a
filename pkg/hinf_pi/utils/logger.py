import logging
import os


def setup_logger(name=__name__, log_file=None, level=None):
    """Function to setup as many loggers as you want"""
    formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')

    if log_file is None:
        log_file = os.environ.get("HINF_LOG_FILE")
    if level is None:
        level = os.environ.get("HINF_LOG_LEVEL", "INFO").upper()

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Avoid adding handlers multiple times
    if not logger.handlers:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        if log_file:
            # Relative paths land in the current working directory
            if not os.path.isabs(log_file):
                log_file = os.path.join(os.getcwd(), log_file)
            handler = logging.FileHandler(log_file, encoding='utf-8')
            handler.setFormatter(formatter)
            logger.addHandler(handler)

    return logger


def set_level(level: str):
    """Change the level of the default logger at runtime (CLI --log-level)"""
    logger.setLevel(level.upper())


# Create a default logger instance
logger = setup_logger("hinf_pi")
