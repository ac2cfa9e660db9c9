import os
import logging
from threading import Lock
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler


class LoggerSingleton:
    __instance: Optional["LoggerSingleton"] = None
    __lock = Lock()
    DEFAULT_LOGGER_NAME = "NCP-Logger"

    def __new__(cls, *args, **kwargs) -> "LoggerSingleton":
        name = kwargs.pop("name", cls.DEFAULT_LOGGER_NAME)
        env = kwargs.pop("env", "DEV")
        log_level = kwargs.pop("log_level", logging.INFO if env == "PROD" else logging.DEBUG)
        filename = kwargs.pop("filename", None)
        with cls.__lock:
            if cls.__instance is None:
                cls.__instance = super().__new__(cls)
                cls.__instance.__setup_logger(name, log_level, filename)
            else:
                if name != cls.DEFAULT_LOGGER_NAME or filename:
                    cls.__instance.logger.warning("Logger already initialized. Ignoring new parameters.")
            return cls.__instance

    def __setup_logger(self, name: str, log_level: int, filename: Optional[str]) -> None:
        self.logger = logging.getLogger(name)
        self.logger.setLevel(log_level)
        if filename:
            file_handler = logging.FileHandler(filename, encoding="utf-8")
            file_handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))
            self.logger.addHandler(file_handler)

        # stdout is reserved for command output
        if not any(isinstance(h, RichHandler) for h in self.logger.handlers):
            self.logger.addHandler(RichHandler(console=Console(stderr=True), rich_tracebacks=True))

    def __getattr__(self, name: str):
        """Delegate attribute access to the underlying logger."""
        return getattr(self.logger, name)

    def info(self, msg: str, *args) -> None:
        self.logger.info(msg, *args)

    def error(self, msg: str, *args) -> None:
        self.logger.error(msg, *args)

    def debug(self, msg: str, *args) -> None:
        self.logger.debug(msg, *args)

    def warning(self, msg: str, *args) -> None:
        self.logger.warning(msg, *args)


LOGGER = LoggerSingleton(name="NCP-Logger", env=os.getenv("ENV", "DEV"), filename=os.getenv("NCP_LOG_FILE"))
