"""
Logging strutturato per specbias.

structlog passa dal logging standard: ogni handler della root logger ha il
proprio renderer. Su stderr console leggibile (o JSON con LOG_FORMAT=json),
nel file del run sempre una riga JSON per evento. stdout resta libero per le
tabelle dei comandi CLI.
"""

import logging
import os
import sys
import time
from typing import Any, Dict, Optional

from .config import LOG_FORMAT, LOG_LEVEL, VERBOSE_LOGGING

try:
    import structlog
    STRUCTLOG_AVAILABLE = True
except ImportError:
    structlog = None
    STRUCTLOG_AVAILABLE = False

LOGGER_NAME = "specbias"
LOG_FILENAME = "specbias.log"

_PLAIN_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_RUN_HANDLER_ATTR = "_specbias_run_log"

_configured = False

# ────────────────────────────────────────────────────────────────────────────────
# Formatter e setup
# ────────────────────────────────────────────────────────────────────────────────

def _level() -> int:
    return getattr(logging, LOG_LEVEL.upper(), logging.INFO)


def _pre_chain() -> list:
    # comune a eventi structlog e record "estranei" del logging standard
    return [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.TimeStamper(fmt="iso"),
    ]


def _formatter(json_lines: bool) -> logging.Formatter:
    if not STRUCTLOG_AVAILABLE:
        return logging.Formatter(_PLAIN_FORMAT)

    if json_lines:
        tail = [structlog.processors.format_exc_info, structlog.processors.JSONRenderer()]
    else:
        tail = [structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())]

    return structlog.stdlib.ProcessorFormatter(
        processors=[structlog.stdlib.ProcessorFormatter.remove_processors_meta, *tail],
        foreign_pre_chain=_pre_chain(),
    )


def _configure() -> None:
    """Handler stderr sulla root e configurazione structlog, una volta sola."""
    global _configured
    if _configured:
        return

    root = logging.getLogger()
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(_formatter(json_lines=LOG_FORMAT.lower() == "json"))
    root.addHandler(console)
    root.setLevel(_level())

    if STRUCTLOG_AVAILABLE:
        structlog.configure(
            processors=[*_pre_chain(), structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
            wrapper_class=structlog.make_filtering_bound_logger(_level()),
            logger_factory=structlog.stdlib.LoggerFactory(),
            cache_logger_on_first_use=True,
        )
    else:
        logging.getLogger(LOGGER_NAME).warning("structlog non disponibile, usando logging standard")

    _configured = True


def setup_logging(log_dir: Optional[str] = None):
    """
    Configura il logging di processo e, se indicata, la cartella log del run.

    Returns:
        Logger configurato (structlog o standard)
    """
    _configure()
    if log_dir:
        attach_run_log(log_dir)
    return get_logger()


def attach_run_log(run_log_dir: str) -> str:
    """
    Indirizza il log JSON nel file ``specbias.log`` della cartella indicata.

    Un solo file di run alla volta: l'handler di un run precedente viene
    chiuso e rimosso, richiamarla sulla stessa cartella non duplica nulla.

    Returns:
        Percorso assoluto del file di log del run
    """
    _configure()
    os.makedirs(run_log_dir, exist_ok=True)
    path = os.path.abspath(os.path.join(run_log_dir, LOG_FILENAME))

    root = logging.getLogger()
    for handler in list(root.handlers):
        if not getattr(handler, _RUN_HANDLER_ATTR, False):
            continue
        if handler.baseFilename == path:
            return path
        root.removeHandler(handler)
        handler.close()

    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(_formatter(json_lines=True))
    setattr(handler, _RUN_HANDLER_ATTR, True)
    root.addHandler(handler)
    return path


def get_logger(name: str = LOGGER_NAME):
    """Logger con nome, structlog se disponibile."""
    _configure()
    if STRUCTLOG_AVAILABLE:
        return structlog.get_logger(name)
    return logging.getLogger(name)

# ────────────────────────────────────────────────────────────────────────────────
# Eventi
# ────────────────────────────────────────────────────────────────────────────────

def _emit(level: str, message: str, /, **context: Any) -> None:
    if VERBOSE_LOGGING:
        print(f"[{level.upper()}] {message}", file=sys.stderr)

    logger = get_logger()
    method = getattr(logger, level, logger.info)
    if STRUCTLOG_AVAILABLE:
        method(message, **context)
        return

    # il logging standard non accetta kwargs arbitrari
    suffix = " ".join(f"{k}={v}" for k, v in context.items())
    method(f"{message} [{suffix}]" if suffix else message)


def debug(message: str, /, **context: Any) -> None:
    _emit("debug", message, **context)


def info(message: str, /, **context: Any) -> None:
    _emit("info", message, **context)


def warning(message: str, /, **context: Any) -> None:
    _emit("warning", message, **context)


def error(message: str, /, **context: Any) -> None:
    _emit("error", message, **context)


class _OperationTimer:
    """Starting/Completed/Failed attorno a un blocco, con duration_ms."""

    def __init__(self, operation: str, context: Dict[str, Any]):
        self.operation = operation
        self.context = context
        self.duration_ms = 0.0
        self._started = 0.0

    def __enter__(self) -> "_OperationTimer":
        self._started = time.perf_counter()
        _emit("info", f"Starting {self.operation}", **{**self.context, "operation": self.operation})
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self.duration_ms = (time.perf_counter() - self._started) * 1000.0
        fields = dict(self.context)
        fields.update(
            operation=self.operation,
            duration_ms=round(self.duration_ms, 3),
            success=exc_type is None,
        )
        if exc_type is None:
            _emit("info", f"Completed {self.operation}", **fields)
        else:
            fields["error"] = str(exc)
            _emit("error", f"Failed {self.operation}", **fields)
        # l'eccezione prosegue
        return False


def log_operation(operation: str, /, **context: Any) -> _OperationTimer:
    """
    Context manager con timing per un'operazione (es. "fit", "gen-data").

    Dopo l'uscita ``duration_ms`` contiene la durata misurata.
    """
    return _OperationTimer(operation, context)
