"""Display utilities for formatting CLI output."""

import shutil
import sys
import threading
import time
from typing import Dict, Optional, Sequence

import pandas as pd

from .config import COLORS


class ConsoleDisplay:
    """Handles the visual presentation of command results in the terminal.

    Structured run-log records go to stderr; everything here goes to stdout.
    """

    def __init__(self, stream=None, color: Optional[bool] = None):
        """Initialize the display manager.

        Args:
            stream: Output stream (stdout by default)
            color: Force ANSI colors on or off; default is on for terminals
        """
        self.stream = stream or sys.stdout
        self.color = self.stream.isatty() if color is None else color
        self.terminal_width = shutil.get_terminal_size(fallback=(80, 24)).columns

    def _c(self, key: str) -> str:
        return COLORS.get(key, "") if self.color else ""

    def _print(self, text: str = "") -> None:
        print(text, file=self.stream)

    def show_header(self, title: str, details: Optional[Dict[str, object]] = None):
        """Display a command header with key settings.

        Args:
            title: Command title
            details: Setting name -> value
        """
        self._print_separator("=")
        self._print_centered(title, "bold")
        self._print_separator("=")
        for key, value in (details or {}).items():
            self._print(f"{self._c('bold')}{key}:{self._c('reset')} {value}")
        if details:
            self._print_separator("-")

    def show_success(self, message: str):
        self._print(f"{self._c('green')}OK  {message}{self._c('reset')}")

    def show_info(self, message: str):
        self._print(f"{self._c('cyan')}{message}{self._c('reset')}")

    def show_warning(self, message: str):
        self._print(f"{self._c('yellow')}WARN  {message}{self._c('reset')}")

    def show_error(self, error_message: str, hint: Optional[str] = None):
        """Display an error message.

        Args:
            error_message: The error message to display
            hint: Optional remediation shown on its own line
        """
        self._print(f"{self._c('bold')}{self._c('red')}ERROR: {error_message}{self._c('reset')}")
        if hint:
            self._print(f"  {self._c('yellow')}hint: {hint}{self._c('reset')}")

    def show_loading(self, message: str):
        self._print(f"{self._c('cyan')}{message}...{self._c('reset')}")

    def show_table(self, table: pd.DataFrame, title: Optional[str] = None):
        """Print a pandas table, e.g. the WER / PER / SSIM summary."""
        if title:
            self._print(f"{self._c('bold')}{title}{self._c('reset')}")
        self._print(table.to_string(float_format=lambda v: f"{v:.2f}"))
        self._print()

    def show_training_summary(self, history: Sequence[float], checkpoint_path: str):
        if history:
            self._print(f"{self._c('bold')}Steps:{self._c('reset')} {len(history)}   "
                        f"{self._c('bold')}initial loss:{self._c('reset')} {history[0]:.4f}   "
                        f"{self._c('bold')}final loss:{self._c('reset')} {history[-1]:.4f}")
        self.show_success(f"Checkpoint written to {checkpoint_path}")

    def show_failures(self, failures: Sequence[Dict[str, str]]):
        """List per-entry failures of a batch command."""
        self.show_warning(f"{len(failures)} entr{'y' if len(failures) == 1 else 'ies'} failed")
        for failure in failures:
            self._print(f"  {self._c('red')}- {failure['utterance_id']}{self._c('reset')} "
                        f"[{failure['stage']}] {failure['error_type']}: {failure['error']}")

    def _print_separator(self, char: str = "-"):
        self._print(char * min(self.terminal_width, 80))

    def _print_centered(self, text: str, color_key: str = "white"):
        padding = max(0, (min(self.terminal_width, 80) - len(text)) // 2)
        self._print(f"{self._c(color_key)}{' ' * padding}{text}{self._c('reset')}")


class ProgressIndicator:
    """Spinner for long operations without a step count (loading pretrained models)."""

    def __init__(self, message: str, stream=None):
        """Initialize progress indicator.

        Args:
            message: Message to display
            stream: Output stream (stderr by default)
        """
        self.message = message
        self.stream = stream or sys.stderr
        self.is_running = False
        self.thread: Optional[threading.Thread] = None

    def start(self):
        """Start the progress indicator; a no-op when the stream is not a terminal."""
        if not self.stream.isatty():
            return
        self.is_running = True

        def animate():
            chars = "|/-\\"
            i = 0
            while self.is_running:
                self.stream.write(f"\r{COLORS['cyan']}{chars[i]} {self.message}...{COLORS['reset']}")
                self.stream.flush()
                time.sleep(0.1)
                i = (i + 1) % len(chars)
            self.stream.write("\r" + " " * (len(self.message) + 10) + "\r")
            self.stream.flush()

        self.thread = threading.Thread(target=animate, daemon=True)
        self.thread.start()

    def stop(self):
        """Stop the progress indicator."""
        self.is_running = False
        if self.thread is not None:
            self.thread.join(timeout=1.0)

    def __enter__(self) -> "ProgressIndicator":
        self.start()
        return self

    def __exit__(self, *exc) -> bool:
        self.stop()
        return False
