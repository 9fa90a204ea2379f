"""
Tests for Logging Setup

Run tests with: pytest tests/test_logging.py
"""

import io
import json
import logging

import pytest

from src.logging_setup import setup_logging


class TestSetupLogging:
    """Tests for root logger configuration."""

    def test_json_records(self, restore_logging):
        stream = io.StringIO()
        setup_logging("INFO", "json", stream)

        logging.getLogger("src.test").info("walks done")

        record = json.loads(stream.getvalue().strip())
        assert record["message"] == "walks done"
        assert record["levelname"] == "INFO"

    def test_text_records(self, restore_logging):
        stream = io.StringIO()
        setup_logging("debug", "text", stream)

        logging.getLogger("src.test").debug("cells ready")

        assert " - src.test - DEBUG - cells ready" in stream.getvalue()

    def test_level_filters(self, restore_logging):
        stream = io.StringIO()
        setup_logging("WARNING", "text", stream)

        logging.getLogger("src.test").info("hidden")

        assert stream.getvalue() == ""

    def test_repeated_setup_keeps_one_handler(self, restore_logging):
        setup_logging("INFO", "text", io.StringIO())
        root = setup_logging("INFO", "json", io.StringIO())

        assert len(root.handlers) == 1

    @pytest.mark.parametrize("level, fmt", [("LOUD", "text"), ("INFO", "xml")])
    def test_bad_arguments(self, restore_logging, level, fmt):
        with pytest.raises(ValueError):
            setup_logging(level, fmt)
