"""
Tests for the worker pool helpers.
"""

import time

import pytest

from fosr_core.errors import ConfigError
from fosr_core.workers import THREADS_ENV, map_ordered, resolve_worker_count


class TestResolveWorkerCount:
    """Tests for resolve_worker_count."""

    def test_env_cap(self, monkeypatch):
        """Test the environment variable caps the count."""
        monkeypatch.setenv(THREADS_ENV, "1")
        assert resolve_worker_count() == 1

    def test_requested_cap(self, monkeypatch):
        """Test an explicit request caps the count."""
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert resolve_worker_count(1) == 1

    @pytest.mark.parametrize("value", ["abc", "0"])
    def test_bad_env(self, monkeypatch, value):
        """Test malformed environment values are config errors."""
        monkeypatch.setenv(THREADS_ENV, value)
        with pytest.raises(ConfigError):
            resolve_worker_count()

    def test_bad_request(self, monkeypatch):
        """Test a non-positive request is a config error."""
        monkeypatch.delenv(THREADS_ENV, raising=False)
        with pytest.raises(ConfigError):
            resolve_worker_count(0)


class TestMapOrdered:
    """Tests for map_ordered."""

    @pytest.mark.parametrize("workers", [1, 4])
    def test_keeps_input_order(self, workers):
        """Test results follow input order whatever the completion order."""
        def slow_square(x):
            time.sleep(0.01 * (5 - x))
            return x * x

        done = []
        out = map_ordered(slow_square, [1, 2, 3, 4], workers, lambda idx, _: done.append(idx))
        assert out == [1, 4, 9, 16]
        assert sorted(done) == [0, 1, 2, 3]

    def test_exceptions_propagate(self):
        """Test a failing task raises in the caller."""
        def boom(x):
            raise ValueError(x)

        with pytest.raises(ValueError):
            map_ordered(boom, [1, 2], 2)
