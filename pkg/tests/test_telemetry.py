import pytest

from convexp.telemetry import Metrics, Telemetry


class TestTelemetry:
    def test_ring_buffer(self):
        telemetry = Telemetry(buffer_size=2)
        for name in ("a", "b", "c"):
            telemetry.start(name)
        assert [m.operation for m in telemetry.metrics()] == ["b", "c"]
        assert telemetry.last().operation == "c"

    def test_empty(self):
        assert Telemetry().last() is None


class TestMetrics:
    def test_ok_record(self):
        metrics = Metrics().start("exponent")
        metrics.inc("solver.calls", 3).inc("solver.calls")
        metrics.append("method", "dk")
        with metrics.timed("solve.dk"):
            pass
        metrics.finish_ok()
        record = metrics.record()
        assert record["status"] == "ok"
        assert record["counters"] == {"ok": 1, "solver.calls": 4}
        assert record["attributes"] == {"method": ["dk"]}
        assert set(record["timers"]) == {"exponent", "solve.dk"}
        assert record["duration"] >= 0

    def test_error(self):
        metrics = Metrics().start("oracle")
        metrics.finish_error("budget")
        assert metrics.status == "error"
        assert metrics.attributes["error.reason"] == ["budget"]

    def test_unknown_timer(self):
        with pytest.raises(ValueError):
            Metrics().finish_timer("missing")

    def test_timer_stops_on_exception(self):
        metrics = Metrics()
        with pytest.raises(RuntimeError), metrics.timed("solve"):
            raise RuntimeError("boom")
        assert metrics.timers["solve"].last_start is None

    def test_laps_accumulate(self):
        metrics = Metrics().start("curve")
        for _ in range(3):
            with metrics.timed("solve.dk"):
                pass
        metrics.finish_ok()
        record = metrics.record()
        assert record["timers"]["solve.dk"]["laps"] == 3
        assert record["timers"]["curve"]["laps"] == 1
        assert str(metrics.timers["solve.dk"]).startswith("solve.dk:")
