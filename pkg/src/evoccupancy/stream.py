"""In-process topic log, offset-tracking consumers, and a minute-resolution replayer.

A topic is an append-only list of byte payloads with dense offsets starting at
zero. Each consumer owns its read position; offsets are not persisted, so a new
run starts from offset 0. A producer marks the end of a bounded stream with
:meth:`Broker.close`.

Records on the wire are one JSON object per line::

    {"ts": "2019-01-01T00:00", "occupied": 0}
"""
from __future__ import annotations

import datetime as dt
import json
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .domain import OccupancySample, ValidationError, format_ts, minutes_between, parse_ts


class UnknownTopic(KeyError):
    pass


def encode_sample(sample: OccupancySample) -> bytes:
    occupied = int(sample.occupied)
    if occupied not in (0, 1):
        raise ValidationError(f"occupied must be 0 or 1, got {sample.occupied!r}")
    return json.dumps({"ts": format_ts(sample.ts), "occupied": occupied}).encode()


def decode_sample(payload: bytes | str) -> OccupancySample:
    try:
        obj = json.loads(payload)
        ts_text, occupied = obj["ts"], obj["occupied"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"malformed record {payload!r}") from exc
    if occupied not in (0, 1) or isinstance(occupied, bool):
        raise ValidationError(f"malformed record {payload!r}: occupied must be 0 or 1")
    if not isinstance(ts_text, str):
        raise ValidationError(f"malformed record {payload!r}: ts must be a string")
    # fromisoformat is much faster than strptime but also accepts other shapes.
    if len(ts_text) == 16 and ts_text[10] == "T":
        try:
            ts = dt.datetime.fromisoformat(ts_text)
        except ValueError:
            ts = parse_ts(ts_text)
    else:
        ts = parse_ts(ts_text)
    return OccupancySample(ts, occupied)


class _Topic:
    def __init__(self, name: str):
        self.name = name
        self.records: list[bytes] = []
        self.closed = False
        self.lock = threading.Lock()


class Broker:
    """Named topics holding ordered, immutable records."""

    def __init__(self) -> None:
        self._topics: dict[str, _Topic] = {}
        self._lock = threading.Lock()

    def create_topic(self, name: str) -> None:
        with self._lock:
            self._topics.setdefault(name, _Topic(name))

    def _topic(self, name: str) -> _Topic:
        try:
            return self._topics[name]
        except KeyError:
            raise UnknownTopic(name) from None

    def publish(self, topic: str, payload: bytes) -> int:
        t = self._topic(topic)
        payload = bytes(payload)
        with t.lock:
            if t.closed:
                raise ValidationError(f"topic {topic!r} is closed")
            t.records.append(payload)
            return len(t.records) - 1

    def close(self, topic: str) -> None:
        """Mark the end of a bounded stream; later publishes are rejected."""
        t = self._topic(topic)
        with t.lock:
            t.closed = True

    def end_offset(self, topic: str) -> int:
        return len(self._topic(topic).records)

    def is_closed(self, topic: str) -> bool:
        return self._topic(topic).closed

    def subscribe(self, topic: str, offset: int = 0) -> "Consumer":
        """Consumer positioned at ``offset``; 0 reads the topic from the start."""
        t = self._topic(topic)
        if not 0 <= offset <= len(t.records):
            raise ValidationError(f"offset {offset} outside [0, {len(t.records)}] for topic {topic!r}")
        return Consumer(self, topic, offset)


@dataclass
class Consumer:
    broker: Broker
    topic: str
    offset: int = 0

    def poll(self, max_records: int = 500) -> list[tuple[int, bytes]]:
        """Up to ``max_records`` records after the current position; never blocks."""
        if max_records < 1:
            raise ValueError("max_records must be positive")
        t = self.broker._topic(self.topic)
        # list.append is atomic, so reading a prefix without the lock is safe.
        end = min(len(t.records), self.offset + max_records)
        out = [(i, t.records[i]) for i in range(self.offset, end)]
        self.offset = end
        return out

    @property
    def exhausted(self) -> bool:
        """True once the topic is closed and every record has been read."""
        t = self.broker._topic(self.topic)
        return t.closed and self.offset >= len(t.records)


@dataclass(frozen=True)
class ReplayConfig:
    source: Sequence[OccupancySample]
    # Simulated minutes per wall-clock minute; None publishes back to back.
    speedup: Optional[float] = None

    def __post_init__(self) -> None:
        if self.speedup is not None and not self.speedup > 0:
            raise ValidationError("speedup must be positive")


@dataclass(frozen=True)
class ReplayReport:
    published: int
    first_ts: Optional[dt.datetime]
    last_ts: Optional[dt.datetime]
    first_offset: Optional[int]
    wall_seconds: float


def check_minute_sequence(samples: Sequence[OccupancySample]) -> None:
    for prev, cur in zip(samples, samples[1:]):
        step = minutes_between(prev.ts, cur.ts)
        if step <= 0:
            kind = "duplicate" if step == 0 else "out-of-order"
            raise ValidationError(f"{kind} minute: {format_ts(cur.ts)} follows {format_ts(prev.ts)}")


def replay(cfg: ReplayConfig, broker: Broker, topic: str, close: bool = True) -> ReplayReport:
    """Publish every sample in order, pacing at ``60 / speedup`` seconds per record."""
    samples = cfg.source
    check_minute_sequence(samples)
    payloads = [encode_sample(s) for s in samples]
    interval = None if cfg.speedup is None else 60.0 / cfg.speedup
    t0 = time.perf_counter()
    first_offset = None
    for i, payload in enumerate(payloads):
        if interval is not None and i:
            delay = t0 + i * interval - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        off = broker.publish(topic, payload)
        if first_offset is None:
            first_offset = off
    if close:
        broker.close(topic)
    return ReplayReport(
        published=len(payloads),
        first_ts=samples[0].ts if samples else None,
        last_ts=samples[-1].ts if samples else None,
        first_offset=first_offset,
        wall_seconds=time.perf_counter() - t0,
    )


def replay_in_background(cfg: ReplayConfig, broker: Broker, topic: str) -> tuple[threading.Thread, list]:
    """Run :func:`replay` on a thread; the report (or exception) lands in the returned list."""
    result: list = []

    def target() -> None:
        try:
            result.append(replay(cfg, broker, topic))
        except BaseException as exc:  # surfaced to the caller via `result`
            result.append(exc)
            broker.close(topic)

    thread = threading.Thread(target=target, name=f"replay-{topic}", daemon=True)
    thread.start()
    return thread, result


class ReplayServer(socketserver.ThreadingTCPServer):
    """Streams the whole replay to every client that connects, then hangs up."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], cfg: ReplayConfig):
        check_minute_sequence(cfg.source)
        self.cfg = cfg
        super().__init__(address, _ReplayHandler)


class _ReplayHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        cfg: ReplayConfig = self.server.cfg  # type: ignore[attr-defined]
        interval = None if cfg.speedup is None else 60.0 / cfg.speedup
        t0 = time.perf_counter()
        try:
            for i, sample in enumerate(cfg.source):
                if interval is not None and i:
                    delay = t0 + i * interval - time.perf_counter()
                    if delay > 0:
                        time.sleep(delay)
                self.wfile.write(encode_sample(sample) + b"\n")
        except (BrokenPipeError, ConnectionResetError):
            pass


def consume_tcp(host: str, port: int, broker: Broker, topic: str, timeout: float = 30.0) -> int:
    """Read a TCP replay into a local topic until the server closes; returns the record count."""
    n = 0
    with socket.create_connection((host, port), timeout=timeout) as sock, sock.makefile("rb") as f:
        for line in f:
            line = line.rstrip(b"\r\n")
            if not line:
                continue
            decode_sample(line)
            broker.publish(topic, line)
            n += 1
    broker.close(topic)
    return n


def samples_from_labels(start: dt.datetime, labels: Iterable[int]) -> list[OccupancySample]:
    step = dt.timedelta(minutes=1)
    return [OccupancySample(start + i * step, int(v)) for i, v in enumerate(labels)]
