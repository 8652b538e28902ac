"""
Topics, consumers and replay
============================

The broker keeps named append-only topics. Consumers poll from their own
offset. Replay turns a span of occupancy labels into one JSON record per
minute, either as fast as possible or paced against the wall clock, and the
same records can be served over TCP.
"""
import datetime as dt
import threading
import time

from evoccupancy import datagen
from evoccupancy.experiment import test_samples
from evoccupancy.stream import (
    Broker,
    ReplayConfig,
    ReplayServer,
    consume_tcp,
    decode_sample,
    replay,
)

broker = Broker()
broker.create_topic("demo")
print([broker.publish("demo", p) for p in (b"a", b"b", b"c")])

early, late = broker.subscribe("demo"), broker.subscribe("demo", offset=2)
print(early.poll(2), early.poll(10), late.poll(10))

# A day of labels from the synthetic dataset.
sessions = datagen.generate(datagen.default_config()).sessions
start = dt.datetime(2018, 5, 14)
day = test_samples(sessions, start, start + dt.timedelta(days=1))
print(f"\n{len(day)} minute samples, {sum(s.occupied for s in day)} occupied")

broker.create_topic("occupancy")
consumer = broker.subscribe("occupancy")
report = replay(ReplayConfig(day), broker, "occupancy")
records = consumer.poll(5000)
print(f"published {report.published} in {report.wall_seconds * 1000:.0f} ms; first record {records[0][1]!r}")
assert [decode_sample(p) for _, p in records] == day and consumer.exhausted

# Paced: one simulated hour in about a second.
hour = day[600:661]
broker.create_topic("paced")
t0 = time.perf_counter()
replay(ReplayConfig(hour, speedup=3600.0), broker, "paced")
print(f"61 minutes at 3600x took {time.perf_counter() - t0:.2f}s of wall time")

# Over TCP as newline-delimited JSON, into a local topic.
with ReplayServer(("127.0.0.1", 0), ReplayConfig(day)) as server:
    host, port = server.server_address[:2]
    threading.Thread(target=server.handle_request).start()
    remote = Broker()
    remote.create_topic("occupancy")
    n = consume_tcp(host, port, remote, "occupancy")
print(f"received {n} records from tcp://{host}:{port}; topic closed: {remote.is_closed('occupancy')}")
