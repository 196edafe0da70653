import pytest

from converge_twin.core.storage import TraceStore, dataset_id_for, session_id_for
from converge_twin.errors import (
    NonMonotonicTimestamp,
    SessionNotRunning,
    UnknownDataset,
    UnknownSession,
    Unsealed,
)
from converge_twin.netsim import SimConfig, run_scenario
from converge_twin.scenario import builtin_scenario_path, load_scenario
from converge_twin.trace import TraceRecord, parse_export


def record(t, kind="RADIO", device="ue", payload=None, sid="s-1"):
    return TraceRecord(session_id=sid, timestamp_s=t, kind=kind,
                       device_id=device, position_m=(1.0, 2.0, 3.0),
                       payload=payload or {"snr_db": 20.0})


@pytest.fixture()
def store(tmp_path):
    return TraceStore(tmp_path / "data")


def running_session(store, sid="s-1"):
    store.create_session(sid, {"session_id": sid, "state": "RUNNING"})
    return sid


def test_dataset_id_round_trip():
    assert dataset_id_for("abc") == "ds-abc"
    assert session_id_for("ds-abc") == "abc"
    with pytest.raises(UnknownDataset):
        session_id_for("abc")


def test_append_acks_cumulative_count(store):
    sid = running_session(store)
    assert store.append(sid, [record(0.01), record(0.02)]) == 2
    assert store.append(sid, [record(0.03)]) == 3
    assert store.record_count(sid) == 3
    assert [r.timestamp_s for r in store.records(sid)] == [0.01, 0.02, 0.03]


def test_append_rejects_backward_timestamp_within_stream(store):
    sid = running_session(store)
    store.append(sid, [record(0.05)])
    with pytest.raises(NonMonotonicTimestamp):
        store.append(sid, [record(0.04)])
    # independent (kind, device) streams keep their own clocks
    store.append(sid, [record(0.01, kind="DETECTION", device="cam")])


def test_append_requires_running_session(store):
    store.create_session("s-2", {"state": "CREATED"})
    with pytest.raises(SessionNotRunning):
        store.append("s-2", [record(0.01)])


def test_unknown_session_raises(store):
    with pytest.raises(UnknownSession):
        store.read_meta("ghost")
    with pytest.raises(UnknownSession):
        list(store.records("ghost"))


def test_update_meta_merges(store):
    sid = running_session(store)
    meta = store.update_meta(sid, {"state": "COMPLETED", "extra": 1})
    assert meta["state"] == "COMPLETED"
    assert store.read_meta(sid)["extra"] == 1


def test_seal_and_export_round_trip(store):
    sid = running_session(store)
    records = [record(round(0.01 * i, 6), payload={"i": i}) for i in range(20)]
    store.append(sid, records)
    dataset = store.seal(sid)
    assert dataset["dataset_id"] == "ds-s-1"
    assert dataset["record_count"] == 20
    assert dataset["immutable"] is True
    header, parsed = parse_export(store.export("ds-s-1"))
    assert header["checksum"] == dataset["checksum"]
    assert parsed == records
    assert store.read_meta(sid)["result_dataset_id"] == "ds-s-1"


def test_export_is_byte_stable(store):
    sid = running_session(store)
    store.append(sid, [record(0.01), record(0.02)])
    store.seal(sid)
    assert store.export("ds-s-1") == store.export("ds-s-1")


def test_unsealed_dataset_rejected(store):
    sid = running_session(store)
    store.append(sid, [record(0.01)])
    with pytest.raises(Unsealed):
        store.export(dataset_id_for(sid))
    with pytest.raises(UnknownDataset):
        store.export("ds-ghost")


def test_query_filters(store):
    sid = running_session(store)
    store.append(sid, [
        record(0.01, kind="RADIO", device="ue"),
        record(0.02, kind="DETECTION", device="cam"),
        record(0.03, kind="RADIO", device="ue"),
        record(0.04, kind="EVENT", device="gnb"),
    ])
    store.seal(sid)
    ds = dataset_id_for(sid)
    assert len(store.query(ds)) == 4
    assert [r.timestamp_s for r in store.query(ds, t0=0.02, t1=0.03)] == [0.02, 0.03]
    assert [r.kind for r in store.query(ds, kind="RADIO")] == ["RADIO", "RADIO"]
    assert [r.device_id for r in store.query(ds, device_id="cam")] == ["cam"]
    assert store.query(ds, kind="RADIO", t0=0.03)[0].timestamp_s == 0.03


def test_restart_preserves_records_and_aborts_running(tmp_path):
    root = tmp_path / "data"
    store = TraceStore(root)
    sid = running_session(store)
    store.append(sid, [record(0.01), record(0.02)])
    # simulate an unclean stop: reopen the directory without sealing
    reopened = TraceStore(root)
    assert reopened.recovered == [sid]
    assert reopened.read_meta(sid)["state"] == "ABORTED"
    assert [r.timestamp_s for r in reopened.records(sid)] == [0.01, 0.02]
    assert reopened.record_count(sid) == 2
    # monotonicity state also survives the restart
    reopened.update_meta(sid, {"state": "RUNNING"})
    with pytest.raises(NonMonotonicTimestamp):
        reopened.append(sid, [record(0.015)])


def test_restart_leaves_completed_sessions_alone(tmp_path):
    root = tmp_path / "data"
    store = TraceStore(root)
    sid = running_session(store)
    store.append(sid, [record(0.01)])
    store.seal(sid)
    store.update_meta(sid, {"state": "COMPLETED"})
    reopened = TraceStore(root)
    assert reopened.recovered == []
    assert reopened.read_meta(sid)["state"] == "COMPLETED"
    assert reopened.export(dataset_id_for(sid)) == store.export(dataset_id_for(sid))


def test_full_run_record_volume(store):
    # a 10 s run at 10 ms ticks produces exactly 1000 per-tick radio records
    scenario = load_scenario(builtin_scenario_path("flagship"))
    records, _ = run_scenario(scenario, "REACTIVE",
                              SimConfig(duration_s=10.0, tick_s=0.010))
    sid = running_session(store, "bulk")
    store.append(sid, records)
    store.seal(sid)
    radio = store.query(dataset_id_for(sid), kind="RADIO")
    assert len(radio) == 1000
