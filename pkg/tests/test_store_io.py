from __future__ import annotations

import json
import random

import pytest

from rexkb import ElementType, KnowledgeBase, Role, store_io
from rexkb.errors import IoFailure, PermissionDenied, VersionMismatch
from rexkb.synthetic import WORD_POOL, seed_demo, synthetic_import_lines

from conftest import META, STOPWORDS, first_section, fresh_kb


def element_line(
    element_id: str,
    element_type: str = "FicheTechnique",
    title: str = "Pompe de charge",
    **overrides,
) -> str:
    record = {
        "kind": "element",
        "v": 1,
        "id": element_id,
        "element_type": element_type,
        "title": title,
        "sections": [],
        "tags": [],
        "content_status": "Draft",
        "author": "loader",
        "created_at": "2024-01-01T00:00:00+00:00",
        "updated_at": "2024-01-01T00:00:00+00:00",
        "validated_by": None,
        "validated_at": None,
    }
    record.update(overrides)
    return json.dumps(record, ensure_ascii=False)


# --------------------------------------------------------------- bulk import


def test_import_three_valid_elements(kb):
    lines = [element_line(f"x-{i}") for i in range(3)]
    report = store_io.bulk_import(kb, "admin", lines)
    assert report.accepted["element"] == 3
    assert report.rejected == []
    assert report.total_accepted == 3


def test_import_requires_admin(kb):
    with pytest.raises(PermissionDenied):
        store_io.bulk_import(kb, "expert", [])


def test_import_unknown_reference_isolated_per_line(kb):
    lines = [
        element_line("x-1"),
        json.dumps(
            {
                "kind": "link",
                "v": 1,
                "id": "l-1",
                "source": "x-1",
                "target": "ghost",
                "link_type": "concerns",
                "status": "Proposed",
                "proposer": "loader",
                "validator": None,
                "decided_at": None,
            }
        ),
        element_line("x-2"),
    ]
    report = store_io.bulk_import(kb, "admin", lines)
    assert report.accepted["element"] == 2
    assert len(report.rejected) == 1
    rejected = report.rejected[0]
    assert rejected.line == 2
    assert rejected.code == "UNKNOWN_REFERENCE"
    assert kb.find_element("x-2") is not None


def test_import_malformed_line_does_not_abort(kb):
    lines = ["{not json", element_line("x-1"), '{"kind": "mystery"}']
    report = store_io.bulk_import(kb, "admin", lines)
    assert report.accepted["element"] == 1
    codes = [r.code for r in report.rejected]
    assert codes == ["MALFORMED_STREAM", "MALFORMED_STREAM"]
    assert [r.line for r in report.rejected] == [1, 3]


def test_import_blank_lines_ignored_and_counts_balance(kb):
    lines = ["", element_line("x-1"), "   ", element_line("x-1"), "{bad"]
    report = store_io.bulk_import(kb, "admin", lines)
    non_blank = len([l for l in lines if l.strip()])
    assert report.total_accepted + len(report.rejected) == non_blank


def test_import_idempotent_rerun(kb):
    lines = [element_line("x-1"), element_line("x-2")]
    first = store_io.bulk_import(kb, "admin", lines)
    second = store_io.bulk_import(kb, "admin", lines)
    assert first.accepted["element"] == second.accepted["element"] == 2
    assert second.rejected == []


def test_import_conflicting_content_rejected(kb):
    store_io.bulk_import(kb, "admin", [element_line("x-1", title="Pompe A")])
    report = store_io.bulk_import(kb, "admin", [element_line("x-1", title="Pompe B")])
    assert report.accepted["element"] == 0
    assert report.rejected[0].code == "CONFLICT"
    assert kb.find_element("x-1").title == "Pompe A"


def test_import_future_format_version_rejected_per_line(kb):
    report = store_io.bulk_import(kb, "admin", [element_line("x-1", v=99)])
    assert report.rejected[0].code == "VERSION_MISMATCH"


def test_import_schema_violating_link_rejected(kb):
    lines = [
        element_line("x-1", element_type="Fondamental", title="Corrosion"),
        element_line("x-2", element_type="Fondamental", title="Fluage"),
        json.dumps(
            {
                "kind": "link",
                "v": 1,
                "id": "l-1",
                "source": "x-1",
                "target": "x-2",
                "link_type": "concerns",
                "status": "Proposed",
                "proposer": "loader",
                "validator": None,
                "decided_at": None,
            }
        ),
    ]
    report = store_io.bulk_import(kb, "admin", lines)
    assert report.rejected[0].code == "SCHEMA_VIOLATION"


def test_import_forward_pass_order_requirement(kb):
    # a link before its endpoints is rejected; endpoints later are accepted
    link = json.dumps(
        {
            "kind": "link",
            "v": 1,
            "id": "l-1",
            "source": "x-1",
            "target": "x-2",
            "link_type": "concerns",
            "status": "Proposed",
            "proposer": "loader",
            "validator": None,
            "decided_at": None,
        }
    )
    lines = [
        link,
        element_line("x-1", element_type="FaitTechnique", title="Alarme"),
        element_line("x-2", element_type="FicheTechnique", title="Pompe"),
        link,
    ]
    report = store_io.bulk_import(kb, "admin", lines)
    assert [r.line for r in report.rejected] == [1]
    assert report.accepted["link"] == 1


def test_imported_elements_are_searchable(kb):
    report = store_io.bulk_import(kb, "admin", synthetic_import_lines(200, seed=3))
    assert report.total_accepted == 200
    rng = random.Random(1)
    for element in rng.sample(kb.elements_sorted(), 20):
        hits = kb.search(element.indexed_text(), 1)
        assert hits and hits[0].doc_id == element.id


# -------------------------------------------------------------------- export


def test_export_empty_kb(kb):
    assert store_io.export_lines(kb, "admin") == []


def test_export_requires_admin(kb):
    with pytest.raises(PermissionDenied):
        store_io.export_lines(kb, "reader")


def test_export_is_deterministic(kb):
    seed_demo(kb, "expert", "specialist")
    first = store_io.export_lines(kb, "admin")
    second = store_io.export_lines(kb, "admin")
    assert first == second


def test_export_import_round_trip_preserves_behavior(kb):
    seed_demo(kb, "expert", "specialist")
    lines = store_io.export_lines(kb, "admin")
    other = fresh_kb()
    report = store_io.bulk_import(other, "admin", lines)
    assert report.rejected == []
    assert store_io.export_lines(other, "admin") == lines
    rng = random.Random(9)
    for _ in range(100):
        query = " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(1, 3)))
        assert other.search(query, 10) == kb.search(query, 10)
    for element in kb.elements_sorted():
        assert other.find_element(element.id) == element
        assert other.neighbors(element.id, direction="Both", include_proposed=True) == \
            kb.neighbors(element.id, direction="Both", include_proposed=True)
    for state in kb.fait_states_sorted():
        assert other.get_fait_state(state.fait) == state


def test_export_order_is_kind_then_id(kb):
    seed_demo(kb, "expert", "specialist")
    kinds = [json.loads(line)["kind"] for line in store_io.export_lines(kb, "admin")]
    boundaries = [kinds.index(k) for k in ("ontology_item", "element", "link")]
    assert boundaries == sorted(boundaries)
    ids_by_kind: dict[str, list[str]] = {}
    for line in store_io.export_lines(kb, "admin"):
        record = json.loads(line)
        ids_by_kind.setdefault(record["kind"], []).append(
            record.get("id", record.get("fait"))
        )
    for ids in ids_by_kind.values():
        assert ids == sorted(ids)


# ------------------------------------------------------------------ snapshot


def test_snapshot_load_round_trip(tmp_path, kb):
    ids = seed_demo(kb, "expert", "specialist")
    path = tmp_path / "kb.json"
    store_io.write_snapshot(kb, path)
    loaded = store_io.load_snapshot(path, meta=META, stopwords=STOPWORDS)
    assert store_io.export_lines(loaded, "admin") == store_io.export_lines(kb, "admin")
    assert loaded.search("alarme circuit", 5) == kb.search("alarme circuit", 5)
    assert loaded.transfer_metrics() == kb.transfer_metrics()
    assert loaded.suggest_links(ids["fait"], 5) == kb.suggest_links(ids["fait"], 5)
    # id counters restored: new ids do not collide
    element = loaded.create_element("expert", ElementType.FONDAMENTAL, "Nouveau")
    assert loaded.find_element(element.id) is not None


def test_snapshot_load_corrupted_file(tmp_path, kb):
    seed_demo(kb, "expert")
    path = tmp_path / "kb.json"
    store_io.write_snapshot(kb, path)
    path.write_text(path.read_text(encoding="utf-8")[:100], encoding="utf-8")
    before = store_io.export_lines(kb, "admin")
    with pytest.raises(IoFailure):
        store_io.load_snapshot(path)
    assert store_io.export_lines(kb, "admin") == before


def test_snapshot_load_future_version(tmp_path, kb):
    path = tmp_path / "kb.json"
    store_io.write_snapshot(kb, path)
    state = json.loads(path.read_text(encoding="utf-8"))
    state["v"] = 99
    path.write_text(json.dumps(state), encoding="utf-8")
    with pytest.raises(VersionMismatch):
        store_io.load_snapshot(path)


def test_snapshot_load_not_a_snapshot(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"hello": "world"}', encoding="utf-8")
    with pytest.raises(IoFailure):
        store_io.load_snapshot(path)
    with pytest.raises(IoFailure):
        store_io.load_snapshot(tmp_path / "missing.json")


def test_snapshot_index_version_difference_triggers_rebuild(tmp_path, kb):
    seed_demo(kb, "expert")
    path = tmp_path / "kb.json"
    store_io.write_snapshot(kb, path)
    state = json.loads(path.read_text(encoding="utf-8"))
    state["index_v"] = 0  # older index layout: must rebuild from element text
    path.write_text(json.dumps(state, ensure_ascii=False), encoding="utf-8")
    loaded = store_io.load_snapshot(path, meta=META, stopwords=STOPWORDS)
    assert loaded.search("alarme circuit", 5) == kb.search("alarme circuit", 5)
    assert loaded.index.doc_count == kb.index.doc_count


def test_snapshot_write_is_atomic_no_tmp_left(tmp_path, kb):
    path = tmp_path / "kb.json"
    store_io.write_snapshot(kb, path)
    store_io.write_snapshot(kb, path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["kb.json"]


def test_workflow_state_restores_snapshot_metadata(kb):
    sections = first_section(ElementType.FAIT_TECHNIQUE, "Fuite de vapeur.")
    kb.declare_fait("specialist", "Fuite vapeur", sections)
    fait, _ = kb.declare_fait("specialist", "Fuite vapeur", sections)
    kb.start_analysis("specialist", fait.id)
    lines = store_io.export_lines(kb, "admin")
    other = fresh_kb()
    store_io.bulk_import(other, "admin", lines)
    restored = other.get_fait_state(fait.id)
    assert restored == kb.get_fait_state(fait.id)
    assert restored.similar_snapshot is not None
