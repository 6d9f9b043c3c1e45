from __future__ import annotations

from dataclasses import replace
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aivd.aibom import (
    SECTIONS,
    AibomDocument,
    Data,
    Dependency,
    DiffEntry,
    Meta,
    Model,
    diff_aibom,
    leaf_fields,
    leaves,
    link_aibom,
    parse_aibom,
    parse_path,
    patch_aibom,
    render_path,
    resolve_path,
    serialize_aibom,
    validate_aibom,
)
from aivd.errors import AivdError
from strategies import aibom_docs, aibom_pairs


@pytest.fixture
def table_doc(seed_record) -> AibomDocument:
    return seed_record.ai_system.aibom


def codes(report) -> set[tuple[str, str, str]]:
    return {(f.code, f.path, f.level.value) for f in report.findings}


def test_schema_shape():
    assert list(SECTIONS) == ["meta", "model", "data", "consideration", "usage"]
    names = leaf_fields()
    assert len(names) == 38 == len(set(names))
    assert names[0] == "meta.generation_tool" and names[-1] == "usage.malicious"


def test_seed_document(table_doc):
    assert table_doc.meta.creator == "Facebook (Meta)"
    assert table_doc.meta.release_date == date(2017, 5, 22)
    assert table_doc.model.foundation_model == "CNN"
    assert table_doc.model.dependencies == (Dependency("Torch7"),)
    assert table_doc.data.source == "NIST (MNIST)"
    assert table_doc.data.preprocessing == ("Normalization", "Similarizing training and test set")


def test_seed_document_is_valid_with_warnings(table_doc):
    report = validate_aibom(table_doc)
    assert report.valid
    assert codes(report) == {
        ("RECOMMENDED_FIELD", "usage.intended", "Warning"),
        ("RECOMMENDED_FIELD", "consideration.risk", "Warning"),
    }


def test_required_fields():
    report = validate_aibom(AibomDocument(), prefix="x.")
    assert {(c, p) for c, p, lvl in codes(report) if lvl == "Error"} == {
        ("MISSING_FIELD", "x.meta.creator"),
        ("MISSING_FIELD", "x.meta.release_date"),
        ("MISSING_FIELD", "x.model.foundation_model"),
        ("MISSING_FIELD", "x.data.source"),
    }


def test_missing_creator_only(table_doc):
    doc = replace(table_doc, meta=replace(table_doc.meta, creator="  "))
    report = validate_aibom(doc)
    assert [(f.code, f.path) for f in report.errors] == [("MISSING_FIELD", "meta.creator")]


def test_model_source_satisfies_foundation(table_doc):
    doc = replace(table_doc, model=replace(table_doc.model, foundation_model="", source="hub://cnn"))
    assert validate_aibom(doc).valid


def test_empty_dependency_name(table_doc):
    doc = replace(table_doc, model=replace(table_doc.model, dependencies=(Dependency("a"), Dependency(" "))))
    assert [(f.code, f.path) for f in validate_aibom(doc).errors] == [("INVALID_DEPENDENCY", "model.dependencies[1].name")]


@settings(max_examples=100)
@given(aibom_docs, st.sampled_from(["creator", "release_date", "foundation_model", "source"]))
def test_filling_a_required_field_never_adds_errors(doc, which):
    before = {(f.code, f.path) for f in validate_aibom(doc).errors}
    if which == "creator":
        filled = replace(doc, meta=replace(doc.meta, creator="someone"))
    elif which == "release_date":
        filled = replace(doc, meta=replace(doc.meta, release_date=date(2020, 1, 1)))
    elif which == "foundation_model":
        filled = replace(doc, model=replace(doc.model, foundation_model="base"))
    else:
        filled = replace(doc, data=replace(doc.data, source="corpus"))
    after = {(f.code, f.path) for f in validate_aibom(filled).errors}
    assert after <= before


# -- parse / serialize ---------------------------------------------------------------


@settings(max_examples=60)
@given(aibom_docs)
def test_round_trip(doc):
    assert parse_aibom(serialize_aibom(doc)) == doc


@pytest.mark.parametrize(
    "raw, code",
    [
        ([], "MALFORMED_DOCUMENT"),
        ({"extra": {}}, "MALFORMED_DOCUMENT"),
        ({"meta": {"owner": "x"}}, "MALFORMED_DOCUMENT"),
        ({"meta": []}, "MALFORMED_DOCUMENT"),
        ({"meta": {"release_date": "May 2017"}}, "MALFORMED_DOCUMENT"),
        ({"model": {"availability": "Open"}}, "MALFORMED_DOCUMENT"),
        ({"data": {"availability": "Restricted"}}, "MALFORMED_DOCUMENT"),
        ({"data": {"quantitative_measures": {"acc": "high"}}}, "MALFORMED_DOCUMENT"),
        ({"model": {"dependencies": [{"name": "a", "url": "b"}]}}, "MALFORMED_DOCUMENT"),
    ],
)
def test_parse_errors(raw, code):
    with pytest.raises(AivdError) as exc:
        parse_aibom(raw)
    assert exc.value.code == code


def test_dependency_shorthand():
    doc = parse_aibom({"model": {"dependencies": ["Torch7", {"name": "numpy", "version": "1.26"}]}})
    assert doc.model.dependencies == (Dependency("Torch7"), Dependency("numpy", "1.26"))
    assert serialize_aibom(doc)["model"]["dependencies"][0] == {"name": "Torch7"}


# -- diff / patch ----------------------------------------------------------------------


def test_diff_identity(table_doc):
    d = diff_aibom(table_doc, table_doc)
    assert not d and d.to_dict() == {"added": [], "removed": [], "modified": []}


def test_data_source_change(table_doc):
    new = replace(table_doc, data=replace(table_doc.data, source="CIFAR-10"))
    d = diff_aibom(table_doc, new)
    assert d.added == () and d.removed == ()
    assert d.modified == (DiffEntry(("data", "source"), "NIST (MNIST)", "CIFAR-10"),)
    assert d.to_dict()["modified"] == [{"path": "data.source", "before": "NIST (MNIST)", "after": "CIFAR-10"}]


def test_added_dependency(table_doc):
    deps = table_doc.model.dependencies + (Dependency("numpy", "1.26"),)
    new = replace(table_doc, model=replace(table_doc.model, dependencies=deps))
    d = diff_aibom(table_doc, new)
    assert d.to_dict() == {
        "added": [{"path": "model.dependencies[1]", "after": {"name": "numpy", "version": "1.26"}}],
        "removed": [],
        "modified": [],
    }
    back = diff_aibom(new, table_doc)
    assert [e.path for e in back.removed] == [("model", "dependencies", 1)]


def test_map_entries_are_leaves():
    a = AibomDocument(model=Model(hyperparameters={"lr": "0.1", "epochs": "10"}))
    b = AibomDocument(model=Model(hyperparameters={"lr": "0.01", "batch size": "64"}))
    d = diff_aibom(a, b).to_dict()
    assert d["added"] == [{"path": 'model.hyperparameters["batch size"]', "after": "64"}]
    assert d["removed"] == [{"path": "model.hyperparameters.epochs", "before": "10"}]
    assert d["modified"] == [{"path": "model.hyperparameters.lr", "before": "0.1", "after": "0.01"}]


@settings(max_examples=60)
@given(aibom_pairs())
def test_patch_applies_diff(pair):
    a, b = pair
    assert patch_aibom(a, diff_aibom(a, b)) == b


@settings(max_examples=40)
@given(aibom_pairs())
def test_diff_is_antisymmetric(pair):
    a, b = pair
    ab, ba = diff_aibom(a, b), diff_aibom(b, a)
    assert [e.path for e in ab.added] == [e.path for e in ba.removed]
    assert [(e.path, e.before, e.after) for e in ab.modified] == [(e.path, e.after, e.before) for e in ba.modified]


@settings(max_examples=100)
@given(aibom_docs)
def test_leaves_are_json_and_cover_non_empty_fields(doc):
    flat = leaves(doc)
    named = {f"{p[0]}.{p[1]}" for p in flat}
    assert named <= set(leaf_fields())
    assert named == {f"{s}.{k}" for s, body in serialize_aibom(doc).items() for k in body}


# -- paths -------------------------------------------------------------------------------


@pytest.mark.parametrize(
    "path, text",
    [
        (("data", "source"), "data.source"),
        (("model", "dependencies", 0), "model.dependencies[0]"),
        (("model", "hyperparameters", "learning-rate"), "model.hyperparameters.learning-rate"),
        (("data", "quantitative_measures", "top 1"), 'data.quantitative_measures["top 1"]'),
        (("data", "quantitative_measures", 'a"b'), 'data.quantitative_measures["a\\"b"]'),
    ],
)
def test_path_rendering(path, text):
    assert render_path(path) == text
    assert parse_path(text) == path


@pytest.mark.parametrize("text", ["", ".data", "data..source", "data[x]", "data.source[", "1data"])
def test_bad_paths(text):
    with pytest.raises(AivdError) as exc:
        parse_path(text)
    assert exc.value.code == "BAD_PATH"


@settings(max_examples=100)
@given(aibom_docs)
def test_every_leaf_path_resolves(doc):
    for path, value in leaves(doc).items():
        assert parse_path(render_path(path)) == path
        assert resolve_path(doc, render_path(path)) == value


# -- linkage -----------------------------------------------------------------------------


def test_link_embeds_and_names_components(seed_record):
    doc = seed_record.ai_system.aibom
    bare = replace(seed_record, ai_system=replace(seed_record.ai_system, aibom=None))
    link = link_aibom(bare, doc, ["model.dependencies[0]", "data.source", "data.preprocessing"])
    assert link.record.ai_system.aibom == doc
    assert link.record.ai_system.components == ("model.dependencies[0]", "data.source", "data.preprocessing")
    assert [c.value for c in link.components] == [
        {"name": "Torch7"},
        "NIST (MNIST)",
        ["Normalization", "Similarizing training and test set"],
    ]
    assert link.record.ai_system.name == seed_record.ai_system.name


def test_link_by_reference_and_whole_document(seed_record):
    doc = seed_record.ai_system.aibom
    link = link_aibom(seed_record, doc, [], ref="aibom/mnist-cnn.json")
    assert link.record.ai_system.aibom is None
    assert link.record.ai_system.aibom_ref == "aibom/mnist-cnn.json"
    assert link.components == () and link.record.ai_system.components == ()


def test_link_without_existing_system(seed_record):
    link = link_aibom(replace(seed_record, ai_system=None), AibomDocument(data=Data(source="x")), ["data.source"])
    assert link.record.ai_system.aibom.data.source == "x"


@pytest.mark.parametrize("path", ["model.dependencies[3]", "model.license", "usage.intended", "nosuch.field", "meta"])
def test_link_bad_path(seed_record, path):
    with pytest.raises(AivdError) as exc:
        link_aibom(seed_record, seed_record.ai_system.aibom, [path])
    assert exc.value.code == "BAD_PATH"


def test_empty_sections_serialize_empty():
    assert serialize_aibom(AibomDocument(meta=Meta())) == {s: {} for s in SECTIONS}
