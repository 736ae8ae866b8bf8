import io
import json

import numpy as np
import pytest

from wikivandal.ingest import ingest
from wikivandal.synth import synth_corpus


def generate(pages, rate, seed=0):
    out, side = io.StringIO(), io.StringIO()
    summary = synth_corpus(pages, rate, out, side, seed=seed)
    truth = {d["page_id"]: d["labels"] for d in map(json.loads, side.getvalue().splitlines())}
    return out.getvalue(), truth, summary


def cases_by_page(xml):
    pages = {}
    for case in ingest(io.BytesIO(xml.encode())):
        pages.setdefault(case.page_id, []).append(case)
    return pages


def test_rate_zero_has_no_vandalism():
    xml, truth, _ = generate(40, 0.0)
    cases = [c for cs in cases_by_page(xml).values() for c in cs]
    assert cases and not any(c.is_vandalism for c in cases)
    assert all(l == "legitimate" for labels in truth.values() for l in labels)


def test_labels_recovered_from_reverts():
    xml, truth, _ = generate(120, 0.43, seed=3)
    pages = cases_by_page(xml)
    total = agree = 0
    for pid, labels in truth.items():
        got = [c.label for c in pages.get(pid, [])]
        total += len(labels)
        agree += sum(a == b for a, b in zip(got, labels))
    assert total > 500
    assert agree / total >= 0.99


def test_positive_fraction_follows_rate():
    xml, _, summary = generate(1000, 0.43, seed=1)
    labels = [c.is_vandalism for cs in cases_by_page(xml).values() for c in cs]
    assert abs(np.mean(labels) - 0.43) <= 0.05


def test_deterministic_by_seed():
    assert generate(5, 0.4, seed=9)[0] == generate(5, 0.4, seed=9)[0]
    assert generate(5, 0.4, seed=9)[0] != generate(5, 0.4, seed=8)[0]


def test_argument_validation():
    with pytest.raises(ValueError):
        synth_corpus(0, 0.4, io.StringIO())
    with pytest.raises(ValueError):
        synth_corpus(1, 1.0, io.StringIO())
