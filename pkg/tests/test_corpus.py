from translab.config import load_manifest
from translab.corpus import comparison_pairs, regression_cases, shipped_manifest, write_corpus


def test_corpus_shape():
    cases = regression_cases()
    assert len(cases) == 25
    names = [c["name"] for c in cases]
    assert len(set(names)) == 25
    assert sum(n.endswith("_zero") for n in names) == 5
    assert sum(n.startswith("curved") for n in names) == 5
    for c in cases[:5]:
        p = c["problem"]
        assert p["f_plus"] == p["f_minus"] == p["g"] == 0.0


def test_corpus_deterministic():
    assert regression_cases(seed=3) == regression_cases(seed=3)
    assert regression_cases(seed=3) != regression_cases(seed=4)
    assert comparison_pairs(count=3) == comparison_pairs(count=3)


def test_shipped_corpus_matches_generator(tmp_path):
    path = write_corpus(tmp_path)
    shipped = shipped_manifest()
    assert path.read_bytes() == shipped.read_bytes()
    fresh = sorted(p.name for p in (tmp_path / "cases").iterdir())
    assert fresh == sorted(p.name for p in (shipped.parent / "cases").iterdir())
    for name in fresh:
        assert (tmp_path / "cases" / name).read_bytes() == (shipped.parent / "cases" / name).read_bytes()


def test_shipped_manifest_loads():
    m = load_manifest(shipped_manifest())
    assert len(m.cases) == 25 and len(m.comparisons) == 2
    assert all(expect == "pass" for _, expect in m.cases)
