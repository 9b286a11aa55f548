import pytest

from qarma.dataset import load_dataset

# The six-user, three-item walkthrough dataset; the negated price attribute is
# added by the engine (negate_attrs), not stored in the file.
D_EX_LINES = [
    '{"u": "1", "t": [{"i": "a", "a": {"p": 1.0}}, {"i": "b", "a": {"p": 1.0}}, {"i": "c", "a": {"p": 0.3}}]}',
    '{"u": "2", "t": [{"i": "a", "a": {"p": 1.0}}, {"i": "b", "a": {"p": 1.0}}, {"i": "c", "a": {"p": 0.2}}]}',
    '{"u": "3", "t": [{"i": "a", "a": {"p": 1.0}}, {"i": "b", "a": {"p": 1.0}}, {"i": "c", "a": {"p": 0.1}}]}',
    '{"u": "4", "t": [{"i": "a", "a": {"p": 1.0}}, {"i": "b", "a": {"p": 0.6}}, {"i": "c", "a": {"p": 0.3}}]}',
    '{"u": "5", "t": [{"i": "a", "a": {"p": 0.9}}, {"i": "b", "a": {"p": 0.5}}, {"i": "c", "a": {"p": 0.2}}]}',
    '{"u": "6", "t": [{"i": "a", "a": {"p": 0.8}}, {"i": "b", "a": {"p": 0.5}}, {"i": "c", "a": {"p": 0.2}}]}',
]


@pytest.fixture(scope="session")
def d_ex_lines():
    return list(D_EX_LINES)


@pytest.fixture()
def d_ex():
    return load_dataset(D_EX_LINES, "p")


@pytest.fixture()
def d_ex_file(tmp_path):
    path = tmp_path / "d_ex.jsonl"
    path.write_text("\n".join(D_EX_LINES) + "\n", encoding="utf-8")
    return path
