import pytest

from imagegen import build_tree


@pytest.fixture(scope="session")
def small_tree(tmp_path_factory):
    """2 classes x 3 images."""
    return build_tree(tmp_path_factory.mktemp("imgs") / "root", ["ant", "bee"], 3)
