import pytest

from periscope_export import NETWORKS, export_network


@pytest.fixture(scope="session")
def export_dir(tmp_path_factory):
    """All six networks exported once into a shared directory."""
    out = tmp_path_factory.mktemp("exports")
    results = {name: export_network(name, out) for name in sorted(NETWORKS)}
    return out, results
