import numpy as np
import pytest

from ciodrelay.constellation import bc_constellation, from_name
from ciodrelay.netcode import build_catalog


@pytest.fixture(scope="session")
def c4():
    return from_name("4qam-rotated")


@pytest.fixture(scope="session")
def bc5():
    return bc_constellation()


@pytest.fixture(scope="session")
def siso_catalog(c4):
    return build_catalog(c4, "siso")


@pytest.fixture(scope="session")
def scheme2_catalog(c4):
    # ~2 s to build; shared by the map/property tests and the acceptance run
    return build_catalog(c4, "scheme2")


@pytest.fixture
def rng():
    return np.random.default_rng(0xC10D)


@pytest.fixture(scope="session")
def catalog_cache(tmp_path_factory, c4, scheme2_catalog):
    """Directory pre-seeded with both catalogs so engine/CLI tests skip the
    scheme2 rebuild."""
    from ciodrelay.netcode import catalog_cache_key, save_catalog

    d = tmp_path_factory.mktemp("catalog-cache")
    save_catalog(
        build_catalog(c4, "siso"), d / f"catalog-siso-{catalog_cache_key(c4, 'siso')}.txt"
    )
    save_catalog(
        scheme2_catalog, d / f"catalog-scheme2-{catalog_cache_key(c4, 'scheme2')}.txt"
    )
    return d
