import random

import hypothesis
import pytest

from trustshare import sim, table1
from trustshare.crypto import CertificateAuthority
from trustshare.store import AgencyIdentity

hypothesis.settings.register_profile("ci", deadline=None, max_examples=100)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def keys():
    """Deterministic 1024-bit keys for the four table agencies plus an outsider."""
    ca = CertificateAuthority(rng=random.Random(20101))
    return {agency_id: ca.provision(agency_id) for agency_id in (*table1.AGENCIES, "MOSSAD")}


@pytest.fixture(scope="session")
def net(keys):
    """Table fixture store with public keys installed, as a read-only snapshot."""
    return sim.Network(table1.load_store(), {a: keys[a] for a in table1.AGENCIES}, seed=7)


@pytest.fixture
def ident(net):
    return net.identity


@pytest.fixture
def outsider(keys):
    return AgencyIdentity("MOSSAD", keys["MOSSAD"])
