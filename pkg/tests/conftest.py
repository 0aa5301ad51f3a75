import copy

import pytest

from circuit_config import DEFAULT_CONFIG
from ledger_core import CertificateRegistry, Ledger
from underlay import LedgerHandle


@pytest.fixture
def config():
    """Default configuration with small single-worker sweeps."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    cfg["sweep"]["seeds_per_cell"] = 2
    cfg["sweep"]["workers"] = 1
    return cfg


@pytest.fixture
def registry():
    return CertificateRegistry(secret="test")


class StaticHandle(LedgerHandle):
    """Handle with a fixed ledger; records what is submitted to it."""

    def __init__(self, name, ledger=None, registry=None, certificates=True, bound=2):
        self.name = name
        self.ledger = ledger if ledger is not None else Ledger()
        self.registry = registry
        self.certificates = certificates
        self.bound = bound
        self.submitted = []

    @property
    def generates_certificates(self):
        return self.certificates

    @property
    def latency_bound(self):
        return self.bound

    @property
    def epoch_duration(self):
        return 1

    def submit(self, tx, t):
        self.submitted.append((tx, t))

    def read_view(self, observer, t):
        if self.certificates and self.registry is not None:
            return self.ledger, self.registry.issue(self.name, self.ledger)
        return self.ledger, None


@pytest.fixture
def static_handle(registry):
    def make(name, ids=(), **kwargs):
        return StaticHandle(name, Ledger.of(*ids), registry=registry, **kwargs)
    return make
