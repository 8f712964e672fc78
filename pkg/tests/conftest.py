import pytest

from helpers import StubRetrieverServer


@pytest.fixture
def stub_retriever():
    server = StubRetrieverServer()
    yield server
    server.close()
