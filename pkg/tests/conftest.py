from __future__ import annotations

import pytest

from antkit.taxonomy import build_taxonomy


@pytest.fixture(scope="session")
def tiny_taxonomy():
    return build_taxonomy(
        ["open", "close", "take", "put", "turn-on", "turn-off"],
        ["door", "window", "cup", "plate", "coconut", "paintbrush"],
    )


@pytest.fixture(scope="session")
def two_by_one_taxonomy():
    return build_taxonomy(["open", "close"], ["door"])
