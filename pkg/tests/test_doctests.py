import doctest
import importlib

import pytest


@pytest.mark.parametrize("module", ["zrplab.stats", "zrplab.experiments.riemann", "zrplab.ensemble",
                                    "zrplab.observables", "zrplab.engine"])
def test_docstring_examples(module):
    result = doctest.testmod(importlib.import_module(module))
    assert result.failed == 0
