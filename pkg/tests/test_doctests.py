import doctest

import pytest

import dissim.abstraction
import dissim.matrix_analysis
import dissim.network


@pytest.mark.parametrize("module", [dissim.matrix_analysis,
                                    dissim.abstraction, dissim.network])
def test_docstring_examples(module):
    result = doctest.testmod(module, optionflags=doctest.ELLIPSIS)
    assert result.failed == 0
    assert result.attempted > 0
