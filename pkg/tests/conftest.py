import os

import hypothesis
import numpy as np
import pytest

np.seterr(all='warn')

hypothesis.settings.register_profile('default', max_examples=50, deadline=None)
hypothesis.settings.register_profile('fast', max_examples=5, deadline=None)
hypothesis.settings.register_profile('debugger', report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.environ.get('HYPOTHESIS_PROFILE', 'default'))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
