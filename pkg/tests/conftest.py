import numpy as np
import pytest

from periscope.preprocess import Circle, ImageRecord


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def record_factory():
    def make(path, subject="s01", eye="L", session="1", distance=4, cx=60.0, cy=40.0, rs=20.0):
        return ImageRecord(
            path=path,
            subject_id=subject,
            eye=eye,
            session=session,
            distance_m=distance,
            pupil_circle=Circle(cx, cy, rs * 0.26),
            sclera_circle=Circle(cx, cy, rs),
        )

    return make
