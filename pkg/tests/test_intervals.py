import pytest
from hypothesis import given, strategies as st

from src.calculations.intervals import (
    Interval, intervals, intervals_frame, new_job_work, original_work, recycled_work,
)
from src.core.domain import DomainError


def test_bump_above_the_threshold_splits_the_trajectory():
    found = intervals([1.0, 10.0, 1.0], r_max=2.0)
    assert found == [Interval(0, 0.0, 1.0, 1.0), Interval(1, 2.0, 3.0, 1.0)]
    assert found[0].original and not found[1].original
    assert original_work([1.0, 10.0, 1.0], 2.0) == 1.0
    assert recycled_work([1.0, 10.0, 1.0], 2.0) == [1.0]


def test_trajectory_always_below_is_one_original_interval():
    found = intervals([4.0, 4.0, 4.0, 4.0], r_max=5.0)
    assert found == [Interval(0, 0.0, 4.0, 4.0)]


def test_trajectory_always_above_has_no_intervals():
    assert intervals([9.0, 9.0, 9.0], r_max=1.0) == []
    assert original_work([9.0, 9.0, 9.0], 1.0) == 0.0
    assert recycled_work([9.0, 9.0, 9.0], 1.0) == []


def test_job_born_above_becomes_recycled_once_its_rank_falls():
    # ranks 5, 4, 3, 2, 1
    found = intervals([5.0] * 5, r_max=2.5)
    assert found == [Interval(0, 3.0, 5.0, 2.0)]
    assert original_work([5.0] * 5, 2.5) == 0.0


def test_fractional_size_clips_the_last_interval():
    found = intervals([3.0, 3.0, 3.0], r_max=5.0, size=2.4)
    assert found[-1].end == 2.4
    assert found[-1].work == pytest.approx(2.4)


def test_invalid_inputs():
    with pytest.raises(DomainError):
        intervals([], 1.0)
    with pytest.raises(DomainError):
        intervals([1.0, 1.0], 1.0, size=3.0)


def test_new_job_work_stops_at_the_threshold():
    # ranks 6, 5, 4, 3, 2, 1
    assert new_job_work([6.0] * 6, threshold=4.5) == 0.0
    assert new_job_work([6.0] * 6, threshold=6.5) == 6.0
    assert new_job_work([2.0, 9.0, 2.0], threshold=5.0) == 1.0


def test_frame_labels_interval_kinds():
    frame = intervals_frame([1.0, 10.0, 1.0], 2.0)
    assert list(frame['kind']) == ['original', 'recycled']
    assert list(frame.columns) == ['interval', 'start', 'end', 'work', 'kind']


@given(st.lists(st.floats(min_value=1.0, max_value=50.0), min_size=1, max_size=40),
       st.floats(min_value=-5.0, max_value=60.0))
def test_intervals_alternate_and_work_fits_the_job(trajectory, r_max):
    found = intervals(trajectory, r_max)
    assert sum(item.work for item in found) <= len(trajectory) + 1e-9
    for item in found:
        assert 0 <= item.work <= item.end - item.start
    for earlier, later in zip(found, found[1:]):
        assert earlier.end < later.start
