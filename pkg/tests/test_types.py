from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from qrmi.errors import ValidationError
from qrmi.types import (
    LEGAL_TRANSITIONS,
    Target,
    TaskStatus,
    can_reach,
    canonical_counts_json,
    is_legal_transition,
    validate_resource_id,
)

import oracles


class TestTaskStatus:
    def test_terminal_states(self):
        assert TaskStatus.COMPLETED.is_terminal
        assert TaskStatus.FAILED.is_terminal
        assert TaskStatus.CANCELLED.is_terminal
        assert not TaskStatus.QUEUED.is_terminal
        assert not TaskStatus.RUNNING.is_terminal

    def test_terminal_states_have_no_outgoing_edges(self):
        for state in TaskStatus:
            if state.is_terminal:
                assert not LEGAL_TRANSITIONS[state]

    @pytest.mark.parametrize(
        "a,b,legal",
        [
            (TaskStatus.QUEUED, TaskStatus.RUNNING, True),
            (TaskStatus.QUEUED, TaskStatus.CANCELLED, True),
            (TaskStatus.RUNNING, TaskStatus.COMPLETED, True),
            (TaskStatus.RUNNING, TaskStatus.FAILED, True),
            (TaskStatus.RUNNING, TaskStatus.CANCELLED, True),
            (TaskStatus.QUEUED, TaskStatus.COMPLETED, False),
            (TaskStatus.COMPLETED, TaskStatus.RUNNING, False),
            (TaskStatus.CANCELLED, TaskStatus.QUEUED, False),
        ],
    )
    def test_single_step_edges(self, a, b, legal):
        assert is_legal_transition(a, b) is legal

    @given(st.sampled_from(list(TaskStatus)), st.sampled_from(list(TaskStatus)))
    def test_reachability_matches_independent_table(self, a, b):
        assert can_reach(a, b) == oracles.reachable(a.value, b.value)


class TestResourceId:
    @pytest.mark.parametrize("good", ["qpu0", "a", "A-b_c.d", "x" * 128, "0", "ibm.eagle-1"])
    def test_valid(self, good):
        assert validate_resource_id(good) == good

    @pytest.mark.parametrize("bad", ["", "x" * 129, "has space", "coffee☕", "slash/у", None])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            validate_resource_id(bad)


class TestTarget:
    def test_round_trip_unchanged(self):
        target = Target(resource="qpu0", format="device-constraints-v1", body=b"\x00byte\xff", version=3)
        assert Target.from_json(target.to_json()) == target

    @given(st.binary(min_size=1, max_size=64), st.integers(min_value=1, max_value=9))
    def test_round_trip_property(self, body, version):
        target = Target(resource="r", format="f", body=body, version=version)
        assert Target.from_json(target.to_json()) == target


def test_canonical_counts_json_is_sorted_and_stable():
    a = canonical_counts_json({"11": 494, "00": 506})
    b = canonical_counts_json({"00": 506, "11": 494})
    assert a == b == '{"00":506,"11":494}'
