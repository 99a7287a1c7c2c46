"""Lifecycle state machine and trim window checks."""

import pytest
from hypothesis import given, strategies as st

from signcollect.domain import (
    INITIAL_STATE,
    LifecycleEvent,
    LifecycleState,
    TrimWindow,
    initial_state,
    replay,
    transition,
    validate_trim,
)
from signcollect.errors import IllegalTransition, TrimBoundsError, TrimOrderError

S = LifecycleState
E = LifecycleEvent

# Independent oracle: the legal pairs written out again by hand, state and
# event spelled as wire strings so a typo in the enum would also be caught.
HAND_TABLE = {
    ("PendingVideoValidation", "VideoVerdictCorrect"): "PendingAnnotation",
    ("PendingVideoValidation", "VideoVerdictIncorrect"): "VideoRejected",
    ("PendingAnnotation", "AnnotationSubmitted"): "PendingAnnotationValidation",
    ("PendingAnnotationValidation", "AnnotationVerdictAccepted"): "AnnotationValidated",
    ("PendingAnnotationValidation", "AnnotationVerdictCorrected"): "AnnotationValidated",
    ("VideoRejected", "Requeue"): "PendingVideoValidation",
}


def test_submission_enters_validation():
    assert initial_state() is S.PENDING_VIDEO_VALIDATION


def test_correct_verdict_moves_to_annotation():
    assert transition(S.PENDING_VIDEO_VALIDATION, E.VIDEO_VERDICT_CORRECT) is S.PENDING_ANNOTATION


def test_terminal_state_rejects_everything():
    with pytest.raises(IllegalTransition):
        transition(S.ANNOTATION_VALIDATED, E.ANNOTATION_SUBMITTED)


def test_full_pair_table_brute_force():
    legal = 0
    illegal = 0
    for state in S:
        for event in E:
            expected = HAND_TABLE.get((state.value, event.value))
            if expected is None:
                with pytest.raises(IllegalTransition):
                    transition(state, event)
                illegal += 1
            else:
                assert transition(state, event).value == expected
                legal += 1
    assert legal == 6
    assert illegal == 29
    assert legal + illegal == len(S) * len(E) == 35


def test_all_states_reachable_from_initial():
    seen = {INITIAL_STATE}
    frontier = [INITIAL_STATE]
    while frontier:
        state = frontier.pop()
        for event in E:
            try:
                nxt = transition(state, event)
            except IllegalTransition:
                continue
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    assert seen == set(S)


def test_replay_accepts_legal_paths():
    path = [
        E.VIDEO_SUBMITTED,
        E.VIDEO_VERDICT_INCORRECT,
        E.REQUEUE,
        E.VIDEO_VERDICT_CORRECT,
        E.ANNOTATION_SUBMITTED,
        E.ANNOTATION_VERDICT_CORRECTED,
    ]
    assert replay(path) is S.ANNOTATION_VALIDATED


def test_replay_rejects_non_paths():
    with pytest.raises(IllegalTransition):
        replay([E.VIDEO_SUBMITTED, E.ANNOTATION_SUBMITTED])
    with pytest.raises(IllegalTransition):
        replay([])
    with pytest.raises(IllegalTransition):
        replay([E.REQUEUE])


class TestValidateTrim:
    def test_representative_duration(self):
        # 13374 ms is a realistic clip duration for this corpus
        trim = TrimWindow(500, 13000)
        assert validate_trim(trim, 13374) is trim

    def test_identity_window(self):
        trim = TrimWindow(0, 9000)
        assert validate_trim(trim, 9000) is trim

    def test_order_violation(self):
        with pytest.raises(TrimOrderError):
            validate_trim(TrimWindow(5000, 4000), 13374)

    def test_bounds_violations(self):
        with pytest.raises(TrimBoundsError):
            validate_trim(TrimWindow(0, 10001), 10000)
        with pytest.raises(TrimBoundsError):
            validate_trim(TrimWindow(-1, 500), 10000)

    def test_exhaustive_small_grid(self):
        # success iff 0 <= start < end <= duration, checked over all pairs
        duration = 12
        for start in range(-3, 16):
            for end in range(-3, 16):
                ok = 0 <= start < end <= duration
                if ok:
                    validate_trim(TrimWindow(start, end), duration)
                else:
                    with pytest.raises((TrimOrderError, TrimBoundsError)):
                        validate_trim(TrimWindow(start, end), duration)

    @given(st.integers(-100, 100), st.integers(-100, 100), st.integers(1, 100))
    def test_iff_property(self, start, end, duration):
        ok = 0 <= start < end <= duration
        try:
            validate_trim(TrimWindow(start, end), duration)
            assert ok
        except (TrimOrderError, TrimBoundsError):
            assert not ok
