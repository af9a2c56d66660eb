import numpy as np
import pytest

from recolor.coloring import (
    ColorState,
    apply_action,
    as_action_map,
    as_image,
    as_label_map,
    colors_from_planes,
    decode_instances,
    label_components,
    relabel_consecutive,
    remove_small_segments,
)


def flood_fill_components(values, connectivity=4):
    """Reference labeling: BFS over equal-value pixels, no scipy.

    Components are numbered in (value ascending, raster first-encounter)
    order, value 0 excluded, matching the documented output order.
    """
    arr = np.asarray(values)
    h, w = arr.shape
    if connectivity == 4:
        moves = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        moves = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                 if (dy, dx) != (0, 0)]
    out = np.zeros((h, w), dtype=np.int64)
    next_id = 0
    for val in sorted(np.unique(arr).tolist()):
        if val == 0:
            continue
        for sy in range(h):
            for sx in range(w):
                if arr[sy, sx] != val or out[sy, sx] != 0:
                    continue
                next_id += 1
                queue = [(sy, sx)]
                out[sy, sx] = next_id
                while queue:
                    y, x = queue.pop()
                    for dy, dx in moves:
                        ny, nx = y + dy, x + dx
                        if (0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0
                                and arr[ny, nx] == val):
                            out[ny, nx] = next_id
                            queue.append((ny, nx))
    return out


def run_actions(height, width, max_steps, actions):
    state = ColorState.initial(height, width, max_steps)
    for a in actions:
        state = apply_action(state, np.asarray(a))
    return state


class TestColorState:
    def test_initial_all_zero(self):
        state = ColorState.initial(4, 6, 5)
        assert state.colors.shape == (4, 6)
        assert state.planes.shape == (4, 6, 5)
        assert not state.colors.any()
        assert state.step == 0 and not state.finished

    def test_single_bit_update_rule(self):
        # color 11 after four steps, then bit 1 at step 4 adds 2**4
        state = run_actions(1, 1, 5, [[[1]], [[1]], [[0]], [[1]]])
        assert state.colors[0, 0] == 11
        state = apply_action(state, [[1]])
        assert state.colors[0, 0] == 27

    def test_two_pixel_sequence(self):
        state = run_actions(2, 1, 3, [[[1], [0]], [[0], [0]], [[1], [1]]])
        assert state.colors[:, 0].tolist() == [5, 4]
        assert state.finished

    def test_states_are_immutable(self):
        state = ColorState.initial(2, 2, 3)
        with pytest.raises(ValueError):
            state.colors[0, 0] = 1
        nxt = apply_action(state, np.ones((2, 2), dtype=np.uint8))
        assert not state.colors.any()  # original untouched
        assert nxt.colors.sum() == 4

    def test_step_past_end_rejected(self):
        state = run_actions(1, 1, 1, [[[1]]])
        with pytest.raises(ValueError):
            apply_action(state, [[0]])

    def test_plane_color_consistency_random(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            t_max = int(rng.integers(1, 9))
            state = ColorState.initial(5, 4, t_max)
            for _ in range(t_max):
                state = apply_action(state, rng.integers(0, 2, (5, 4)))
            np.testing.assert_array_equal(
                colors_from_planes(state.planes), state.colors)
            assert state.colors.max() <= 2 ** t_max - 1

    def test_max_steps_bounds(self):
        with pytest.raises(ValueError):
            ColorState.initial(2, 2, 0)
        with pytest.raises(ValueError):
            ColorState.initial(2, 2, 32)


class TestValidators:
    def test_action_values_checked(self):
        with pytest.raises(ValueError):
            as_action_map([[0, 2]])
        with pytest.raises(ValueError):
            as_action_map([[0, 1]], shape=(2, 2))
        assert as_action_map([[0, 1]]).dtype == np.uint8

    def test_label_map_checked(self):
        with pytest.raises(ValueError):
            as_label_map([1, 2, 3])
        with pytest.raises(ValueError):
            as_label_map([[-1, 0]])
        with pytest.raises(ValueError):
            as_label_map([[70000]])
        assert as_label_map([[3, 0]]).dtype == np.uint16

    def test_image_shapes_and_range(self):
        assert as_image(np.zeros((4, 5))).shape == (4, 5, 1)
        assert as_image(np.zeros((4, 5, 3))).shape == (4, 5, 3)
        with pytest.raises(ValueError):
            as_image(np.zeros((4, 5, 2)))
        with pytest.raises(ValueError):
            as_image(np.full((2, 2), 1.5))


class TestDecoding:
    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_label_components_matches_flood_fill(self, connectivity):
        rng = np.random.default_rng(11)
        for _ in range(40):
            values = rng.integers(0, 4, (9, 12))
            got = label_components(values, connectivity)
            want = flood_fill_components(values, connectivity)
            np.testing.assert_array_equal(got, want)

    def test_diagonal_touch(self):
        values = np.array([[1, 0], [0, 1]])
        assert label_components(values, 4).max() == 2
        assert label_components(values, 8).max() == 1

    def test_shared_color_far_apart_splits(self):
        state = run_actions(1, 5, 1, [[[1, 1, 0, 1, 1]]])
        np.testing.assert_array_equal(
            decode_instances(state), [[1, 1, 0, 2, 2]])

    def test_decode_requires_finished_state(self):
        state = ColorState.initial(3, 3, 2)
        with pytest.raises(ValueError):
            decode_instances(state)

    def test_relabel_consecutive(self):
        out = relabel_consecutive([[0, 7, 3, 7]])
        np.testing.assert_array_equal(out, [[0, 2, 1, 2]])

    def test_remove_small_segments(self):
        labels = np.array([[5, 5, 0, 9], [5, 0, 0, 0]])
        out = remove_small_segments(labels, min_area=2)
        np.testing.assert_array_equal(out, [[1, 1, 0, 0], [1, 0, 0, 0]])
        np.testing.assert_array_equal(
            remove_small_segments(labels, min_area=1),
            [[1, 1, 0, 2], [1, 0, 0, 0]])

    def test_remove_small_can_empty(self):
        out = remove_small_segments(np.ones((2, 2), dtype=np.uint16), 9)
        assert not out.any()
