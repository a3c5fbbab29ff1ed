from hypothesis import given, settings
from hypothesis import strategies as st

from placerec.refiner.parsing import parse_final_ranking


class TestGrammar:
    def test_simple_comma_separated(self):
        assert parse_final_ranking("FINAL_RANKING: 2,1", 2) == [2, 1]

    def test_spaces_and_commas_mixed(self):
        assert parse_final_ranking("FINAL_RANKING: 3, 1 ,2", 3) == [3, 1, 2]
        assert parse_final_ranking("FINAL_RANKING: 3 1 2", 3) == [3, 1, 2]

    def test_reasoning_before_final_line(self):
        text = "Candidate 3 shows the same storefront.\nFINAL_RANKING: 3, 1, 2"
        assert parse_final_ranking(text, 3) == [3, 1, 2]

    def test_last_matching_line_wins(self):
        text = "FINAL_RANKING: 1, 2\nreconsidering...\nFINAL_RANKING: 2, 1"
        assert parse_final_ranking(text, 2) == [2, 1]

    def test_out_of_range_value_fails(self):
        assert parse_final_ranking("FINAL_RANKING: 1, 2, 5", 3) is None

    def test_not_a_permutation_fails(self):
        assert parse_final_ranking("FINAL_RANKING: 1, 1, 2", 3) is None

    def test_wrong_count_fails(self):
        assert parse_final_ranking("FINAL_RANKING: 1, 2", 3) is None
        assert parse_final_ranking("FINAL_RANKING: 1, 2, 3, 3", 3) is None

    def test_no_marker_fails(self):
        assert parse_final_ranking("the best is candidate 2", 3) is None

    def test_marker_with_trailing_prose_is_not_a_match(self):
        assert parse_final_ranking("FINAL_RANKING: 2, 1 because it matches", 2) is None

    def test_malformed_last_marker_does_not_fall_back_to_earlier(self):
        # Only syntactically matching lines are candidates; a prose line
        # after the marker is not a match, so the earlier line still wins.
        text = "FINAL_RANKING: 2, 1\nFINAL_RANKING: banana"
        assert parse_final_ranking(text, 2) == [2, 1]

    def test_empty_and_weird_inputs(self):
        assert parse_final_ranking("", 3) is None
        assert parse_final_ranking("FINAL_RANKING:", 3) is None
        assert parse_final_ranking("FINAL_RANKING: ", 3) is None
        assert parse_final_ranking("FINAL_RANKING: one, two", 2) is None
        assert parse_final_ranking("FINAL_RANKING: 1,2", 0) is None

    def test_zero_not_accepted(self):
        assert parse_final_ranking("FINAL_RANKING: 0, 1", 2) is None

    def test_k_one(self):
        assert parse_final_ranking("FINAL_RANKING: 1", 1) == [1]


class TestFuzz:
    @settings(max_examples=300, deadline=None)
    @given(text=st.text(max_size=300), k=st.integers(min_value=1, max_value=12))
    def test_never_raises_and_only_returns_permutations(self, text, k):
        result = parse_final_ranking(text, k)
        assert result is None or sorted(result) == list(range(1, k + 1))

    @settings(max_examples=200, deadline=None)
    @given(
        k=st.integers(min_value=1, max_value=10),
        data=st.data(),
    )
    def test_structured_adversarial_lines(self, k, data):
        values = data.draw(
            st.lists(st.integers(min_value=0, max_value=15), min_size=0, max_size=15)
        )
        sep = data.draw(st.sampled_from([", ", ",", " ", " , "]))
        prefix = data.draw(st.sampled_from(["", "text before\n", "  "]))
        text = prefix + "FINAL_RANKING: " + sep.join(str(v) for v in values)
        result = parse_final_ranking(text, k)
        if result is not None:
            assert sorted(result) == list(range(1, k + 1))
            assert result == values
