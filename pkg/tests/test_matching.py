import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from keyweb.errors import IncompatiblePair, MalformedUrl, UnparseableReply
from keyweb.judge import StubJudge
from keyweb.matching import (
    COMPATIBILITY,
    MatchFunction,
    SemanticReference,
    Target,
    UrlComponent,
    UrlReference,
    ValueReference,
    check_compatibility,
    match_element_path,
    match_element_value,
    match_url,
    normalize_selector,
    normalize_url,
    parse_judge_reply,
    render_judge_reply,
)

ONE = Fraction(1)
ZERO = Fraction(0)


class TestNormalizeUrl:
    def test_case_port_and_trailing_slash(self):
        norm = normalize_url("HTTPS://Example.com:443/a/?x=1")
        assert norm.scheme == "https"
        assert norm.host == "example.com"
        assert norm.port is None
        assert norm.path == "/a"
        assert norm.query == (("x", "1"),)

    def test_query_order_insensitive(self):
        assert normalize_url("https://e.com/p?b=2&a=1") == normalize_url(
            "https://e.com/p?a=1&b=2"
        )

    def test_not_a_url(self):
        with pytest.raises(MalformedUrl):
            normalize_url("notaurl")

    @pytest.mark.parametrize("bad", ["", "ftp://host/x", "https://", "http://host:badport/"])
    def test_malformed_variants(self, bad):
        with pytest.raises(MalformedUrl):
            normalize_url(bad)

    def test_fragment_discarded(self):
        assert normalize_url("https://e.com/p#frag") == normalize_url("https://e.com/p")

    def test_root_path_kept(self):
        assert normalize_url("https://e.com").path == "/"
        assert normalize_url("https://e.com/").path == "/"

    def test_non_default_port_kept(self):
        assert normalize_url("http://e.com:8080/x").port == 8080

    @pytest.mark.parametrize("url", [
        "https://e.com",
        "http://E.com:80/a/b/",
        "https://e.com/p?b=2&a=1&a=0",
        "https://e.com/a%20b?q=hello%20world#x",
        "https://e.com/p?empty=&other=1",
    ])
    def test_idempotent(self, url):
        once = normalize_url(url)
        assert normalize_url(once.canonical) == once

    @given(
        host=st.from_regex(r"[a-z][a-z0-9]{0,10}\.example", fullmatch=True),
        path=st.lists(st.from_regex(r"[A-Za-z0-9 %~._-]{1,8}", fullmatch=True), max_size=4),
        params=st.lists(
            st.tuples(st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True),
                      st.from_regex(r"[A-Za-z0-9 ._-]{0,8}", fullmatch=True)),
            max_size=4,
        ),
    )
    def test_idempotent_generated(self, host, path, params):
        from urllib.parse import quote, urlencode

        url = f"https://{host}/" + "/".join(quote(p) for p in path)
        if params:
            url += "?" + urlencode(params)
        once = normalize_url(url)
        assert normalize_url(once.canonical) == once


class TestMatchUrl:
    YELP = "https://www.yelp.com/search?find_desc=parking&attrs=WiFi.free"

    def test_query_param_include_passes(self):
        ref = UrlReference(value="WiFi.free", component=UrlComponent.QUERY_PARAM,
                           param_name="attrs")
        result = match_url(ref, self.YELP, MatchFunction.INCLUDE)
        assert result.passed and result.score == ONE

    def test_query_param_missing_scores_zero(self):
        ref = UrlReference(value="WiFi.free", component=UrlComponent.QUERY_PARAM,
                           param_name="attrs")
        result = match_url(ref, "https://www.yelp.com/search?find_desc=parking",
                           MatchFunction.INCLUDE)
        assert not result.passed and result.score == ZERO

    def test_exact_full_identity(self):
        ref = UrlReference(value=self.YELP)
        result = match_url(ref, self.YELP, MatchFunction.EXACT)
        assert result.passed and result.score == ONE

    def test_exact_full_normalizes(self):
        ref = UrlReference(value="https://E.com:443/a/?b=2&a=1")
        assert match_url(ref, "https://e.com/a?a=1&b=2", MatchFunction.EXACT).passed

    def test_exact_query_param(self):
        ref = UrlReference(value="adventure", component=UrlComponent.QUERY_PARAM,
                           param_name="genre")
        assert match_url(ref, "https://m.example/x?genre=adventure", MatchFunction.EXACT).passed
        assert not match_url(ref, "https://m.example/x?genre=adventures",
                             MatchFunction.EXACT).passed

    def test_include_query_param_substring(self):
        ref = UrlReference(value="advent", component=UrlComponent.QUERY_PARAM,
                           param_name="genre")
        assert match_url(ref, "https://m.example/x?genre=adventure",
                         MatchFunction.INCLUDE).passed

    def test_path_scopes(self):
        ref = UrlReference(value="/app/dota2", component=UrlComponent.PATH)
        assert match_url(ref, "https://store.example/app/dota2/", MatchFunction.EXACT).passed
        ref_include = UrlReference(value="/app", component=UrlComponent.PATH)
        assert match_url(ref_include, "https://store.example/app/dota2",
                         MatchFunction.INCLUDE).passed

    def test_include_full_substring(self):
        ref = UrlReference(value="WiFi.free")
        assert match_url(ref, self.YELP, MatchFunction.INCLUDE).passed

    def test_semantic_url_uses_judge(self):
        judge = StubJudge()
        ref = SemanticReference(instruction="Decide whether is searching for parking")
        result = match_url(ref, "https://biz.example/search?find_desc=parking",
                           MatchFunction.SEMANTIC, judge)
        assert result.passed

    def test_malformed_observed(self):
        with pytest.raises(MalformedUrl):
            match_url(UrlReference(value="https://e.com/"), "junk", MatchFunction.EXACT)


class TestMatchElementPath:
    DLC = '//*[@id="dlc_purchase_action"]/div[2]/a/span'

    def test_identity(self):
        result = match_element_path(self.DLC, self.DLC)
        assert result.passed and result.score == ONE

    def test_quote_style_unified(self):
        single = "//*[@id='dlc_purchase_action']/div[2]/a/span"
        assert match_element_path(self.DLC, single).passed

    def test_structural_mismatch(self):
        result = match_element_path("/div[1]/a", "/div[2]/a")
        assert not result.passed and result.score == ZERO

    def test_whitespace_collapsed(self):
        assert match_element_path("/html/body / div[1]", " /html/body / div[1] ").passed

    def test_selector_normalization(self):
        assert normalize_selector("//*[@id='x']  /a") == '//*[@id="x"] /a'


class TestMatchElementValue:
    def test_semantic_new_york_exact_one(self, judge):
        ref = SemanticReference(instruction="Decide whether the place is New York")
        assert match_element_value(ref, "new york", MatchFunction.SEMANTIC, judge).score == ONE

    def test_semantic_brooklyn_zero(self, judge):
        ref = SemanticReference(instruction="Decide whether the place is New York")
        result = match_element_value(ref, "Brooklyn", MatchFunction.SEMANTIC, judge)
        assert result.score == ZERO and not result.passed

    def test_include_washington(self):
        ref = ValueReference(expected="Washington")
        assert match_element_value(ref, "Washington D.C.", MatchFunction.INCLUDE).passed

    def test_include_case_insensitive(self):
        ref = ValueReference(expected="washington")
        assert match_element_value(ref, "WASHINGTON d.c.", MatchFunction.INCLUDE).passed

    def test_exact_whitespace_collapse(self):
        ref = ValueReference(expected="new  york")
        assert match_element_value(ref, " new york ", MatchFunction.EXACT).passed

    def test_exact_case_sensitive(self):
        ref = ValueReference(expected="New York")
        assert not match_element_value(ref, "new york", MatchFunction.EXACT).passed

    def test_threshold_controls_pass(self, judge):
        ref = SemanticReference(instruction="Decide whether I'm looking for red clothes")
        strict = match_element_value(ref, "bright red Clothing", MatchFunction.SEMANTIC,
                                     judge, threshold=Fraction(9, 10))
        lenient = match_element_value(ref, "bright red Clothing", MatchFunction.SEMANTIC,
                                      judge, threshold=Fraction(8, 10))
        assert strict.score == Fraction(85, 100) and not strict.passed
        assert lenient.passed


class TestCompatibility:
    def test_matrix_exhaustive(self):
        expected_allowed = {
            (Target.URL, MatchFunction.EXACT),
            (Target.URL, MatchFunction.INCLUDE),
            (Target.URL, MatchFunction.SEMANTIC),
            (Target.ELEMENT_PATH, MatchFunction.EXACT),
            (Target.ELEMENT_VALUE, MatchFunction.EXACT),
            (Target.ELEMENT_VALUE, MatchFunction.INCLUDE),
            (Target.ELEMENT_VALUE, MatchFunction.SEMANTIC),
        }
        assert set(COMPATIBILITY) == expected_allowed
        for target in Target:
            for fn in MatchFunction:
                if (target, fn) in expected_allowed:
                    check_compatibility(target, fn)
                else:
                    with pytest.raises(IncompatiblePair):
                        check_compatibility(target, fn)


class TestJudgeReplies:
    def test_parse_example_one(self):
        assert parse_judge_reply('"1", the strings are identical') == ONE

    def test_parse_example_graded(self):
        assert parse_judge_reply('"0.85", bright red is a kind of red') == Fraction(85, 100)

    def test_parse_no_score(self):
        with pytest.raises(UnparseableReply):
            parse_judge_reply("no score here")

    def test_clamps_out_of_range(self):
        assert parse_judge_reply('"1.5", overeager') == ONE
        assert parse_judge_reply('"-0.25", negative') == ZERO

    def test_round_trip_two_decimals(self):
        for hundredths in range(101):
            score = Fraction(hundredths, 100)
            assert parse_judge_reply(render_judge_reply(score, "why")) == score

    def test_render_shape(self):
        assert render_judge_reply(ONE, "same") == '"1.00", same'


class TestStubJudge:
    def test_pure_function_of_inputs(self, judge):
        rng = random.Random(7)
        words = ["new york", "Brooklyn", "red", "clothes", "parking", "Washington", "zz"]
        pairs = [
            (
                "Decide whether " + " ".join(rng.choices(words, k=3)),
                " ".join(rng.choices(words, k=2)),
            )
            for _ in range(1000)
        ]
        first = [judge.judge(rule, answer) for rule, answer in pairs]
        second = [judge.judge(rule, answer) for rule, answer in pairs]
        assert first == second

    def test_containment_fallback(self, judge):
        verdict = judge.judge("Decide whether the city is Lisbon", "Lisbon")
        assert verdict.score == ONE

    def test_table_file_loading(self):
        judge = StubJudge.from_table_json(
            b'{"version": 1, "rules": [{"rule_pattern": "color", '
            b'"answer_pattern": "blue", "score": 0.5}]}'
        )
        assert judge.judge("pick a color", "blue-ish").score == Fraction(1, 2)
