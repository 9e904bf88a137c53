import re

import pytest

from keyweb.dom import parse_html, resolve_xpath, to_html, xpath_for
from keyweb.errors import EmptyDocument
from keyweb.observer import (
    build_observation,
    element_content,
    map_content_upward,
    selector_for,
)


def _doc_for(graph, url):
    return parse_html(graph.page(url).html)


def _observe(graph, url):
    page = graph.page(url)
    return build_observation(page.html, page.url, page.title)


class TestDomParsing:
    def test_fragment_gets_implicit_body(self):
        doc = parse_html("<button>hi</button>")
        assert doc.body is not None
        assert doc.body.child_elements()[0].tag == "button"

    def test_stray_end_tags_ignored(self):
        doc = parse_html("<body><div>x</div></span></body>")
        assert doc.body.child_elements()[0].own_text() == "x"

    def test_unclosed_elements_recovered(self):
        doc = parse_html("<body><div><a>one<div><a>two</div></body>")
        assert len(list(doc.root.walk())) >= 5

    def test_void_elements_do_not_nest(self):
        doc = parse_html("<body><input><a>after</a></body>")
        tags = [el.tag for el in doc.body.child_elements()]
        assert tags == ["input", "a"]

    def test_title_extracted(self):
        doc = parse_html("<html><head><title>Here</title></head><body><p>x</p></body></html>")
        assert doc.title == "Here"

    def test_serialization_round_trips_structure(self):
        html = '<html><head></head><body><div id="a"><a href="/x">A &amp; B</a></div></body></html>'
        doc = parse_html(html)
        again = parse_html(to_html(doc.root))
        node = resolve_xpath(again, '//*[@id="a"]')[0]
        assert node.child_elements()[0].own_text() == "A & B"


class TestSelectors:
    def test_id_anchored_span_shape(self):
        html = (
            '<body><div id="dlc_purchase_action">'
            "<div><span>3 items</span></div>"
            "<div><a><span>Add all DLC</span></a></div>"
            "</div></body>"
        )
        doc = parse_html(html)
        anchor = resolve_xpath(doc, '//*[@id="dlc_purchase_action"]/div[2]/a')
        assert len(anchor) == 1
        span = anchor[0].child_elements()[0]
        assert xpath_for(doc, span) == '//*[@id="dlc_purchase_action"]/div[2]/a/span'

    def test_body_path(self):
        doc = parse_html("<html><body><p>x</p></body></html>")
        assert xpath_for(doc, doc.body) == "/html/body"

    def test_sibling_index(self):
        doc = parse_html("<body><div><a>1</a></div><div><a>2</a></div></body>")
        second = doc.body.child_elements()[1]
        path = xpath_for(doc, second)
        assert path.endswith("/div[2]")
        assert resolve_xpath(doc, path) == [second]

    def test_duplicate_id_not_used_as_anchor(self):
        doc = parse_html('<body><div id="d"><a>1</a></div><div id="d"><a>2</a></div></body>')
        first_a = doc.body.child_elements()[0].child_elements()[0]
        path = xpath_for(doc, first_a)
        assert path.startswith("/html/body")
        assert resolve_xpath(doc, path) == [first_a]

    def test_resolve_single_quote_id(self):
        doc = parse_html('<body><div id="z"><a>x</a></div></body>')
        assert len(resolve_xpath(doc, "//*[@id='z']/a")) == 1

    def test_resolve_unknown(self):
        doc = parse_html("<body><div></div></body>")
        assert resolve_xpath(doc, '//*[@id="missing"]') == []
        assert resolve_xpath(doc, "/html/body/span") == []

    def test_round_trip_full_fixture_corpus(self, graph):
        for url, page in graph.pages.items():
            doc = parse_html(page.html)
            obs = build_observation(page.html, url, page.title)
            for element in obs.id_map.values():
                nodes = resolve_xpath(doc, element.selector_path)
                assert len(nodes) == 1, (url, element.selector_path)
                assert xpath_for(doc, nodes[0]) == element.selector_path
                assert selector_for(doc, nodes[0]) == element.selector_path


class TestContentMapping:
    def test_span_maps_to_anchor_one_hop(self):
        doc = parse_html("<body><a><span>text</span></a></body>")
        span = doc.body.child_elements()[0].child_elements()[0]
        assert map_content_upward(span, 5).tag == "a"

    def test_recursion_limit_discards(self):
        html = "<body><button>" + "<div>" * 6 + "deep" + "</div>" * 6 + "</button></body>"
        doc = parse_html(html)
        node = doc.body.child_elements()[0]
        for _ in range(6):
            node = node.child_elements()[0]
        assert map_content_upward(node, 5) is None

    def test_interactive_leaf_is_its_own_target(self):
        doc = parse_html("<body><button>go</button></body>")
        button = doc.body.child_elements()[0]
        assert map_content_upward(button, 5) is button

    def test_depth_limit_must_be_positive(self):
        doc = parse_html("<body><span>x</span></body>")
        with pytest.raises(ValueError):
            map_content_upward(doc.body.child_elements()[0], 0)

    def test_button_takes_child_span_content(self, graph):
        obs = _observe(graph, "https://store.example/cart")
        contents = {el.content for el in obs.id_map.values()}
        assert "Proceed to Checkout" in contents

    def test_content_priority_value_over_placeholder(self):
        doc = parse_html('<body><input value="filled" placeholder="hint"></body>')
        assert element_content(doc.body.child_elements()[0]) == "filled"

    def test_content_beyond_depth_limit_not_emitted(self):
        html = "<body><button>" + "<div>" * 6 + "deep" + "</div>" * 6 + "</button></body>"
        obs = build_observation(html, "https://x.example/", "t")
        assert obs.tree_text == ""


class TestFiltering:
    def test_search_textarea_line_shape(self, graph):
        obs = _observe(graph, "https://search.example/")
        assert re.search(r"\[\d+\] textarea 'Search'", obs.tree_text)

    def test_disabled_button_absent(self, graph):
        obs = _observe(graph, "https://movies.example/top")
        assert "Load More" not in obs.tree_text

    def test_aria_hidden_subtree_absent(self, graph):
        obs = _observe(graph, "https://movies.example/top")
        assert "internal" not in obs.tree_text

    def test_hidden_input_absent(self, graph):
        obs = _observe(graph, "https://biz.example/")
        assert "token-123" not in obs.tree_text

    def test_display_none_absent(self):
        html = '<body><a style="display: none">ghost</a><a>real</a></body>'
        obs = build_observation(html, "https://x.example/", "t")
        assert "ghost" not in obs.tree_text and "real" in obs.tree_text

    def test_empty_document(self):
        with pytest.raises(EmptyDocument):
            build_observation("<html><head><title>t</title></head></html>",
                              "https://x.example/", "t")

    def test_content_quote_escaping(self):
        obs = build_observation("<body><button>It's here</button></body>",
                                "https://x.example/", "t")
        assert "'It\\'s here'" in obs.tree_text


def _shape_lines(tree_text):
    return [re.sub(r"\[\d+\]", "[id]", line) for line in tree_text.splitlines()]


class TestTreeText:
    def test_line_per_id_map_entry(self, graph):
        for url in graph.pages:
            obs = _observe(graph, url)
            lines = obs.tree_text.splitlines()
            assert len(lines) == len(obs.id_map)
            for i, (element_id, element) in enumerate(sorted(obs.id_map.items())):
                assert lines[i].lstrip().startswith(f"[{element_id}] {element.tag} ")

    def test_ids_pre_order_from_one(self, graph):
        obs = _observe(graph, "https://movies.example/coming-soon")
        assert sorted(obs.id_map) == list(range(1, len(obs.id_map) + 1))

    def test_determinism(self, graph):
        page = graph.page("https://biz.example/")
        first = build_observation(page.html, page.url, page.title)
        second = build_observation(page.html, page.url, page.title)
        assert first.tree_text.encode() == second.tree_text.encode()
        assert first == second

    def test_no_empty_content_lines(self, graph):
        for url in graph.pages:
            obs = _observe(graph, url)
            assert all(element.content for element in obs.id_map.values())

    def test_monotone_hidden_removal(self, graph):
        for url in list(graph.pages)[:6]:
            page = graph.page(url)
            base = build_observation(page.html, page.url, page.title)
            base_lines = _shape_lines(base.tree_text)
            for element in base.id_map.values():
                doc = parse_html(page.html)
                node = resolve_xpath(doc, element.selector_path)[0]
                node.attrs["hidden"] = ""
                mutated = build_observation(to_html(doc.root), page.url, page.title)
                expected = list(base_lines)
                expected.remove(
                    _shape_lines(base.tree_text)[
                        sorted(base.id_map).index(element.element_id)
                    ]
                )
                assert _shape_lines(mutated.tree_text) == expected, (url, element)
