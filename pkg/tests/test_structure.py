import itertools
import random

import pytest

import fixture_builders as fb
from tablesmith.errors import ArityMismatch, EmptyTable, XmlParseError
from tablesmith.structure import (
    OcrBlock,
    TagSequence,
    detect_row_groups,
    fill_cells,
    is_noise_table,
    latexml_to_tags,
    word_xml_to_tags,
)

TWO_BY_TWO_EXPECTED = ("<tabular> <tbody> <tr> <cell_y> <cell_y> </tr> "
                 "<tr> <cell_y> <cell_n> </tr> </tbody> </tabular>")


def _word_table_ns(rows, **kw) -> bytes:
    # Standalone fragment with the namespace declared, as cut from a document.
    xml = fb.table_xml(rows, **kw)
    return xml.replace("<w:tbl>", f'<w:tbl xmlns:w="{fb.W_NS}">', 1).encode("utf-8")


class TestWordToTags:
    def test_two_by_two_with_one_empty_cell(self):
        tags = word_xml_to_tags(_word_table_ns([["a", "b"], ["c", ""]]))
        assert tags.to_string() == TWO_BY_TWO_EXPECTED

    def test_single_cell_with_text(self):
        tags = word_xml_to_tags(_word_table_ns([["only"]]))
        assert tags.tokens.count("<cell_y>") == 1
        assert tags.tokens.count("<cell_n>") == 0

    def test_whitespace_only_cell_is_empty(self):
        tags = word_xml_to_tags(_word_table_ns([["  \t  "]]))
        assert tags.tokens.count("<cell_n>") == 1

    def test_malformed_xml(self):
        with pytest.raises(XmlParseError):
            word_xml_to_tags(b"<w:tbl><w:tr>")

    def test_non_table_root(self):
        with pytest.raises(XmlParseError):
            word_xml_to_tags(b"<w:p xmlns:w='%s'/>" % fb.W_NS.encode())

    def test_no_rows_is_empty_table(self):
        xml = f'<w:tbl xmlns:w="{fb.W_NS}"><w:tblGrid/></w:tbl>'.encode()
        with pytest.raises(EmptyTable):
            word_xml_to_tags(xml)

    def test_header_rows_get_thead(self):
        tags = word_xml_to_tags(_word_table_ns([["h1", "h2"], ["a", "b"]], header_rows=1))
        s = tags.to_string()
        assert "<thead> <tr> <cell_y> <cell_y> </tr> </thead>" in s
        assert s.index("<thead>") < s.index("<tbody>")
        tags.validate()

    def test_no_header_means_single_tbody(self):
        tags = word_xml_to_tags(_word_table_ns([["a"], ["b"]]))
        assert "<thead>" not in tags.tokens

    def test_grid_span_expands_arity(self):
        tags = word_xml_to_tags(
            _word_table_ns([["wide", "x"], ["a", "b", "c"]], grid_spans={(0, 0): 2}))
        assert tags.row_patterns() == [["y", "y", "y"], ["y", "y", "y"]]
        assert tags.meta.get("spanned") is True

    def test_nested_table_text_counts_as_content(self):
        inner = fb.table_xml([["deep"]])
        cell = f"<w:tc>{inner}</w:tc>"
        tags = word_xml_to_tags(
            _word_table_ns([["a", "b"]], raw_extra_cells={(0, 1): cell}))
        assert tags.row_patterns() == [["y", "y"]]

    def test_round_trip_arity(self):
        rng = random.Random(42)
        for _ in range(50):
            nrows = 1 + rng.randrange(5)
            ncols = 1 + rng.randrange(5)
            rows = [[rng.choice(["txt", ""]) for _ in range(ncols)] for _ in range(nrows)]
            tags = word_xml_to_tags(_word_table_ns(rows))
            patterns = tags.row_patterns()
            assert len(patterns) == nrows
            assert all(len(p) == ncols for p in patterns)
            expected = [["y" if c else "n" for c in row] for row in rows]
            assert patterns == expected


LATEXML_2X2 = b"""<?xml version="1.0"?>
<document xmlns="http://dlmf.nist.gov/LaTeXML">
 <tabular>
  <tr><td>a</td><td>b</td></tr>
  <tr><td>c</td><td></td></tr>
 </tabular>
</document>"""


class TestLatexmlToTags:
    def test_same_target_as_word(self):
        tags = latexml_to_tags(LATEXML_2X2)
        assert tags.to_string() == TWO_BY_TWO_EXPECTED
        word_tags = word_xml_to_tags(_word_table_ns([["a", "b"], ["c", ""]]))
        assert tags.tokens == word_tags.tokens

    def test_empty_tabular_rejected(self):
        with pytest.raises(EmptyTable):
            latexml_to_tags(b"<tabular></tabular>")

    def test_output_validates(self):
        for xml in (LATEXML_2X2,
                    b"<tabular><tr><td>a</td></tr></tabular>",
                    b"<tabular><thead><tr><th>h</th></tr></thead>"
                    b"<tbody><tr><td>x</td></tr></tbody></tabular>"):
            latexml_to_tags(xml).validate()

    def test_malformed(self):
        with pytest.raises(XmlParseError):
            latexml_to_tags(b"<tabular><tr>")
        with pytest.raises(XmlParseError):
            latexml_to_tags(b"<other/>")

    def test_thead_preserved(self):
        xml = (b"<tabular><thead><tr><th>h1</th><th>h2</th></tr></thead>"
               b"<tbody><tr><td>a</td><td/></tr></tbody></tabular>")
        s = latexml_to_tags(xml).to_string()
        assert "<thead> <tr> <cell_y> <cell_y> </tr> </thead>" in s

    def test_colspan_expansion(self):
        xml = (b"<tabular><tr><td colspan='2'>wide</td><td>x</td></tr>"
               b"<tr><td>a</td><td>b</td><td>c</td></tr></tabular>")
        tags = latexml_to_tags(xml)
        assert tags.row_patterns() == [["y", "y", "y"], ["y", "y", "y"]]

    def test_rowspan_expansion(self):
        xml = (b"<tabular><tr><td rowspan='2'>tall</td><td>b</td></tr>"
               b"<tr><td></td></tr></tabular>")
        tags = latexml_to_tags(xml)
        assert tags.row_patterns() == [["y", "y"], ["y", "n"]]


class TestTagSequenceValidation:
    def test_reference_sequence_valid(self):
        TagSequence.from_string(TWO_BY_TWO_EXPECTED).validate()

    @pytest.mark.parametrize("bad", [
        "",
        "<tbody> </tbody>",
        "<tabular> <tbody> </tabular>",
        "<tabular> <cell_y> </tabular>",
        "<tabular> <tbody> <tr> <cell_y> </tr> </tbody> </tabular> <tr> </tr>",
        "<tabular> <tbody> <tr> <td> <cell_y> </tr> </td> </tbody> </tabular>",
        "<tabular> <tbody> <tr> <bogus> </tr> </tbody> </tabular>",
        "<tabular> <tr> <tabular> </tabular> </tr> </tabular>",
    ])
    def test_rejects(self, bad):
        assert not TagSequence.from_string(bad).is_valid()

    def test_cells_inside_td_allowed(self):
        TagSequence.from_string(
            "<tabular> <tbody> <tr> <td> <cell_y> </td> </tr> </tbody> </tabular>").validate()

    def test_vocabulary_closure_of_emitters(self):
        from tablesmith.structure import VOCABULARY

        rng = random.Random(3)
        for _ in range(40):
            rows = [[rng.choice(["v", ""]) for _ in range(1 + rng.randrange(4))]
                    for _ in range(1 + rng.randrange(4))]
            tags = word_xml_to_tags(_word_table_ns(rows))
            assert set(tags.tokens) <= set(VOCABULARY)


def _block(text, x, y, w=30, h=10):
    return OcrBlock(text=text, bbox=(x, y, w, h))


def oracle_row_groups(blocks, n_rows):
    """Brute force: choose the split set maximizing the chosen-gap sum."""
    ordered = sorted(blocks, key=lambda b: (b.v_center, b.left))
    if not ordered:
        return [[] for _ in range(n_rows)]
    cuts = range(len(ordered) - 1)
    gap = lambda i: ordered[i + 1].top - ordered[i].bottom
    n_splits = min(n_rows - 1, len(ordered) - 1)
    best = max(itertools.combinations(cuts, n_splits),
               key=lambda combo: (sum(gap(i) for i in combo),
                                  tuple(-i for i in combo)))
    groups = []
    start = 0
    for cut in sorted(best):
        groups.append(ordered[start:cut + 1])
        start = cut + 1
    groups.append(ordered[start:])
    while len(groups) < n_rows:
        groups.append([])
    return groups


class TestDetectRowGroups:
    def test_two_row_reference_example(self):
        blocks = [_block("1", 0, 0), _block("2", 50, 0), _block("3", 0, 40)]
        groups = detect_row_groups(blocks, 2)
        assert [[b.text for b in g] for g in groups] == [["1", "2"], ["3"]]

    def test_zero_blocks_two_empty_groups(self):
        assert detect_row_groups([], 2) == [[], []]

    def test_three_clear_bands_of_two(self):
        blocks = []
        for band, y in enumerate((0, 100, 200)):
            blocks += [_block(f"l{band}", 0, y), _block(f"r{band}", 60, y)]
        groups = detect_row_groups(blocks, 3)
        assert all(len(g) == 2 for g in groups)
        oracle = oracle_row_groups(blocks, 3)
        assert [[b.text for b in g] for g in groups] == \
            [[b.text for b in g] for g in oracle]

    def test_matches_bruteforce_on_random_separated_blocks(self):
        # Oracle holds whenever there are at least as many bands as rows;
        # with fewer bands the contract pads empty groups instead.
        rng = random.Random(7)
        for _ in range(100):
            blocks = []
            y = 0.0
            n_bands = rng.randrange(1, 8)
            for _ in range(n_bands):
                h = rng.uniform(5, 15)
                for _ in range(rng.randrange(1, 3)):
                    blocks.append(_block(f"b{len(blocks)}", rng.uniform(0, 100), y, h=h))
                y += h + rng.uniform(1, 50)
            n_rows = rng.randrange(1, n_bands + 1)
            ours = detect_row_groups(blocks, n_rows)
            oracle = oracle_row_groups(blocks, n_rows)
            assert [sorted(b.text for b in g) for g in ours] == \
                [sorted(b.text for b in g) for g in oracle]

    def test_fewer_blocks_than_rows_pads_trailing_empties(self):
        groups = detect_row_groups([_block("a", 0, 0)], 3)
        assert [[b.text for b in g] for g in groups] == [["a"], [], []]

    def test_translation_and_scale_invariance(self):
        blocks = [_block("1", 0, 0), _block("2", 50, 2), _block("3", 0, 40),
                  _block("4", 10, 90)]
        base = detect_row_groups(blocks, 3)

        def transform(b, s, dy):
            x, y, w, h = b.bbox
            return OcrBlock(text=b.text, bbox=(x, y * s + dy, w, h * s))

        for s, dy in ((2.0, 0.0), (0.5, 100.0), (3.0, -20.0)):
            moved = [transform(b, s, dy) for b in blocks]
            got = detect_row_groups(moved, 3)
            assert [[b.text for b in g] for g in got] == \
                [[b.text for b in g] for g in base]

    def test_multiline_cell_stays_in_one_band(self):
        # Two stacked lines overlap a tall neighbor cell, tiny gap below.
        blocks = [_block("l1", 0, 0, h=10), _block("l2", 0, 11, h=10),
                  _block("tall", 50, 0, h=21), _block("next", 0, 40, h=10)]
        groups = detect_row_groups(blocks, 2)
        assert sorted(b.text for b in groups[0]) == ["l1", "l2", "tall"]
        assert [b.text for b in groups[1]] == ["next"]

    def test_invalid_row_count(self):
        with pytest.raises(ValueError):
            detect_row_groups([], 0)


class TestFillCells:
    def test_reference_fill_example(self):
        tags = TagSequence.from_string(TWO_BY_TWO_EXPECTED)
        groups = detect_row_groups(
            [_block("1", 0, 0), _block("2", 50, 0), _block("3", 0, 40)], tags.n_rows)
        table = fill_cells(tags, groups)
        assert [c.content for c in table.rows[0]] == ["1", "2"]
        assert table.rows[1][0].content == "3"
        assert table.rows[1][1].kind == "n"
        assert table.rows[1][1].content is None
        assert not table.surplus_rows and not table.deficit_rows

    def test_all_empty_row_with_empty_group(self):
        tags = TagSequence.from_string(
            "<tabular> <tbody> <tr> <cell_n> <cell_n> </tr> </tbody> </tabular>")
        table = fill_cells(tags, [[]])
        assert [c.content for c in table.rows[0]] == [None, None]

    def test_surplus_blocks_joined_into_last_cell(self):
        tags = TagSequence.from_string(
            "<tabular> <tbody> <tr> <cell_y> </tr> </tbody> </tabular>")
        table = fill_cells(tags, [[_block("a", 0, 0), _block("b", 40, 0)]])
        assert table.rows[0][0].content == "a b"
        assert table.surplus_rows == (0,)

    def test_deficit_flags_row_and_leaves_empty_string(self):
        tags = TagSequence.from_string(
            "<tabular> <tbody> <tr> <cell_y> <cell_y> </tr> </tbody> </tabular>")
        table = fill_cells(tags, [[_block("only", 0, 0)]])
        assert [c.content for c in table.rows[0]] == ["only", ""]
        assert table.deficit_rows == (0,)

    def test_group_count_mismatch(self):
        tags = TagSequence.from_string(TWO_BY_TWO_EXPECTED)
        with pytest.raises(ArityMismatch):
            fill_cells(tags, [[]])

    def test_no_slot_row_preserves_text_as_unplaced(self):
        tags = TagSequence.from_string(
            "<tabular> <tbody> <tr> <cell_n> </tr> </tbody> </tabular>")
        table = fill_cells(tags, [[_block("orphan", 0, 0)]])
        assert table.unplaced == {0: ("orphan",)}

    def test_block_text_multiset_preserved(self):
        rng = random.Random(9)
        for _ in range(50):
            n_rows = rng.randrange(1, 5)
            pattern_tokens = []
            for _ in range(n_rows):
                cells = [rng.choice(["<cell_y>", "<cell_n>"])
                         for _ in range(rng.randrange(1, 5))]
                pattern_tokens += ["<tr>", *cells, "</tr>"]
            tags = TagSequence(tuple(["<tabular>", "<tbody>", *pattern_tokens,
                                      "</tbody>", "</tabular>"]))
            groups = []
            texts = []
            for r in range(n_rows):
                group = [_block(f"t{r}_{i}", i * 40, r * 30)
                         for i in range(rng.randrange(0, 5))]
                texts += [b.text for b in group]
                groups.append(group)
            table = fill_cells(tags, groups)
            recovered = []
            for r, row in enumerate(table.rows):
                for cell in row:
                    if cell.content:
                        recovered += cell.content.split()
                recovered += list(table.unplaced.get(r, ()))
            assert sorted(recovered) == sorted(texts)


def test_noise_filter():
    assert is_noise_table(TagSequence.from_string(
        "<tabular> <tbody> <tr> <cell_n> </tr> </tbody> </tabular>"))
    assert not is_noise_table(TagSequence.from_string(
        "<tabular> <tbody> <tr> <cell_y> </tr> </tbody> </tabular>"))
    assert not is_noise_table(TagSequence.from_string(TWO_BY_TWO_EXPECTED))
    assert is_noise_table(TagSequence.from_string(
        "<tabular> <tbody> <tr> <cell_n> </tr> </tbody> </tabular>"),
        drop_single_empty_cell=True)
