"""Unified diff parsing, before/after reconstruction and patch preprocessing."""

import re
from dataclasses import dataclass, field

from .errors import ContextMismatch, EmptyInput, MalformedDiff, ParseError
from .minilang import ast_to_graph, ingest_external_ast, parse_source, word_tokens

HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")

# Stands in for unchanged lines between hunks when no original file is given.
# It is a line comment, so the mini-language lexer skips it.
ELIDED = "// ..."

_TAGS = {" ": "context", "+": "plus", "-": "minus"}


@dataclass
class Hunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: list = field(default_factory=list)  # (tag, text)

    def count(self, tag):
        return sum(1 for t, _ in self.lines if t == tag)

    @property
    def old_lines(self):
        return [text for tag, text in self.lines if tag != "plus"]

    @property
    def new_lines(self):
        return [text for tag, text in self.lines if tag != "minus"]


@dataclass
class RawPatch:
    hunks: list
    old_path: str = None
    new_path: str = None

    def lines_with(self, tag):
        return [text for h in self.hunks for t, text in h.lines if t == tag]


@dataclass
class PreprocessedPatch:
    """The sextuple fed to the encoders.

    ``cc_p`` / ``cc_m`` are ``(line_number, text)`` pairs; plus-line numbers
    are 1-based positions in ``cap``, minus-line numbers positions in ``cbp``.
    """

    cc_p: list
    cc_m: list
    cbp: str
    cap: str
    g_cbp: object
    g_cap: object
    id: str = ""

    @property
    def plus_text(self):
        return "\n".join(text for _, text in self.cc_p)

    @property
    def minus_text(self):
        return "\n".join(text for _, text in self.cc_m)

    def changed_tokens(self):
        toks = set()
        for _, text in self.cc_p + self.cc_m:
            toks.update(word_tokens(text))
        return toks


def split_file_diffs(text):
    """Split a multi-file diff into one chunk of text per file."""
    chunks, current = [], []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        starts_file = line.startswith("diff ") or (
            line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ ")
        )
        if starts_file and any(l.startswith("@@") for l in current):
            chunks.append("\n".join(current) + "\n")
            current = []
        current.append(line)
        if line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ "):
            current.append(lines[i + 1])
            i += 1
        i += 1
    if current:
        chunks.append("\n".join(current) + "\n")
    return chunks


def parse_unified_diff(text):
    """Parse a single-file unified diff into a ``RawPatch``."""
    if not text or not text.strip():
        raise EmptyInput("diff text is empty")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    patch = RawPatch(hunks=[])
    i = 0
    while i < len(lines):
        line = lines[i]
        m = HUNK_RE.match(line)
        if m is None:
            if line.startswith("--- ") and not patch.hunks and patch.old_path is None:
                patch.old_path = line[4:].split("\t")[0].strip()
            elif line.startswith("+++ ") and not patch.hunks and patch.new_path is None:
                patch.new_path = line[4:].split("\t")[0].strip()
            elif patch.hunks and line[:1] in ("+", "-", " "):
                if line.startswith("--- ") or line.startswith("+++ "):
                    raise MalformedDiff(f"line {i + 1}: second file header; split multi-file diffs first")
                raise MalformedDiff(f"line {i + 1}: body line outside any hunk (header counts too small)")
            i += 1
            continue
        old_start, new_start = int(m.group(1)), int(m.group(3))
        old_len = int(m.group(2)) if m.group(2) is not None else 1
        new_len = int(m.group(4)) if m.group(4) is not None else 1
        hunk = Hunk(old_start, old_len, new_start, new_len)
        i += 1
        seen_old = seen_new = 0
        while seen_old < old_len or seen_new < new_len:
            if i >= len(lines):
                raise MalformedDiff(
                    f"hunk @@ -{old_start},{old_len} +{new_start},{new_len} @@ ends early "
                    f"(old {seen_old}/{old_len}, new {seen_new}/{new_len})"
                )
            body = lines[i]
            if body.startswith("\\"):
                i += 1
                continue
            tag = _TAGS.get(body[:1], "context" if body == "" else None)
            if tag is None or HUNK_RE.match(body):
                raise MalformedDiff(f"line {i + 1}: unexpected {body[:20]!r} inside hunk")
            hunk.lines.append((tag, body[1:]))
            if tag != "plus":
                seen_old += 1
            if tag != "minus":
                seen_new += 1
            if seen_old > old_len or seen_new > new_len:
                raise MalformedDiff(f"line {i + 1}: hunk body longer than its header counts")
            i += 1
        while i < len(lines) and lines[i].startswith("\\"):
            i += 1
        patch.hunks.append(hunk)
    if not patch.hunks:
        raise MalformedDiff("no hunks found")
    prev_end = 0
    for h in patch.hunks:
        if h.old_start < prev_end:
            raise MalformedDiff(f"hunk at old line {h.old_start} overlaps or is out of order")
        prev_end = h.old_start + h.old_len
    return patch


def _split(text):
    if text == "":
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def _join(lines):
    return "\n".join(lines) + "\n" if lines else ""


def _rebuild(raw, original):
    """Returns (before_lines, after_lines, minus_numbers, plus_numbers)."""
    before, after, minus_nums, plus_nums = [], [], [], []
    if original is None:
        prev_end = None
        for h in raw.hunks:
            if prev_end is not None and h.old_start > prev_end:
                before.append(ELIDED)
                after.append(ELIDED)
            for tag, text in h.lines:
                if tag != "plus":
                    before.append(text)
                    if tag == "minus":
                        minus_nums.append(len(before))
                if tag != "minus":
                    after.append(text)
                    if tag == "plus":
                        plus_nums.append(len(after))
            prev_end = h.old_start + h.old_len
        return before, after, minus_nums, plus_nums

    before = _split(original)
    cursor = 0
    for h in raw.hunks:
        start = h.old_start - 1 if h.old_len > 0 else h.old_start
        if start < cursor or start > len(before):
            raise ContextMismatch(f"hunk at old line {h.old_start} lies outside the original")
        after.extend(before[cursor:start])
        pos = start
        for tag, text in h.lines:
            if tag == "plus":
                after.append(text)
                plus_nums.append(len(after))
                continue
            if pos >= len(before) or before[pos] != text:
                found = before[pos] if pos < len(before) else "<eof>"
                raise ContextMismatch(f"old line {pos + 1}: expected {text!r}, found {found!r}")
            if tag == "context":
                after.append(text)
            else:
                minus_nums.append(pos + 1)
            pos += 1
        cursor = pos
    after.extend(before[cursor:])
    return before, after, minus_nums, plus_nums


def reconstruct(raw, original=None):
    """Rebuild ``(cbp, cap)``.

    With ``original`` the hunks are applied at their recorded line numbers and
    every context/minus line is checked. Without it the snippets are rebuilt
    from hunk context plus minus (before) or plus (after) lines.
    """
    before, after, _, _ = _rebuild(raw, original)
    return _join(before), _join(after)


def _find_block(lines, block, hint, start):
    if not block:
        return max(start, min(hint, len(lines)))
    n = len(block)
    last = len(lines) - n
    for offset in range(0, max(hint, len(lines)) + 1):
        for pos in (hint - offset, hint + offset):
            if start <= pos <= last and lines[pos:pos + n] == block:
                return pos
    return None


def apply_patch(raw, text):
    """Apply ``raw`` to ``text``, locating each hunk by content.

    Hunks are searched near their recorded position (like ``patch`` with an
    offset), which also works on snippets rebuilt without the original file.
    """
    lines = _split(text)
    # a rebuilt snippet has one ELIDED line per gap and no line-number meaning
    snippet = ELIDED in lines
    out = []
    cursor = 0
    prev_end = None
    for h in raw.hunks:
        pos = None
        if snippet:
            # hunks sit back to back, separated by a marker where there was a gap
            gap = prev_end is not None and h.old_start > prev_end
            pos = cursor + 1 if gap and lines[cursor:cursor + 1] == [ELIDED] else cursor
            if lines[pos:pos + len(h.old_lines)] != h.old_lines:
                pos = None
        if pos is None:
            hint = max(h.old_start - 1, cursor) if h.old_len else max(h.old_start, cursor)
            pos = _find_block(lines, h.old_lines, hint, cursor)
        if pos is None:
            raise ContextMismatch(f"cannot locate hunk at old line {h.old_start}")
        prev_end = h.old_start + h.old_len
        out.extend(lines[cursor:pos])
        out.extend(h.new_lines)
        cursor = pos + len(h.old_lines)
    out.extend(lines[cursor:])
    return _join(out)


def preprocess_patch(text, parser=parse_source, original=None, ast_before=None, ast_after=None, patch_id=""):
    """Build the ``PreprocessedPatch`` sextuple for one single-file diff.

    Pre-parsed ASTs (JSON AST documents) bypass ``parser`` for either side.
    Raises ``ParseError`` with ``side`` set to ``"before"`` or ``"after"``.
    """
    raw = parse_unified_diff(text)
    before, after, minus_nums, plus_nums = _rebuild(raw, original)
    cbp, cap = _join(before), _join(after)
    graphs = []
    for side, src, doc in (("before", cbp, ast_before), ("after", cap, ast_after)):
        if doc is not None:
            graphs.append(ingest_external_ast(doc))
            continue
        try:
            graphs.append(ast_to_graph(parser(src)))
        except ParseError as exc:
            exc.side = side
            exc.args = (f"{side}: {exc.message}",)
            exc.message = f"{side}: {exc.message}"
            raise
    return PreprocessedPatch(
        cc_p=[(n, after[n - 1]) for n in plus_nums],
        cc_m=[(n, before[n - 1]) for n in minus_nums],
        cbp=cbp,
        cap=cap,
        g_cbp=graphs[0],
        g_cap=graphs[1],
        id=patch_id,
    )
