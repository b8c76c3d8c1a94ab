"""Regenerate the bundled toy corpus from the before/after snippets below.

Diffs carry full-file context so that the reconstructed before/after code
parses as a complete class.
"""

import difflib
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "patcherizer", "data")

# (before, after, message, label, bug report)
PAIRS = [
    (
        "class Counter {\n  int count;\n  int next() {\n    count = count + 1;\n    return count;\n  }\n}\n",
        "class Counter {\n  int count;\n  int next() {\n    count = count + 2;\n    return count;\n  }\n}\n",
        "increase counter step",
        0,
        "counter should advance by one on every call",
    ),
    (
        "class Stack {\n  int size;\n  int pop() {\n    size = size - 1;\n    return size;\n  }\n}\n",
        "class Stack {\n  int size;\n  int pop() {\n    if (size > 0) {\n      size = size - 1;\n    }\n    return size;\n  }\n}\n",
        "guard pop against empty stack",
        1,
        "pop on an empty stack makes size negative",
    ),
    (
        "class Account {\n  int balance;\n  void deposit(int amount) {\n    balance = amount;\n  }\n}\n",
        "class Account {\n  int balance;\n  void deposit(int amount) {\n    balance = balance + amount;\n  }\n}\n",
        "add amount to balance on deposit",
        1,
        "deposit overwrites the balance instead of adding",
    ),
    (
        "class Timer {\n  int ticks;\n  void reset() {\n    ticks = 1;\n  }\n}\n",
        "class Timer {\n  int ticks;\n  void reset() {\n    ticks = 0;\n  }\n}\n",
        "reset timer to zero",
        1,
        "reset leaves one tick on the timer",
    ),
    (
        "class Buffer {\n  int limit;\n  boolean full(int n) {\n    return n > limit;\n  }\n}\n",
        "class Buffer {\n  int limit;\n  boolean full(int n) {\n    return n == limit;\n  }\n}\n",
        "fix full check in buffer",
        0,
        "buffer reports full one element too late",
    ),
    (
        "class Logger {\n  int level;\n  void log(String msg) {\n    print(msg);\n  }\n}\n",
        "class Logger {\n  int level;\n  void log(String msg) {\n    if (level > 0) {\n      print(msg);\n    }\n  }\n}\n",
        "skip logging when level is zero",
        1,
        "logger prints messages even when disabled",
    ),
    (
        "class Point {\n  int x;\n  int y;\n  int sum() {\n    return x + x;\n  }\n}\n",
        "class Point {\n  int x;\n  int y;\n  int sum() {\n    return x + y;\n  }\n}\n",
        "use y in point sum",
        1,
        "sum of point ignores the y coordinate",
    ),
    (
        "class Cache {\n  int hits;\n  int get(int key) {\n    return key;\n  }\n}\n",
        "class Cache {\n  int hits;\n  int get(int key) {\n    hits = hits + 1;\n    return key;\n  }\n}\n",
        "count cache hits",
        1,
        "cache never records hits",
    ),
    (
        "class Queue {\n  int head;\n  int tail;\n  boolean empty() {\n    return head != tail;\n  }\n}\n",
        "class Queue {\n  int head;\n  int tail;\n  boolean empty() {\n    return head == tail;\n  }\n}\n",
        "fix inverted empty check",
        1,
        "empty queue is reported as non empty",
    ),
    (
        "class Parser {\n  int pos;\n  void skip() {\n    pos = pos + 1;\n  }\n}\n",
        "class Parser {\n  int pos;\n  int line;\n  void skip() {\n    pos = pos + 1;\n  }\n}\n",
        "add line field to parser",
        0,
        "parser skips past the end of input",
    ),
    (
        "class Score {\n  int total;\n  int average(int n) {\n    return total / n;\n  }\n}\n",
        "class Score {\n  int total;\n  int average(int n) {\n    if (n == 0) {\n      return 0;\n    }\n    return total / n;\n  }\n}\n",
        "avoid division by zero in average",
        1,
        "average crashes with division by zero",
    ),
    (
        "class Window {\n  int width;\n  int area(int height) {\n    return width * width;\n  }\n}\n",
        "class Window {\n  int width;\n  int area(int height) {\n    return width * height;\n  }\n}\n",
        "use height in window area",
        1,
        "window area ignores the height",
    ),
    (
        "class Light {\n  boolean on;\n  void toggle() {\n    on = true;\n  }\n}\n",
        "class Light {\n  boolean on;\n  void toggle() {\n    on = false;\n  }\n}\n",
        "switch light off on toggle",
        0,
        "toggle should flip the light state",
    ),
    (
        "class Range {\n  int low;\n  int high;\n  int width() {\n    return high - low;\n  }\n}\n",
        "class Range {\n  int low;\n  int high;\n  int width() {\n    return high - low + 1;\n  }\n}\n",
        "include both ends in range width",
        1,
        "range width is off by one",
    ),
    (
        "class Game {\n  int lives;\n  void hit() {\n    lives = lives - 1;\n  }\n}\n",
        "class Game {\n  int lives;\n  void hit() {\n    lives = lives - 1;\n    if (lives < 0) {\n      lives = 0;\n    }\n  }\n}\n",
        "clamp lives at zero",
        1,
        "lives go below zero after many hits",
    ),
    (
        "class Clock {\n  int hour;\n  void tick() {\n    hour = hour + 1;\n  }\n}\n",
        "class Clock {\n  int hour;\n  void tick() {\n    hour = hour + 1;\n    hour = hour * 1;\n  }\n}\n",
        "normalize hour after tick",
        0,
        "hour keeps growing past midnight",
    ),
]

# A longer file and a 3-hunk diff with ordinary 2-line context.
SAMPLE_BEFORE = """class Inventory {
  int items;
  int capacity;
  int reserved;
  boolean canAdd(int n) {
    return items + n < capacity;
  }
  void add(int n) {
    items = items + n;
  }
  void remove(int n) {
    items = items - n;
  }
  int free() {
    return capacity - items;
  }
  void reserve(int n) {
    reserved = n;
  }
  int available() {
    return items;
  }
}
"""

SAMPLE_AFTER = """class Inventory {
  int items;
  int capacity;
  int reserved;
  boolean canAdd(int n) {
    return items + n > capacity;
  }
  void add(int n) {
    items = items + n;
  }
  void remove(int n) {
    if (n > items) {
      return;
    }
    items = items - n;
  }
  int free() {
    return capacity - items;
  }
  void reserve(int n) {
    reserved = reserved + n;
  }
  int available() {
    return items - reserved;
  }
}
"""


def full_diff(before, after, name):
    a, b = before.splitlines(keepends=True), after.splitlines(keepends=True)
    n = max(len(a), len(b))
    return "".join(difflib.unified_diff(a, b, f"a/{name}", f"b/{name}", n=n))


def main():
    gen, cls = [], []
    for i, (before, after, msg, label, bug) in enumerate(PAIRS):
        name = before.split()[1] + ".java"
        d = full_diff(before, after, name)
        pid = f"toy{i:02d}"
        gen.append({"id": pid, "diff": d, "msg": msg})
        cls.append({"id": pid, "diff": d, "bug_report": bug, "label": label})
    with open(os.path.join(OUT, "toy_gen.jsonl"), "w") as f:
        f.writelines(json.dumps(r) + "\n" for r in gen)
    with open(os.path.join(OUT, "toy_correctness.jsonl"), "w") as f:
        f.writelines(json.dumps(r) + "\n" for r in cls)
    with open(os.path.join(OUT, "sample_before.java"), "w") as f:
        f.write(SAMPLE_BEFORE)
    with open(os.path.join(OUT, "sample.diff"), "w") as f:
        a, b = SAMPLE_BEFORE.splitlines(keepends=True), SAMPLE_AFTER.splitlines(keepends=True)
        f.writelines(difflib.unified_diff(a, b, "a/Inventory.java", "b/Inventory.java", n=2))
    with open(os.path.join(OUT, "sample_after.java"), "w") as f:
        f.write(SAMPLE_AFTER)


if __name__ == "__main__":
    main()
